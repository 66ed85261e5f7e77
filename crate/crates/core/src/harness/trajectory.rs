use nalgebra::DVector;

use crate::error::{Error, Result};

/// Uniformly sampled states of one system.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub system_id: String,
    pub momentum_tag: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn new(system_id: impl Into<String>) -> Self {
        Self { times: Vec::new(), states: Vec::new(), system_id: system_id.into(), momentum_tag: None }
    }

    pub fn with_momentum(mut self, mu: &[f64]) -> Self {
        self.momentum_tag = Some(mu.to_vec());
        self
    }

    pub fn push(&mut self, t: f64, state: DVector<f64>) {
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn last(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    /// Sample spacing; requires at least two samples.
    pub fn step(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::TooShort { len: self.times.len(), need: 2 });
        }
        Ok(self.times[1] - self.times[0])
    }

    /// Checks uniform spacing within 1e-12 (relative to the final time) and
    /// consistent state lengths.
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times but {} states",
                self.times.len(),
                self.states.len()
            )));
        }
        let dim = self.state_dim();
        if let Some(bad) = self.states.iter().position(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch(format!("state {bad} has inconsistent length")));
        }
        if self.times.len() >= 2 {
            let h = self.step()?;
            let t0 = self.times[0];
            let scale = 1.0 + self.times.last().map_or(0.0, |t| t.abs());
            for (j, t) in self.times.iter().enumerate() {
                if (t - (t0 + j as f64 * h)).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!("non-uniform time step at sample {j}")));
                }
            }
        }
        Ok(())
    }

    /// Column `i` of the state history.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_validates() {
        let mut tr = Trajectory::new("t");
        for j in 0..11 {
            tr.push(j as f64 * 0.1, DVector::from_element(2, j as f64));
        }
        tr.validate().unwrap();
        assert!((tr.step().unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(tr.component(1)[3], 3.0);
    }

    #[test]
    fn ragged_grid_is_rejected() {
        let mut tr = Trajectory::new("t");
        tr.push(0.0, DVector::zeros(1));
        tr.push(0.1, DVector::zeros(1));
        tr.push(0.25, DVector::zeros(1));
        assert!(tr.validate().is_err());
    }
}
