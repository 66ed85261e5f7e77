use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::three_body::{CosinePotential, ThreeBodyParams};
use crate::lagrangian::{BundleDims, MagneticLagrangianSystem};
use crate::numcore::DerivativeProvider;

/// `L = ½ vᵀ M v − ½ qᵀ K q` on `TQ` with a constant magnetic term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InlineSystem {
    pub mass: Vec<Vec<f64>>,
    #[serde(default)]
    pub stiffness: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub magnetic: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Named(String),
    Inline { inline: InlineSystem },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    #[serde(default = "default_inertia")]
    pub inertia: [f64; 3],
    #[serde(default)]
    pub potential: CosinePotential,
}

fn default_inertia() -> [f64; 3] {
    [1.0, 2.0, 3.0]
}

impl Default for SystemParams {
    fn default() -> Self {
        Self { inertia: default_inertia(), potential: CosinePotential::default() }
    }
}

/// Either a full state or reduced data plus group coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialCondition {
    Full {
        q: Vec<f64>,
        v: Vec<f64>,
        #[serde(default)]
        p: Vec<f64>,
    },
    Reduced {
        reduced: Vec<f64>,
        #[serde(default)]
        group: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(default = "default_method")]
    pub method: String,
    pub h: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
}

fn default_method() -> String {
    "rk4".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub params: SystemParams,
    pub ic: InitialCondition,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub connection: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub const KNOWN_CONNECTIONS: [&str; 2] = ["mechanical", "A0"];

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn three_body_params(&self) -> ThreeBodyParams {
        ThreeBodyParams { inertia: self.params.inertia, potential: self.params.potential }
    }

    pub fn is_three_body(&self) -> bool {
        matches!(&self.system, SystemSpec::Named(n) if n == "three_body")
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.integrator.h;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("integrator.h must be positive, got {h}")));
        }
        let t = self.integrator.t_end;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("integrator.T must be positive, got {t}")));
        }
        crate::harness::integrators::step_count(h, t)?;
        if !crate::harness::integrators::integrator_registry().contains(&self.integrator.method) {
            return Err(Error::Config(format!("unknown integrator '{}'", self.integrator.method)));
        }
        if let Some(c) = &self.connection {
            if !KNOWN_CONNECTIONS.contains(&c.as_str()) {
                return Err(Error::Config(format!("unknown connection '{c}'")));
            }
        }
        if let Some(mu) = self.mu {
            if !mu.is_finite() {
                return Err(Error::Config("mu must be finite".into()));
            }
        }
        match &self.system {
            SystemSpec::Named(n) if n == "three_body" => {
                self.three_body_params().validate()?;
                match &self.ic {
                    InitialCondition::Full { q, v, p } if q.len() == 3 && v.len() == 3 && p.is_empty() => Ok(()),
                    InitialCondition::Reduced { reduced, group } if reduced.len() == 4 && group.len() <= 1 => {
                        if self.mu.is_none() {
                            return Err(Error::Config("a reduced initial condition needs mu".into()));
                        }
                        Ok(())
                    }
                    _ => Err(Error::Config("three_body ic needs q, v of length 3 or reduced of length 4".into())),
                }
            }
            SystemSpec::Named(n) => Err(Error::Config(format!("unknown system '{n}' (available: three_body, inline)"))),
            SystemSpec::Inline { inline } => {
                inline.build()?;
                match &self.ic {
                    InitialCondition::Full { q, v, p } if q.len() == inline.mass.len() && v.len() == q.len() && p.is_empty() => {
                        Ok(())
                    }
                    _ => Err(Error::Config("inline ic needs q and v matching the mass matrix".into())),
                }
            }
        }
    }
}

fn square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what} must be {n}x{n}")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{what} must be finite")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl InlineSystem {
    pub fn build(&self) -> Result<MagneticLagrangianSystem> {
        let n = self.mass.len();
        if n == 0 {
            return Err(Error::Config("inline mass matrix is empty".into()));
        }
        let m = square(&self.mass, n, "mass")?;
        if (&m - m.transpose()).amax() > 1e-12 || m.clone().cholesky().is_none() {
            return Err(Error::Config("inline mass matrix must be symmetric positive definite".into()));
        }
        let k = match &self.stiffness {
            Some(rows) => {
                let k = square(rows, n, "stiffness")?;
                (&k + k.transpose()) * 0.5
            }
            None => DMatrix::zeros(n, n),
        };
        let (m1, m2, k1, k2) = (m.clone(), m.clone(), k.clone(), k.clone());
        let l = DerivativeProvider::new(move |s| {
            let (q, v) = (s.rows(0, n).into_owned(), s.rows(n, n).into_owned());
            0.5 * v.dot(&(&m * &v)) - 0.5 * q.dot(&(&k * &q))
        })
        .with_gradient(move |s| {
            let mut g = DVector::zeros(2 * n);
            g.rows_mut(0, n).copy_from(&(-(&k1 * s.rows(0, n))));
            g.rows_mut(n, n).copy_from(&(&m1 * s.rows(n, n)));
            g
        })
        .with_hessian(move |_| {
            let mut h = DMatrix::zeros(2 * n, 2 * n);
            h.view_mut((0, 0), (n, n)).copy_from(&(-&k2));
            h.view_mut((n, n), (n, n)).copy_from(&m2);
            h
        });
        let mut sys = MagneticLagrangianSystem::new("inline", BundleDims::new(n, 0)?, l);
        if let Some(rows) = &self.magnetic {
            let b = square(rows, n, "magnetic")?;
            if (&b + b.transpose()).amax() > 1e-12 {
                return Err(Error::Config("inline magnetic term must be antisymmetric".into()));
            }
            sys = sys.with_magnetic(move |_| b.clone());
        }
        Ok(sys)
    }
}
