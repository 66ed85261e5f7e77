use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::harness::registry::Registry;
use crate::harness::Trajectory;
use crate::lagrangian::MagneticLagrangianSystem;
use crate::numcore::{central_jacobian, max_abs_vec, newton_solve, NewtonOptions, DEFAULT_FD_STEP};

/// Autonomous vector field `ẋ = f(x)`.
pub type Field<'a> = dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + 'a;

/// One-step method with a fixed step.
pub trait Integrator: Send + Sync {
    fn name(&self) -> &'static str;
    fn step(&self, f: &Field<'_>, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>;
}

/// Classical fourth-order Runge-Kutta.
pub struct Rk4;

impl Integrator for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn step(&self, f: &Field<'_>, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
        let k1 = f(x)?;
        let k2 = f(&(x + &k1 * (h / 2.0)))?;
        let k3 = f(&(x + &k2 * (h / 2.0)))?;
        let k4 = f(&(x + &k3 * h))?;
        Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0))
    }
}

/// Implicit midpoint rule `y = x + h f((x + y)/2)`, solved by Newton with
/// a difference-quotient Jacobian.
pub struct ImplicitMidpoint {
    pub newton: NewtonOptions,
}

impl Default for ImplicitMidpoint {
    fn default() -> Self {
        Self { newton: NewtonOptions { tol: 1e-13, max_iter: 50 } }
    }
}

impl Integrator for ImplicitMidpoint {
    fn name(&self) -> &'static str {
        "implicit_midpoint"
    }

    fn step(&self, f: &Field<'_>, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
        let dim = x.len();
        let guess = x + f(x)? * h;
        let residual = |y: &DVector<f64>| -> Result<DVector<f64>> { Ok(y - x - f(&((x + y) * 0.5))? * h) };
        let out = newton_solve(
            residual,
            |y| {
                let j = central_jacobian(
                    &|z| residual(z).unwrap_or_else(|_| DVector::from_element(dim, f64::NAN)),
                    y,
                    DEFAULT_FD_STEP,
                );
                if j.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteEvaluation("midpoint Jacobian".into()));
                }
                Ok(j)
            },
            &guess,
            &self.newton,
        )?;
        Ok(out.x)
    }
}

pub fn integrator_registry() -> Registry<dyn Integrator> {
    let mut r: Registry<dyn Integrator> = Registry::new("integrator");
    r.register("rk4", Arc::new(Rk4));
    r.register("implicit_midpoint", Arc::new(ImplicitMidpoint::default()));
    r
}

/// Fixed-step integration on `[0, T]`; `T/h` must be an integer within
/// 1e-9.
pub fn integrate(
    integrator: &dyn Integrator,
    f: &Field<'_>,
    x0: &DVector<f64>,
    h: f64,
    t_end: f64,
    system_id: &str,
) -> Result<Trajectory> {
    let steps = step_count(h, t_end)?;
    let mut traj = Trajectory::new(system_id);
    traj.push(0.0, x0.clone());
    let mut x = x0.clone();
    for j in 0..steps {
        let t = j as f64 * h;
        x = integrator.step(f, &x, h).map_err(|e| Error::Integration { t, source: Box::new(e) })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { t, source: Box::new(Error::NonFiniteEvaluation("state".into())) });
        }
        traj.push((j + 1) as f64 * h, x.clone());
    }
    Ok(traj)
}

pub fn step_count(h: f64, t_end: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("step h must be positive and finite, got {h}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("final time must be non-negative, got {t_end}")));
    }
    let n = (t_end / h).round();
    if (n * h - t_end).abs() > 1e-9 * (1.0 + t_end) {
        return Err(Error::Config(format!("T = {t_end} is not a multiple of h = {h}")));
    }
    Ok(n as usize)
}

/// Euler-Lagrange flow of a system.
pub fn integrate_system(
    integrator: &dyn Integrator,
    sys: &MagneticLagrangianSystem,
    s0: &DVector<f64>,
    h: f64,
    t_end: f64,
) -> Result<Trajectory> {
    sys.dims.check_state(s0)?;
    integrate(integrator, &|s| Ok(sys.el_vector_field(s)?.xdot), s0, h, t_end, &sys.id)
}

pub fn integrate_rk4(sys: &MagneticLagrangianSystem, s0: &DVector<f64>, h: f64, t_end: f64) -> Result<Trajectory> {
    integrate_system(&Rk4, sys, s0, h, t_end)
}

/// Observed convergence order from endpoints at `h`, `h/2`, `h/4`.
pub fn observed_order(integrator: &dyn Integrator, f: &Field<'_>, x0: &DVector<f64>, h: f64, t_end: f64) -> Result<f64> {
    let end = |h: f64| -> Result<DVector<f64>> {
        integrate(integrator, f, x0, h, t_end, "order")?.last().cloned().ok_or(Error::TooShort { len: 0, need: 1 })
    };
    let (a, b, c) = (end(h)?, end(h / 2.0)?, end(h / 4.0)?);
    Ok((max_abs_vec(&(&a - &b)) / max_abs_vec(&(&b - &c))).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::BundleDims;
    use crate::numcore::DerivativeProvider;
    use nalgebra::dvector;

    fn oscillator(x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(dvector![x[1], -x[0]])
    }

    #[test]
    fn free_particle_moves_uniformly() {
        let l = DerivativeProvider::new(|s| 0.5 * s[1] * s[1]).with_gradient(|s| dvector![0.0, s[1]]);
        let sys = MagneticLagrangianSystem::new("free", BundleDims::new(1, 0).unwrap(), l);
        let tr = integrate_rk4(&sys, &dvector![0.25, 1.0], 0.01, 1.0).unwrap();
        assert_eq!(tr.len(), 101);
        assert!((tr.last().unwrap()[0] - 1.25).abs() < 1e-12);
        tr.validate().unwrap();
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = observed_order(&Rk4, &oscillator, &dvector![1.0, 0.0], 0.1, 2.0).unwrap();
        assert!(p > 3.9, "{p}");
    }

    #[test]
    fn midpoint_is_second_order_and_conserves_quadratics() {
        let im = ImplicitMidpoint::default();
        let p = observed_order(&im, &oscillator, &dvector![1.0, 0.0], 0.1, 2.0).unwrap();
        assert!((p - 2.0).abs() < 0.1, "{p}");
        let tr = integrate(&im, &oscillator, &dvector![1.0, 0.0], 0.1, 50.0, "osc").unwrap();
        let e = |x: &DVector<f64>| x.norm_squared();
        assert!((e(tr.last().unwrap()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bad_steps_are_config_errors() {
        assert!(matches!(step_count(0.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(step_count(0.3, 1.0), Err(Error::Config(_))));
        assert_eq!(step_count(1e-3, 10.0).unwrap(), 10_000);
    }

    #[test]
    fn failures_carry_the_time() {
        let f = |x: &DVector<f64>| if x[0] > 0.5 { Err(Error::NotMechanical) } else { Ok(dvector![1.0]) };
        let err = integrate(&Rk4, &f, &dvector![0.0], 0.1, 1.0, "t").unwrap_err();
        match err {
            Error::Integration { t, .. } => assert!((t - 0.4).abs() < 1e-12 || (t - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn registry_has_both_methods() {
        let r = integrator_registry();
        assert_eq!(r.get("rk4").unwrap().name(), "rk4");
        assert_eq!(r.get("implicit_midpoint").unwrap().name(), "implicit_midpoint");
    }
}
