//! Three-body pipelines shared by suites, scenarios and the CLI.

use std::f64::consts::PI;

use nalgebra::{dvector, DVector};

use crate::error::{Error, Result};
use crate::harness::integrators::{integrate_system, Integrator};
use crate::harness::sampling::ProbeSampler;
use crate::harness::three_body::ThreeBody;
use crate::harness::Trajectory;
use crate::reduction::{routh_reduce, RouthOptions, RouthResult};

/// Routh reduction of the three-body system at `μ` with the named
/// connection; invariance and regularity are probed on seeded states.
pub fn three_body_routh(tb: &ThreeBody, connection: &str, mu: f64) -> Result<RouthResult> {
    let conn = tb.connection(connection)?;
    let probes = ProbeSampler::new(0).three_body_states(8);
    routh_reduce(&tb.system, &tb.action, &dvector![mu], &conn, None, &probes, &RouthOptions::default())
}

/// `a − b` reduced to `(−π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - 2.0 * PI * (d / (2.0 * PI)).round()
}

/// Sup-norm distance between two trajectories on the same grid; the listed
/// components are compared modulo `2π`.
pub fn sup_distance(a: &Trajectory, b: &Trajectory, components: &[usize], periodic: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("trajectories have {} and {} samples", a.len(), b.len())));
    }
    let mut worst = 0.0_f64;
    for (x, y) in a.states.iter().zip(&b.states) {
        for &c in components {
            let d = if periodic.contains(&c) { angle_diff(x[c], y[c]) } else { x[c] - y[c] };
            worst = worst.max(d.abs());
        }
    }
    Ok(worst)
}

/// Full trajectory, reduced trajectory and the reconstruction from it.
#[derive(Clone, Debug)]
pub struct ComparisonRun {
    pub connection: String,
    pub full: Trajectory,
    pub reduced: Trajectory,
    pub reconstructed: Trajectory,
    /// `sup |τ(full) − reduced|` over `(φ, ψ, φ̇, ψ̇)`.
    pub projection_deviation: f64,
    /// `sup |θ_rec − θ_full|` modulo `2π`.
    pub theta_deviation: f64,
    pub momentum_deviation: f64,
    pub energy_drift: f64,
}

/// Integrates the full system from `(θ₀, φ, ψ, θ̇(μ), φ̇, ψ̇)` and the reduced
/// system from `(φ, ψ, φ̇, ψ̇)`, then reconstructs `θ`.
#[allow(clippy::too_many_arguments)]
pub fn compare_full_and_reduced(
    tb: &ThreeBody,
    integrator: &dyn Integrator,
    connection: &str,
    mu: f64,
    reduced_ic: &DVector<f64>,
    theta0: f64,
    h: f64,
    t_end: f64,
) -> Result<ComparisonRun> {
    let p = &tb.params;
    let full0 = p.state_on_level(theta0, reduced_ic[0], reduced_ic[1], reduced_ic[2], reduced_ic[3], mu);
    let full = integrate_system(integrator, &tb.system, &full0, h, t_end)?;
    let rr = three_body_routh(tb, connection, mu)?;
    let reduced = integrate_system(integrator, &rr.reduced, reduced_ic, h, t_end)?;
    let reconstructed = rr.reconstruct(&reduced, &dvector![theta0])?;

    // full states are (θ, φ, ψ, θ̇, φ̇, ψ̇); reduced ones (φ, ψ, φ̇, ψ̇)
    let mut projected = Trajectory::new("projection");
    for (t, s) in full.times.iter().zip(&full.states) {
        projected.push(*t, rr.reduced_state(s));
    }
    let projection_deviation = sup_distance(&projected, &reduced, &[0, 1, 2, 3], &[0, 1])?;
    let theta_deviation = sup_distance(&reconstructed, &full, &[0], &[0])?;
    let e0 = p.energy(&full0);
    let mut momentum_deviation = 0.0_f64;
    let mut energy_drift = 0.0_f64;
    for s in &full.states {
        momentum_deviation = momentum_deviation.max((p.momentum(s) - mu).abs());
        energy_drift = energy_drift.max((p.energy(s) - e0).abs());
    }
    Ok(ComparisonRun {
        connection: connection.to_string(),
        full,
        reduced,
        reconstructed,
        projection_deviation,
        theta_deviation,
        momentum_deviation,
        energy_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::integrators::Rk4;
    use crate::harness::three_body::{build_three_body, ThreeBodyParams};

    #[test]
    fn angle_difference_wraps() {
        assert!((angle_diff(3.0, -3.0) - (6.0 - 2.0 * PI)).abs() < 1e-15);
        assert_eq!(angle_diff(0.5, 0.25), 0.25);
    }

    #[test]
    fn short_comparison_agrees() {
        let tb = build_three_body(ThreeBodyParams::default()).unwrap();
        let run = compare_full_and_reduced(&tb, &Rk4, "A0", 0.5, &dvector![0.3, -0.2, 0.1, 0.05], 0.0, 1e-2, 0.5)
            .unwrap();
        assert!(run.projection_deviation < 1e-8, "{}", run.projection_deviation);
        assert!(run.theta_deviation < 1e-8, "{}", run.theta_deviation);
    }

    #[test]
    fn free_zero_velocity_rotates_uniformly() {
        // V ≡ 0, reduced velocities 0: θ = θ₀ + μ t / ΣI
        let mut params = ThreeBodyParams::default();
        params.potential.coefficients = [0.0; 3];
        let tb = build_three_body(params).unwrap();
        let run = compare_full_and_reduced(&tb, &Rk4, "mechanical", 0.6, &dvector![0.3, -0.2, 0.0, 0.0], 0.1, 0.05, 1.0)
            .unwrap();
        for (t, s) in run.reconstructed.times.iter().zip(&run.reconstructed.states) {
            assert!((s[0] - (0.1 + 0.6 * t / 6.0)).abs() < 1e-12);
        }
    }
}
