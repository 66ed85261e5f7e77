//! Named verification suites over the three-body example.

use std::sync::Arc;

use nalgebra::{dvector, DVector};

use crate::error::Result;
use crate::hamside::{momentum_shift_check, HamTransformation};
use crate::harness::experiments::three_body_routh;
use crate::harness::integrators::{observed_order, Rk4};
use crate::harness::registry::Registry;
use crate::harness::report::VerificationReport;
use crate::harness::sampling::ProbeSampler;
use crate::harness::three_body::ThreeBody;
use crate::numcore::{max_abs, max_abs_vec, DerivativeMode, DEFAULT_FD_STEP};
use crate::presym::{gnh_classify, solve_presymplectic, GnhClass};
use crate::reduction::{verify_bmu_reducible, verify_projection, RouthResult};
use crate::transform::{BetaMap, CompatibleTransformation, TangencyProbe};

pub const CONNECTIONS: [&str; 2] = ["mechanical", "A0"];

/// Inputs shared by every suite.
#[derive(Clone, Debug)]
pub struct SuiteContext {
    pub three_body: ThreeBody,
    pub mu: f64,
    pub seed: u64,
    pub probes: usize,
}

impl SuiteContext {
    pub fn sampler(&self) -> ProbeSampler {
        ProbeSampler::new(self.seed)
    }

    fn report(&self, check: String, max: f64, tol: f64) -> VerificationReport {
        VerificationReport::new(check, self.probes, max, tol).with_seed(self.seed)
    }

    /// Runs `f`, turning an error into a failed report.
    fn guarded(&self, check: &str, tol: f64, f: impl FnOnce() -> Result<f64>) -> VerificationReport {
        match f() {
            Ok(v) => self.report(check.to_string(), v, tol),
            Err(e) => VerificationReport::failed(check, self.probes, tol, e).with_seed(self.seed),
        }
    }
}

pub trait VerificationSuite: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &SuiteContext) -> Vec<VerificationReport>;
}

pub fn suite_registry() -> Registry<dyn VerificationSuite> {
    let mut r: Registry<dyn VerificationSuite> = Registry::new("suite");
    r.register("normal_form", Arc::new(NormalFormSuite));
    r.register("routhian", Arc::new(RouthianSuite));
    r.register("pullback", Arc::new(PullbackSuite));
    r.register("tangency", Arc::new(TangencySuite));
    r.register("reducibility", Arc::new(ReducibilitySuite));
    r.register("presym", Arc::new(PresymSuite));
    r.register("hamiltonian", Arc::new(HamiltonianSuite));
    r.register("hygiene", Arc::new(HygieneSuite));
    r
}

fn routh(ctx: &SuiteContext, conn: &str) -> Result<RouthResult> {
    three_body_routh(&ctx.three_body, conn, ctx.mu)
}

/// Assembled EL field against the closed-form normal form.
pub struct NormalFormSuite;

impl VerificationSuite for NormalFormSuite {
    fn name(&self) -> &'static str {
        "normal_form"
    }

    fn run(&self, ctx: &SuiteContext) -> Vec<VerificationReport> {
        let states = ctx.sampler().three_body_states(ctx.probes);
        let tb = &ctx.three_body;
        vec![ctx.guarded("normal_form", 1e-8, || {
            let mut worst = 0.0_f64;
            for s in &states {
                let x = tb.system.el_vector_field(s)?.xdot;
                let nf = tb.params.normal_form(s[1], s[2]);
                for i in 0..3 {
                    worst = worst.max((x[3 + i] - nf[i]).abs()).max((x[i] - s[3 + i]).abs());
                }
            }
            Ok(worst)
        })]
    }
}

/// Velocity derivatives of the reduced Lagrangian against the reference
/// Routhians.
pub struct RouthianSuite;

impl RouthianSuite {
    /// `max |∂²L̄/∂v∂v − reference mass matrix|` at `(φ, ψ, φ̇, ψ̇)` probes.
    pub fn mass_matrix_defect(rr: &RouthResult, ctx: &SuiteContext, probes: &[DVector<f64>]) -> Result<f64> {
        let expected = ctx.three_body.params.routhian_mass_matrix();
        let mut worst = 0.0_f64;
        for r in probes {
            let h = rr.reduced.lagrangian.hessian(r)?;
            worst = worst.max(max_abs(&(h.view((2, 2), (2, 2)) - &expected)));
        }
        Ok(worst)
    }

    /// `∂L̄/∂v` at zero velocity, i.e. the velocity-linear coefficients.
    pub fn linear_terms(rr: &RouthResult, phi: f64, psi: f64) -> Result<(f64, f64)> {
        let g = rr.reduced.lagrangian.gradient(&dvector![phi, psi, 0.0, 0.0])?;
        Ok((g[2], g[3]))
    }
}

impl VerificationSuite for RouthianSuite {
    fn name(&self) -> &'static str {
        "routhian"
    }

    fn run(&self, ctx: &SuiteContext) -> Vec<VerificationReport> {
        let mut s = ctx.sampler();
        let probes: Vec<DVector<f64>> = (0..ctx.probes).map(|_| s.state(2, 2, 1.0)).collect();
        let params = ctx.three_body.params;
        let mu = ctx.mu;
        let mut out = Vec::new();
        for conn in CONNECTIONS {
            out.push(ctx.guarded(&format!("routhian/{conn}/mass_matrix"), 1e-8, || {
                Self::mass_matrix_defect(&routh(ctx, conn)?, ctx, &probes)
            }));
        }
        out.push(ctx.guarded("routhian/mechanical/linear_terms", 1e-8, || {
            let rr = routh(ctx, "mechanical")?;
            let mut worst = 0.0_f64;
            for r in &probes {
                let (a, b) = Self::linear_terms(&rr, r[0], r[1])?;
                worst = worst.max(a.abs()).max(b.abs());
            }
            Ok(worst)
        }));
        // hand derivation: μ((I₂+I₃)/ΣI − cos ψ) and μ I₃/ΣI
        out.push(ctx.guarded("routhian/A0/linear_terms_derived", 1e-8, || {
            let rr = routh(ctx, "A0")?;
            let (gp, gs) = params.mechanical_coefficients();
            let mut worst = 0.0_f64;
            for r in &probes {
                let (a, b) = Self::linear_terms(&rr, r[0], r[1])?;
                worst = worst.max((a - mu * (gp - r[1].cos())).abs()).max((b - mu * gs).abs());
            }
            Ok(worst)
        }));
        out.push(ctx.guarded("routhian/A0/linear_terms_reference", 1e-8, || {
            let rr = routh(ctx, "A0")?;
            let mut worst = 0.0_f64;
            for r in &probes {
                let (a, b) = Self::linear_terms(&rr, r[0], r[1])?;
                let (pa, pb) = params.reference_a0_linear_terms(mu, r[1]);
                worst = worst.max((a - pa).abs()).max((b - pb).abs());
            }
            Ok(worst)
        }));
        out
    }
}

/// `ψ*Ω₂ = Ω₁` and `ψ*E₂ = E₁` with exact and difference derivatives.
pub struct PullbackSuite;

impl VerificationSuite for PullbackSuite {
    fn name(&self) -> &'static str {
        "pullback"
    }

    fn run(&self, ctx: &SuiteContext) -> Vec<VerificationReport> {
        let probes = ctx.sampler().intermediate_states(ctx.probes);
        let mut out = Vec::new();
        for conn in CONNECTIONS {
            for (mode, label, tol) in
                [(DerivativeMode::Exact, "exact", 1e-8), (DerivativeMode::FiniteDifference, "fd", 1e-5)]
            {
                let r = ctx.guarded(&format!("pullback/{conn}/{label}"), tol, || {
                    let ct = routh(ctx, conn)?.transformation.with_mode(mode);
                    let rep = ct.verify_pullback_identities(&ct.induced_system(), &probes)?;
                    Ok(rep.omega_violation.max(rep.energy_violation))
                });
                out.push(if mode == DerivativeMode::FiniteDifference { r.with_default_fd_step() } else { r });
            }
        }
        out
    }
}

/// Tangency defect of the full EL field along the image of `ψ`.
pub struct TangencySuite;

/// `β = μ + 0.5 sin θ` on `P₁ = (φ, ψ, θ)`.
pub fn perturbed_beta(mu: f64) -> BetaMap {
    BetaMap::new(move |p| dvector![mu + 0.5 * p[2].sin()])
}

pub fn tangency_defect(ct: &CompatibleTransformation, probes: &[DVector<f64>]) -> Result<f64> {
    let sys = ct.source.clone();
    let tp: Vec<TangencyProbe> = probes.iter().cloned().map(TangencyProbe::Source).collect();
    Ok(ct.verify_tangency(&|s| Ok(sys.el_vector_field(s)?.xdot), &tp)?.max_defect)
}

impl VerificationSuite for TangencySuite {
    fn name(&self) -> &'static str {
        "tangency"
    }

    fn run(&self, ctx: &SuiteContext) -> Vec<VerificationReport> {
        let probes = ctx.sampler().intermediate_states(ctx.probes);
        let mut out = Vec::new();
        for conn in CONNECTIONS {
            out.push(ctx.guarded(&format!("tangency/{conn}"), 1e-8, || {
                tangency_defect(&routh(ctx, conn)?.transformation, &probes)
            }));
        }
        let check = "tangency/perturbed_beta";
        out.push(match routh(ctx, "mechanical").and_then(|rr| {
            let t = rr.transformation;
            let ct = CompatibleTransformation::new(t.pair, t.source, perturbed_beta(ctx.mu), t.connection)?;
            tangency_defect(&ct, &probes)
        }) {
            Ok(d) => VerificationReport::lower_bound(check, ctx.probes, d, 1e-3).with_seed(ctx.seed),
            Err(e) => VerificationReport::failed(check, ctx.probes, 1.0, e).with_seed(ctx.seed),
        });
        out
    }
}

/// Magnetic term of the reduced system and the projection identities.
pub struct ReducibilitySuite;

impl VerificationSuite for ReducibilitySuite {
    fn name(&self) -> &'static str {
        "reducibility"
    }

    fn run(&self, ctx: &SuiteContext) -> Vec<VerificationReport> {
        let probes = ctx.sampler().intermediate_states(ctx.probes);
        let points: Vec<DVector<f64>> = probes.iter().map(|s| dvector![s[0], s[1], s[4]]).collect();
        let mu = ctx.mu;
        let mut out = Vec::new();
        out.push(ctx.guarded("magnetic/A0", 1e-8, || {
            let rr = routh(ctx, "A0")?;
            let mut worst = 0.0_f64;
            for p in &points {
                let b = rr.intermediate.magnetic_form(p)?;
                let mut expected = crate::numcore::AntisymMatrix::zeros(3);
                expected.set(0, 1, mu * p[1].sin());
                worst = worst.max(b.max_abs_diff(&expected));
            }
            Ok(worst)
        }));
        out.push(ctx.guarded("magnetic/mechanical", 1e-10, || {
            let rr = routh(ctx, "mechanical")?;
            let mut worst = 0.0_f64;
            for p in &points {
                worst = worst.max(max_abs(rr.intermediate.magnetic_form(p)?.as_matrix()));
            }
            Ok(worst)
        }));
        for conn in CONNECTIONS {
            out.push(ctx.guarded(&format!("bmu_reducible/{conn}"), 1e-10, || {
                let rr = routh(ctx, conn)?;
                Ok(verify_bmu_reducible(&rr.intermediate, &rr.fiberwise, &points)?.max())
            }));
            out.push(ctx.guarded(&format!("projection/{conn}"), 1e-8, || {
                let rr = routh(ctx, conn)?;
                let rep = verify_projection(&rr.intermediate, &rr.reduced, &rr.fiberwise, &probes)?;
                Ok(rep.omega.max(rep.energy))
            }));
            out.push(ctx.guarded(&format!("fiber_derivative_commutes/{conn}"), 1e-10, || {
                let rr = routh(ctx, conn)?;
                Ok(verify_projection(&rr.intermediate, &rr.reduced, &rr.fiberwise, &probes)?.fiber_derivative)
            }));
        }
        out
    }
}

/// Kernel, constraint-algorithm classification and gauge freedom of the
/// intermediate system.
pub struct PresymSuite;

impl VerificationSuite for PresymSuite {
    fn name(&self) -> &'static str {
        "presym"
    }

    fn run(&self, ctx: &SuiteContext) -> Vec<VerificationReport> {
        let probes = ctx.sampler().intermediate_states(ctx.probes);
        let mut gauges = ProbeSampler::new(ctx.seed ^ 0x9e37_79b9);
        let coeffs: Vec<f64> = (0..ctx.probes).map(|_| gauges.uniform(-1.0, 1.0)).collect();
        let mut out = Vec::new();
        for conn in CONNECTIONS {
            out.push(ctx.guarded(&format!("presym/{conn}/kernel_dim"), 0.0, || {
                let rr = routh(ctx, conn)?;
                let rep = gnh_classify(&rr.intermediate, &probes)?;
                Ok(rep.points.iter().map(|p| (p.kernel_dim as f64 - 1.0).abs()).fold(0.0, f64::max))
            }));
            out.push(ctx.guarded(&format!("presym/{conn}/primary_consistent"), 0.0, || {
                let rr = routh(ctx, conn)?;
                let rep = gnh_classify(&rr.intermediate, &probes)?;
                Ok((rep.points.len() - rep.count(GnhClass::PrimaryConsistent)) as f64)
            }));
            out.push(ctx.guarded(&format!("presym/{conn}/gauge_residual"), 1e-12, || {
                let rr = routh(ctx, conn)?;
                let mut worst = 0.0_f64;
                for (s, c) in probes.iter().zip(&coeffs) {
                    let omega = rr.intermediate.presymplectic_matrix(s)?;
                    let de = rr.intermediate.energy_gradient(s)?;
                    let (data, x) = solve_presymplectic(omega, de, &[])?;
                    let base = data.residual(&x);
                    for k in data.kernel_basis.column_iter() {
                        worst = worst.max((data.residual(&(&x + k * *c)) - base).abs());
                    }
                }
                Ok(worst)
            }));
            out.push(ctx.guarded(&format!("presym/{conn}/matches_reduced"), 1e-8, || {
                let rr = routh(ctx, conn)?;
                let mut worst = 0.0_f64;
                for s in &probes {
                    let x = rr.intermediate.el_vector_field(s)?.xdot;
                    let y = rr.reduced.el_vector_field(&rr.fiberwise.project_state(s))?.xdot;
                    worst = worst.max(max_abs_vec(&(rr.fiberwise.project_state(&x) - y)));
                }
                Ok(worst)
            }));
        }
        out
    }
}

/// `ψ_{A,β}` pullback and the momentum shift on the cotangent side.
pub struct HamiltonianSuite;

impl VerificationSuite for HamiltonianSuite {
    fn name(&self) -> &'static str {
        "hamiltonian"
    }

    fn run(&self, ctx: &SuiteContext) -> Vec<VerificationReport> {
        let tb = &ctx.three_body;
        let mut sampler = ctx.sampler();
        let cov1 = sampler.intermediate_states(ctx.probes);
        let level: Vec<DVector<f64>> = (0..ctx.probes)
            .map(|_| {
                let mut s = sampler.state(3, 3, 1.0);
                s[3] = ctx.mu;
                s
            })
            .collect();
        let mut out = Vec::new();
        for conn in CONNECTIONS {
            out.push(ctx.guarded(&format!("ham_pullback/{conn}"), 1e-8, || {
                let t = routh(ctx, conn)?.transformation;
                let ht = HamTransformation::new(t.pair, BetaMap::constant(dvector![ctx.mu], 3), t.connection)?;
                Ok(ht.verify_pullback(&tb.hamiltonian()?, &cov1)?.omega_violation)
            }));
            out.push(ctx.guarded(&format!("momentum_shift/{conn}"), 1e-12, || {
                let rep = momentum_shift_check(&tb.hamiltonian()?, &tb.action, &dvector![ctx.mu], &tb.connection(conn)?, &level)?;
                Ok(rep.shifted_momentum.max(rep.round_trip))
            }));
        }
        out
    }
}

/// Exact against difference derivatives, and the integrator order.
pub struct HygieneSuite;

impl VerificationSuite for HygieneSuite {
    fn name(&self) -> &'static str {
        "hygiene"
    }

    fn run(&self, ctx: &SuiteContext) -> Vec<VerificationReport> {
        let tb = &ctx.three_body;
        let mut sampler = ctx.sampler();
        let full = sampler.three_body_states(ctx.probes);
        let inter = sampler.intermediate_states(ctx.probes);
        let mut out = Vec::new();
        out.push(
            ctx.guarded("derivatives/full", 1e-5, || {
                let mut worst = 0.0_f64;
                for s in &full {
                    let cc = tb.system.lagrangian.cross_check(s)?;
                    worst = worst.max(cc.gradient.unwrap_or(0.0)).max(cc.hessian.unwrap_or(0.0));
                }
                Ok(worst)
            })
            .with_default_fd_step(),
        );
        for conn in CONNECTIONS {
            out.push(
                ctx.guarded(&format!("derivatives/induced/{conn}"), 1e-5, || {
                    let rr = routh(ctx, conn)?;
                    let mut worst = 0.0_f64;
                    for s in &inter {
                        let cc = rr.intermediate.lagrangian.cross_check(s)?;
                        worst = worst.max(cc.gradient.unwrap_or(0.0)).max(cc.hessian.unwrap_or(0.0));
                        let (_, exact) = rr.transformation.psi_jacobian(s)?;
                        let (_, fd) = rr.transformation.clone().with_mode(DerivativeMode::FiniteDifference).psi_jacobian(s)?;
                        worst = worst.max(max_abs(&(exact - fd)));
                    }
                    Ok(worst)
                })
                .with_fd_step(DEFAULT_FD_STEP),
            );
        }
        let order = VerificationReport::new("rk4_order", 1, f64::NAN, 1.0);
        out.push(match rk4_order(tb) {
            Ok(p) => VerificationReport::lower_bound("rk4_order", 1, p, 3.9).with_h(RK4_ORDER_H),
            Err(e) => VerificationReport { error: Some(e.to_string()), ..order },
        });
        out
    }
}

pub const RK4_ORDER_H: f64 = 0.1;

/// Observed order from endpoint differences at `h`, `h/2`, `h/4` on the
/// three-body system over `t ∈ [0, 2]`.
pub fn rk4_order(tb: &ThreeBody) -> Result<f64> {
    let s0 = tb.params.state_on_level(0.0, 0.3, -0.2, 0.1, 0.05, 0.5);
    let sys = tb.system.clone();
    observed_order(&Rk4, &|s| Ok(sys.el_vector_field(s)?.xdot), &s0, RK4_ORDER_H, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::report::all_pass;
    use crate::harness::three_body::{build_three_body, ThreeBodyParams};

    fn ctx() -> SuiteContext {
        SuiteContext { three_body: build_three_body(ThreeBodyParams::default()).unwrap(), mu: 0.5, seed: 42, probes: 5 }
    }

    #[test]
    fn structural_suites_pass_on_few_probes() {
        let reg = suite_registry();
        for name in ["normal_form", "pullback", "tangency", "reducibility", "presym", "hamiltonian", "hygiene"] {
            let reports = reg.get(name).unwrap().run(&ctx());
            assert!(all_pass(&reports), "{name}: {reports:#?}");
        }
    }

    #[test]
    fn reference_a0_coefficients_disagree_with_the_derivation() {
        let reports = RouthianSuite.run(&ctx());
        let by = |n: &str| reports.iter().find(|r| r.check == n).unwrap().clone();
        assert!(by("routhian/mechanical/mass_matrix").pass);
        assert!(by("routhian/A0/mass_matrix").pass);
        assert!(by("routhian/A0/linear_terms_derived").pass);
        assert!(!by("routhian/A0/linear_terms_reference").pass);
    }
}
