//! Presymplectic equation `i_X ω = −dh`, pointwise constraint-algorithm
//! classification and f-relatedness checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lagrangian::MagneticLagrangianSystem;
use crate::numcore::{
    constrained_lsq_general, max_abs_vec, null_space, pinv_solve, AntisymMatrix, CONSISTENCY_TOLERANCE,
};
use crate::transform::{CompatibleTransformation, COMPATIBILITY_TOLERANCE};

/// Tolerance on vector components for f-relatedness.
pub const F_RELATED_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct PresymplecticPointData {
    pub omega: AntisymMatrix,
    pub dh: DVector<f64>,
    /// Orthonormal columns spanning `ker ω`.
    pub kernel_basis: DMatrix<f64>,
    pub consistent: bool,
    pub defect: f64,
}

impl PresymplecticPointData {
    pub fn new(omega: AntisymMatrix, dh: DVector<f64>) -> Result<Self> {
        if omega.dim() != dh.len() {
            return Err(Error::DimensionMismatch(format!("ω has dim {}, dh has length {}", omega.dim(), dh.len())));
        }
        let kernel_basis = null_space(omega.as_matrix());
        let defect = kernel_basis.column_iter().map(|k| k.dot(&dh).abs()).fold(0.0, f64::max);
        let consistent = defect < CONSISTENCY_TOLERANCE * (1.0 + dh.norm());
        Ok(Self { omega, dh, kernel_basis, consistent, defect })
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_basis.ncols()
    }

    /// `‖ωᵀx + dh‖_∞`.
    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        max_abs_vec(&(self.omega.contract(x) + &self.dh))
    }
}

/// Minimum-norm `X` with `i_X ω = ωᵀX = −dh` and `X[i] = v` for each gauge
/// entry.
pub fn solve_presymplectic(
    omega: AntisymMatrix,
    dh: DVector<f64>,
    gauge: &[(usize, f64)],
) -> Result<(PresymplecticPointData, DVector<f64>)> {
    let data = PresymplecticPointData::new(omega, dh)?;
    if !data.consistent {
        return Err(Error::InconsistentDynamics { defect: data.defect });
    }
    let mt = data.omega.as_matrix().transpose();
    let sol = match constrained_lsq_general(&mt, &(-&data.dh), gauge) {
        Ok(sol) => sol,
        Err(Error::InconsistentConstraint { residual }) => return Err(Error::InconsistentDynamics { defect: residual }),
        Err(e) => return Err(e),
    };
    if !sol.consistent {
        return Err(Error::InconsistentDynamics { defect: sol.defect });
    }
    Ok((data, sol.solution))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GnhClass {
    PrimaryConsistent,
    SecondaryRequired,
    /// Kernel rank differs from the rank seen at most probes.
    Unresolved,
}

#[derive(Clone, Debug)]
pub struct GnhPoint {
    pub class: GnhClass,
    pub kernel_dim: usize,
    pub defect: f64,
}

#[derive(Clone, Debug)]
pub struct GnhReport {
    pub points: Vec<GnhPoint>,
    /// Most frequent kernel dimension over the sample.
    pub modal_kernel_dim: usize,
}

impl GnhReport {
    /// Every sampled state passes the first-step test at the common rank.
    pub fn final_constraint_manifold(&self) -> bool {
        self.points.iter().all(|p| p.class == GnhClass::PrimaryConsistent)
    }

    pub fn count(&self, class: GnhClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }
}

/// First step of the constraint algorithm at each state: `⟨dE, ker Ω⟩ = 0`.
pub fn gnh_classify(sys: &MagneticLagrangianSystem, states: &[DVector<f64>]) -> Result<GnhReport> {
    let mut raw = Vec::with_capacity(states.len());
    for s in states {
        sys.dims.check_state(s)?;
        let data = PresymplecticPointData::new(sys.presymplectic_matrix(s)?, sys.energy_gradient(s)?)?;
        raw.push((data.kernel_dim(), data.consistent, data.defect));
    }
    let max_dim = raw.iter().map(|r| r.0).max().unwrap_or(0);
    let mut counts = vec![0usize; max_dim + 1];
    for r in &raw {
        counts[r.0] += 1;
    }
    // ties resolve to the smaller kernel (generic rank)
    let modal = counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).map_or(0, |(d, _)| d);
    let points = raw
        .into_iter()
        .map(|(kernel_dim, consistent, defect)| {
            let class = if kernel_dim != modal {
                GnhClass::Unresolved
            } else if consistent {
                GnhClass::PrimaryConsistent
            } else {
                GnhClass::SecondaryRequired
            };
            GnhPoint { class, kernel_dim, defect }
        })
        .collect();
    Ok(GnhReport { points, modal_kernel_dim: modal })
}

#[derive(Clone, Debug)]
pub struct FRelatedReport {
    pub related: bool,
    /// Max violation over the components shared by `X` and `Y`.
    pub shared_defect: f64,
    /// `‖Tψ(Y) − X‖_∞`, which also sees the `v̄` components.
    pub image_defect: f64,
    /// `‖s₂ − ψ(s₁)‖_∞`.
    pub point_defect: f64,
}

impl FRelatedReport {
    pub fn defect(&self) -> f64 {
        self.shared_defect.max(self.image_defect).max(self.point_defect)
    }
}

/// Compatibility of `X` at `s₂` with `Y` at `s₁` under `ψ`.
pub fn check_f_related(
    ct: &CompatibleTransformation,
    s1: &DVector<f64>,
    y: &DVector<f64>,
    s2: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<FRelatedReport> {
    let pair = &ct.pair;
    pair.dims1.check_state(s1)?;
    pair.dims2.check_state(s2)?;
    if y.len() != s1.len() || x.len() != s2.len() {
        return Err(Error::DimensionMismatch("tangent vectors must match their base points".into()));
    }
    let points = pair.shared_defect(s1, s2);
    if points > COMPATIBILITY_TOLERANCE * (1.0 + max_abs_vec(s2)) {
        return Err(Error::NotCompatiblePoints { defect: points });
    }
    let shared_defect = pair.shared_defect(y, x);
    let (image, jac) = ct.psi_jacobian(s1)?;
    let point_defect = max_abs_vec(&(&image - s2));
    let image_defect = max_abs_vec(&(jac * y - x));
    let related =
        shared_defect <= F_RELATED_TOLERANCE && image_defect <= F_RELATED_TOLERANCE && point_defect <= F_RELATED_TOLERANCE;
    Ok(FRelatedReport { related, shared_defect, image_defect, point_defect })
}

/// Moves `y` along the columns of `kernel` so that `Tψ(y)` best matches the
/// target `x` in the least-squares sense.
pub fn match_gauge(
    ct: &CompatibleTransformation,
    s1: &DVector<f64>,
    y: &DVector<f64>,
    kernel: &DMatrix<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if kernel.ncols() == 0 {
        return Ok(y.clone());
    }
    let (_, jac) = ct.psi_jacobian(s1)?;
    let a = &jac * kernel;
    let c = pinv_solve(&a, &(x - &jac * y));
    Ok(y + kernel * c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::BundleDims;
    use crate::numcore::DerivativeProvider;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    #[test]
    fn symplectic_form_has_unique_solution() {
        let omega = AntisymMatrix::new(dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap();
        let (data, x) = solve_presymplectic(omega, dvector![0.3, -0.7], &[]).unwrap();
        assert_eq!(data.kernel_dim(), 0);
        assert!(data.consistent);
        assert!(data.residual(&x) < 1e-15);
    }

    #[test]
    fn zero_form_with_nonzero_dh_is_inconsistent() {
        let data = PresymplecticPointData::new(AntisymMatrix::zeros(3), dvector![0.0, 1.0, 0.0]).unwrap();
        assert!(!data.consistent);
        assert!(matches!(
            solve_presymplectic(AntisymMatrix::zeros(3), dvector![0.0, 1.0, 0.0], &[]),
            Err(Error::InconsistentDynamics { .. })
        ));
    }

    fn pendulum() -> MagneticLagrangianSystem {
        let l = DerivativeProvider::new(|s| 0.5 * s[1] * s[1] + s[0].cos())
            .with_gradient(|s| dvector![-s[0].sin(), s[1]])
            .with_hessian(|s| dmatrix![-s[0].cos(), 0.0; 0.0, 1.0]);
        MagneticLagrangianSystem::new("pendulum", BundleDims::new(1, 0).unwrap(), l)
    }

    /// L = ½v² − V(p) on n = 1, k = 1: ker Ω ∋ ∂p while dE·∂p = V'(p).
    fn p_potential() -> MagneticLagrangianSystem {
        let l = DerivativeProvider::new(|s| 0.5 * s[1] * s[1] - s[2].sin())
            .with_gradient(|s| dvector![0.0, s[1], -s[2].cos()])
            .with_hessian(|s| {
                let mut h = DMatrix::zeros(3, 3);
                h[(1, 1)] = 1.0;
                h[(2, 2)] = s[2].sin();
                h
            });
        MagneticLagrangianSystem::new("p-potential", BundleDims::new(1, 1).unwrap(), l)
    }

    #[test]
    fn hyperregular_states_are_primary_consistent() {
        let states: Vec<_> = (0..10).map(|j| dvector![0.3 * j as f64, -0.1 * j as f64]).collect();
        let rep = gnh_classify(&pendulum(), &states).unwrap();
        assert!(rep.final_constraint_manifold());
        assert_eq!(rep.modal_kernel_dim, 0);
    }

    #[test]
    fn potential_on_fiber_requires_secondary_constraints() {
        let states = vec![dvector![0.0, 1.0, 0.2], dvector![0.5, -1.0, 1.0]];
        let rep = gnh_classify(&p_potential(), &states).unwrap();
        assert_eq!(rep.count(GnhClass::SecondaryRequired), 2);
        assert!(!rep.final_constraint_manifold());
        // where V'(p) = cos p = 0 the first-step test passes
        let rep = gnh_classify(&p_potential(), &[dvector![0.0, 1.0, std::f64::consts::FRAC_PI_2]]).unwrap();
        assert_eq!(rep.points[0].class, GnhClass::PrimaryConsistent);
    }

    #[test]
    fn rank_outliers_are_unresolved() {
        // kernel rank jumps where the velocity Hessian 3v² vanishes
        let l = DerivativeProvider::new(|s| s[1].powi(4) / 4.0)
            .with_gradient(|s| dvector![0.0, s[1].powi(3)])
            .with_hessian(|s| dmatrix![0.0, 0.0; 0.0, 3.0 * s[1] * s[1]]);
        let sys = MagneticLagrangianSystem::new("quartic", BundleDims::new(1, 0).unwrap(), l);
        let rep = gnh_classify(&sys, &[dvector![0.0, 1.0], dvector![0.0, 2.0], dvector![0.0, 0.0]]).unwrap();
        assert_eq!(rep.modal_kernel_dim, 0);
        assert_eq!(rep.points[2].class, GnhClass::Unresolved);
    }

    #[test]
    fn gauge_fixing_respected() {
        let sys = p_potential();
        let s = dvector![0.0, 1.0, std::f64::consts::FRAC_PI_2];
        let (data, x) =
            solve_presymplectic(sys.presymplectic_matrix(&s).unwrap(), sys.energy_gradient(&s).unwrap(), &[(2, 0.75)])
                .unwrap();
        assert_eq!(x[2], 0.75);
        assert!(data.residual(&x) < 1e-12);
    }

    proptest! {
        #[test]
        fn kernel_gauge_leaves_residual_unchanged(
            entries in proptest::collection::vec(-2.0..2.0_f64, 3),
            x0 in proptest::collection::vec(-2.0..2.0_f64, 4),
            c in -5.0..5.0_f64,
        ) {
            // rank-2 form on R⁴ with kernel spanned by e₂, e₃
            let mut m = DMatrix::zeros(4, 4);
            m[(0, 1)] = 1.0 + entries[0].abs();
            m[(1, 0)] = -m[(0, 1)];
            let omega = AntisymMatrix::new(m).unwrap();
            let x_true = DVector::from_vec(x0);
            let dh = -omega.contract(&x_true);
            let (data, x) = solve_presymplectic(omega, dh, &[]).unwrap();
            prop_assert_eq!(data.kernel_dim(), 2);
            let base = data.residual(&x);
            let gauged = &x + data.kernel_basis.column(0) * c + data.kernel_basis.column(1) * entries[1];
            prop_assert!((data.residual(&gauged) - base).abs() < 1e-12);
        }
    }
}
