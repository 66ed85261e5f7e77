//! Magnetic Lagrangian systems `(ε: P → Q, L, B)` in adapted coordinates.
//!
//! The presymplectic matrix uses the convention `M[I][J] = Ω(∂_I, ∂_J)`, so
//! the interior product `i_X Ω` is `Mᵀ X` and the Euler-Lagrange equation
//! reads `Mᵀ X = −dE`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::Trajectory;
use crate::numcore::{
    self, condition_number, constrained_lsq_general, exterior_derivative_2form, max_abs_vec,
    null_space, AntisymMatrix, DerivativeProvider, MatrixFn, CONSISTENCY_TOLERANCE,
};

/// Velocity-block norm above which a leftover kernel direction makes the
/// dynamics ambiguous.
pub const AMBIGUITY_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleDims {
    pub n: usize,
    pub k: usize,
}

impl BundleDims {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("base dimension must be at least 1".into()));
        }
        Ok(Self { n, k })
    }

    /// Length of a `T_PQ` state `(q, v, p)`.
    pub fn state_len(&self) -> usize {
        2 * self.n + self.k
    }

    /// Length of a `P` point `(q, p)`.
    pub fn point_len(&self) -> usize {
        self.n + self.k
    }

    pub fn check_state(&self, s: &DVector<f64>) -> Result<()> {
        if s.len() != self.state_len() {
            return Err(Error::DimensionMismatch(format!(
                "state has length {}, expected {}",
                s.len(),
                self.state_len()
            )));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEvaluation("state".into()));
        }
        Ok(())
    }

    /// `(q, p)` part of a state.
    pub fn point_of(&self, s: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.point_len());
        x.rows_mut(0, self.n).copy_from(&s.rows(0, self.n));
        x.rows_mut(self.n, self.k).copy_from(&s.rows(2 * self.n, self.k));
        x
    }

    /// Index in the state vector of `P`-coordinate `i`.
    pub fn state_index_of_point(&self, i: usize) -> usize {
        if i < self.n {
            i
        } else {
            i + self.n
        }
    }
}

/// Structured view of a state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTPQ {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub p: DVector<f64>,
}

impl StateTPQ {
    pub fn from_vector(dims: BundleDims, s: &DVector<f64>) -> Result<Self> {
        dims.check_state(s)?;
        Ok(Self {
            q: s.rows(0, dims.n).into_owned(),
            v: s.rows(dims.n, dims.n).into_owned(),
            p: s.rows(2 * dims.n, dims.k).into_owned(),
        })
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.q.len() + self.v.len() + self.p.len());
        s.rows_mut(0, self.q.len()).copy_from(&self.q);
        s.rows_mut(self.q.len(), self.v.len()).copy_from(&self.v);
        s.rows_mut(self.q.len() + self.v.len(), self.p.len()).copy_from(&self.p);
        s
    }
}

/// `L` on `T_PQ` plus an optional closed 2-form `B` on `P`.
#[derive(Clone)]
pub struct MagneticLagrangianSystem {
    pub id: String,
    pub dims: BundleDims,
    pub lagrangian: DerivativeProvider,
    magnetic: Option<MatrixFn>,
    pub periodic_coords: Vec<usize>,
}

impl std::fmt::Debug for MagneticLagrangianSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MagneticLagrangianSystem")
            .field("id", &self.id)
            .field("dims", &self.dims)
            .field("magnetic", &self.magnetic.is_some())
            .finish()
    }
}

/// Derivatives of `L` at one state, shared by the energy and `Ω` assembly.
#[derive(Clone, Debug)]
pub struct LocalJet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct ElSolution {
    pub xdot: DVector<f64>,
    /// Kernel dimension left after fixing `x_q = v`.
    pub kernel_dim: usize,
}

#[derive(Clone, Debug)]
pub struct ElResidual {
    /// `(sample index, residual)` for every interior sample.
    pub per_sample: Vec<(usize, f64)>,
    pub max: f64,
}

#[derive(Clone, Debug)]
pub struct RegularityProbe {
    pub velocity_hessian_condition: f64,
    pub velocity_hessian_invertible: bool,
    pub omega_kernel_dim: usize,
}

#[derive(Clone, Debug)]
pub struct RegularityReport {
    pub probes: Vec<RegularityProbe>,
}

impl RegularityReport {
    pub fn regular(&self) -> bool {
        self.probes.iter().all(|p| p.velocity_hessian_invertible)
    }

    pub fn nondegenerate(&self) -> bool {
        self.probes.iter().all(|p| p.omega_kernel_dim == 0)
    }
}

/// Condition numbers above this count as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

impl MagneticLagrangianSystem {
    pub fn new(id: impl Into<String>, dims: BundleDims, lagrangian: DerivativeProvider) -> Self {
        Self { id: id.into(), dims, lagrangian, magnetic: None, periodic_coords: Vec::new() }
    }

    pub fn with_magnetic(
        mut self,
        b: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.magnetic = Some(Arc::new(b));
        self
    }

    pub fn with_periodic(mut self, coords: Vec<usize>) -> Self {
        self.periodic_coords = coords;
        self
    }

    pub fn has_magnetic(&self) -> bool {
        self.magnetic.is_some()
    }

    /// `B` at a `P`-point, antisymmetrized.
    pub fn magnetic_form(&self, point: &DVector<f64>) -> Result<AntisymMatrix> {
        let dim = self.dims.point_len();
        match &self.magnetic {
            None => Ok(AntisymMatrix::zeros(dim)),
            Some(b) => {
                let m = b(point);
                if m.shape() != (dim, dim) {
                    return Err(Error::DimensionMismatch(format!(
                        "magnetic form is {}x{}, expected {dim}x{dim}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                if m.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteEvaluation("magnetic form".into()));
                }
                AntisymMatrix::new(m)
            }
        }
    }

    pub fn jet(&self, s: &DVector<f64>) -> Result<LocalJet> {
        self.dims.check_state(s)?;
        Ok(LocalJet {
            value: self.lagrangian.value(s)?,
            gradient: self.lagrangian.gradient(s)?,
            hessian: self.lagrangian.hessian(s)?,
        })
    }

    /// `α_i = ∂L/∂v^i`.
    pub fn fiber_derivative(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        self.dims.check_state(s)?;
        let g = self.lagrangian.gradient(s)?;
        Ok(g.rows(self.dims.n, self.dims.n).into_owned())
    }

    /// `E = v·∂L/∂v − L`.
    pub fn energy(&self, s: &DVector<f64>) -> Result<f64> {
        self.dims.check_state(s)?;
        let n = self.dims.n;
        let alpha = self.fiber_derivative(s)?;
        Ok(alpha.dot(&s.rows(n, n)) - self.lagrangian.value(s)?)
    }

    /// `dE` in the `(dq, dv, dp)` basis.
    pub fn energy_gradient(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        let jet = self.jet(s)?;
        Ok(energy_gradient_from_jet(self.dims, s, &jet))
    }

    pub fn presymplectic_matrix(&self, s: &DVector<f64>) -> Result<AntisymMatrix> {
        let jet = self.jet(s)?;
        let b = self.magnetic_form(&self.dims.point_of(s))?;
        Ok(assemble_omega(self.dims, &jet.hessian, &b))
    }

    /// Euler-Lagrange vector field with the second-order gauge `x_q = v`.
    ///
    /// Residual freedom confined to the `p` block is resolved by the
    /// minimum-norm solution; freedom in `v̇` is an error.
    pub fn el_vector_field(&self, s: &DVector<f64>) -> Result<ElSolution> {
        let jet = self.jet(s)?;
        let b = self.magnetic_form(&self.dims.point_of(s))?;
        let omega = assemble_omega(self.dims, &jet.hessian, &b);
        let de = energy_gradient_from_jet(self.dims, s, &jet);
        solve_el(self.dims, &omega, &de, s)
    }

    /// `‖i_γ̇ Ω + dE‖_∞` with `γ̇` from a five-point central stencil.
    pub fn el_residual(&self, traj: &Trajectory) -> Result<ElResidual> {
        const NEED: usize = 5;
        if traj.len() < NEED {
            return Err(Error::TooShort { len: traj.len(), need: NEED });
        }
        traj.validate()?;
        let h = traj.step()?;
        let mut per_sample = Vec::with_capacity(traj.len() - 4);
        let mut max = 0.0_f64;
        for j in 2..traj.len() - 2 {
            let x = &traj.states;
            let gdot = (&x[j - 2] - &x[j - 1] * 8.0 + &x[j + 1] * 8.0 - &x[j + 2]) / (12.0 * h);
            let omega = self.presymplectic_matrix(&x[j])?;
            let de = self.energy_gradient(&x[j])?;
            let r = max_abs_vec(&(omega.contract(&gdot) + de));
            max = max.max(r);
            per_sample.push((j, r));
        }
        Ok(ElResidual { per_sample, max })
    }

    pub fn check_hyperregular(&self, probes: &[DVector<f64>]) -> Result<RegularityReport> {
        if probes.is_empty() {
            return Err(Error::InvalidArgument("at least one probe is required".into()));
        }
        let n = self.dims.n;
        let mut out = Vec::with_capacity(probes.len());
        for s in probes {
            let jet = self.jet(s)?;
            let w = jet.hessian.view((n, n), (n, n)).into_owned();
            let cond = condition_number(&w);
            let b = self.magnetic_form(&self.dims.point_of(s))?;
            let omega = assemble_omega(self.dims, &jet.hessian, &b);
            out.push(RegularityProbe {
                velocity_hessian_condition: cond,
                velocity_hessian_invertible: cond < SINGULAR_CONDITION,
                omega_kernel_dim: null_space(omega.as_matrix()).ncols(),
            });
        }
        Ok(RegularityReport { probes: out })
    }

    /// Largest FD component of `dB` over the probes (`P`-points).
    pub fn magnetic_closedness_defect(&self, points: &[DVector<f64>], h: f64) -> Result<f64> {
        let Some(b) = &self.magnetic else { return Ok(0.0) };
        let mut worst = 0.0_f64;
        for x in points {
            let db = exterior_derivative_2form(&|y| b(y), x, h);
            worst = db.iter().fold(worst, |m, v| m.max(v.abs()));
        }
        Ok(worst)
    }
}

pub fn energy_gradient_from_jet(dims: BundleDims, s: &DVector<f64>, jet: &LocalJet) -> DVector<f64> {
    let n = dims.n;
    let v = s.rows(n, n);
    let hv = jet.hessian.rows(n, n);
    let mut de = hv.tr_mul(&v);
    for i in 0..n {
        de[i] -= jet.gradient[i];
    }
    for a in 0..dims.k {
        de[2 * n + a] -= jet.gradient[2 * n + a];
    }
    de
}

/// Assembles `Ω^{L,B}` from the Hessian of `L` and `B` on `P`.
pub fn assemble_omega(dims: BundleDims, hessian: &DMatrix<f64>, b: &AntisymMatrix) -> AntisymMatrix {
    let (n, k) = (dims.n, dims.k);
    let mut m = AntisymMatrix::zeros(2 * n + k);
    // C_ij = ∂²L/∂q^j∂v^i, W_ij = ∂²L/∂v^j∂v^i, D_ia = ∂²L/∂p^a∂v^i
    let c = |i: usize, j: usize| hessian[(n + i, j)];
    for kk in 0..n {
        for l in (kk + 1)..n {
            m.set(kk, l, c(l, kk) - c(kk, l) + b.get(kk, l));
        }
        for l in 0..n {
            m.set(n + kk, l, hessian[(n + l, n + kk)]);
        }
    }
    for l in 0..n {
        for bb in 0..k {
            m.set(l, 2 * n + bb, -hessian[(n + l, 2 * n + bb)] + b.get(l, n + bb));
        }
    }
    for a in 0..k {
        for bb in (a + 1)..k {
            m.set(2 * n + a, 2 * n + bb, b.get(n + a, n + bb));
        }
    }
    m
}

pub(crate) fn solve_el(
    dims: BundleDims,
    omega: &AntisymMatrix,
    de: &DVector<f64>,
    s: &DVector<f64>,
) -> Result<ElSolution> {
    let n = dims.n;
    let mt = omega.as_matrix().transpose();
    let kernel = null_space(&mt);
    let defect = kernel.column_iter().map(|k| k.dot(de).abs()).fold(0.0_f64, f64::max);
    if defect > CONSISTENCY_TOLERANCE * (1.0 + de.norm()) {
        return Err(Error::InconsistentDynamics { defect });
    }
    let fixed: Vec<(usize, f64)> = (0..n).map(|i| (i, s[n + i])).collect();
    let sol = match constrained_lsq_general(&mt, &(-de), &fixed) {
        Ok(sol) => sol,
        Err(Error::InconsistentConstraint { residual }) => {
            return Err(Error::InconsistentDynamics { defect: residual })
        }
        Err(e) => return Err(e),
    };
    if !sol.consistent {
        return Err(Error::InconsistentDynamics { defect: sol.defect });
    }
    let ambiguous = sol
        .kernel_basis
        .column_iter()
        .any(|c| c.rows(n, n).norm() > AMBIGUITY_TOLERANCE);
    if ambiguous {
        return Err(Error::AmbiguousDynamics { kernel: sol.kernel_basis });
    }
    Ok(ElSolution { xdot: sol.solution, kernel_dim: sol.kernel_basis.ncols() })
}

/// FD exterior derivative of the 1-form `α_i dq^i` on `T_PQ`; for `k = 0`,
/// `B = 0` this is the oracle for [`assemble_omega`].
pub fn fd_poincare_cartan(sys: &MagneticLagrangianSystem, s: &DVector<f64>, h: f64) -> Result<AntisymMatrix> {
    let n = sys.dims.n;
    let dim = sys.dims.state_len();
    let theta = |x: &DVector<f64>| {
        let g = sys.lagrangian.gradient(x).unwrap_or_else(|_| DVector::from_element(dim, f64::NAN));
        let mut th = DVector::zeros(dim);
        th.rows_mut(0, n).copy_from(&g.rows(n, n));
        th
    };
    // Ω = dα_i∧dq^i = d(α_i dq^i)
    Ok(numcore::exterior_derivative_1form(&theta, s, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::max_abs;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn free_particle(n: usize) -> MagneticLagrangianSystem {
        let dims = BundleDims::new(n, 0).unwrap();
        let l = DerivativeProvider::new(move |s| 0.5 * s.rows(n, n).norm_squared())
            .with_gradient(move |s| {
                let mut g = DVector::zeros(2 * n);
                g.rows_mut(n, n).copy_from(&s.rows(n, n));
                g
            })
            .with_hessian(move |_| {
                let mut h = DMatrix::zeros(2 * n, 2 * n);
                h.view_mut((n, n), (n, n)).fill_with_identity();
                h
            });
        MagneticLagrangianSystem::new("free", dims, l)
    }

    fn pendulum() -> MagneticLagrangianSystem {
        let dims = BundleDims::new(1, 0).unwrap();
        let l = DerivativeProvider::new(|s| 0.5 * s[1] * s[1] - (1.0 - s[0].cos()));
        MagneticLagrangianSystem::new("pendulum", dims, l)
    }

    #[test]
    fn euclidean_fiber_derivative_is_velocity() {
        let sys = free_particle(3);
        let s = dvector![0.1, 0.2, 0.3, -1.0, 2.0, 0.5];
        assert_eq!(sys.fiber_derivative(&s).unwrap(), dvector![-1.0, 2.0, 0.5]);
    }

    #[test]
    fn mechanical_energy() {
        let sys = pendulum();
        let s = dvector![0.4, 1.3];
        let e = sys.energy(&s).unwrap();
        let expected = 0.5 * 1.3 * 1.3 + (1.0 - 0.4_f64.cos());
        assert!((e - expected).abs() < 1e-9);
    }

    #[test]
    fn flat_metric_gives_canonical_blocks() {
        let sys = free_particle(2);
        let m = sys.presymplectic_matrix(&dvector![0.0, 1.0, 0.5, 0.2]).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                let expected = if k == l { 1.0 } else { 0.0 };
                assert_eq!(m.get(2 + k, l), expected);
                assert_eq!(m.get(k, l), 0.0);
                assert_eq!(m.get(2 + k, 2 + l), 0.0);
            }
        }
    }

    #[test]
    fn free_particle_vector_field() {
        let sys = free_particle(2);
        let s = dvector![0.3, -0.1, 1.0, 2.0];
        let sol = sys.el_vector_field(&s).unwrap();
        assert_eq!(sol.kernel_dim, 0);
        assert!((sol.xdot - dvector![1.0, 2.0, 0.0, 0.0]).amax() < 1e-14);
    }

    #[test]
    fn pendulum_acceleration() {
        let sys = pendulum();
        let sol = sys.el_vector_field(&dvector![0.7, 0.1]).unwrap();
        assert!((sol.xdot[0] - 0.1).abs() == 0.0);
        assert!((sol.xdot[1] + 0.7_f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn omega_matches_fd_exterior_derivative() {
        // non-separable Lagrangian with position-dependent metric and a gyroscopic term
        let dims = BundleDims::new(2, 0).unwrap();
        let l = DerivativeProvider::new(|s| {
            let (q0, q1, v0, v1) = (s[0], s[1], s[2], s[3]);
            0.5 * (1.0 + q1 * q1) * v0 * v0 + 0.5 * v1 * v1 + q0 * v1 + v0 * v1 * q0.sin() - q0.cos() * q1
        })
        .with_gradient(|s| {
            let (q0, q1, v0, v1) = (s[0], s[1], s[2], s[3]);
            dvector![
                v1 + v0 * v1 * q0.cos() + q0.sin() * q1,
                q1 * v0 * v0 - q0.cos(),
                (1.0 + q1 * q1) * v0 + v1 * q0.sin(),
                v1 + q0 + v0 * q0.sin()
            ]
        });
        let sys = MagneticLagrangianSystem::new("poly", dims, l);
        for s in [dvector![0.1, 0.2, 0.3, 0.4], dvector![-1.0, 0.5, 2.0, -0.3]] {
            let m = sys.presymplectic_matrix(&s).unwrap();
            let oracle = fd_poincare_cartan(&sys, &s, 1e-6).unwrap();
            assert!(m.max_abs_diff(&oracle) < 1e-5, "{}", m.max_abs_diff(&oracle));
        }
    }

    #[test]
    fn singular_velocity_hessian_is_flagged() {
        let dims = BundleDims::new(2, 0).unwrap();
        let l = DerivativeProvider::new(|s| 0.5 * s[2] * s[2]);
        let sys = MagneticLagrangianSystem::new("degenerate", dims, l);
        let report = sys.check_hyperregular(&[dvector![0.0, 0.0, 1.0, 1.0]]).unwrap();
        assert!(!report.regular());
        assert!(report.probes[0].velocity_hessian_condition.is_infinite());
    }

    #[test]
    fn fiber_direction_with_potential_is_inconsistent() {
        // L = v²/2 − V(p): Ω has ∂p in its kernel while dE·∂p = V'(p) ≠ 0
        let dims = BundleDims::new(1, 1).unwrap();
        let l = DerivativeProvider::new(|s| 0.5 * s[1] * s[1] - s[2].sin());
        let sys = MagneticLagrangianSystem::new("toy", dims, l);
        let err = sys.el_vector_field(&dvector![0.0, 1.0, 0.2]).unwrap_err();
        assert!(matches!(err, Error::InconsistentDynamics { .. }));
    }

    #[test]
    fn velocity_ambiguity_is_reported() {
        let dims = BundleDims::new(2, 0).unwrap();
        let l = DerivativeProvider::new(|s| 0.5 * s[2] * s[2]);
        let sys = MagneticLagrangianSystem::new("degenerate", dims, l);
        let err = sys.el_vector_field(&dvector![0.0, 0.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::AmbiguousDynamics { .. }));
    }

    #[test]
    fn residual_of_straight_line_and_spike() {
        let sys = free_particle(1);
        let mut tr = Trajectory::new("free");
        for j in 0..21 {
            let t = j as f64 * 0.05;
            tr.push(t, dvector![0.2 + 1.5 * t, 1.5]);
        }
        assert!(sys.el_residual(&tr).unwrap().max < 1e-10);
        tr.states[10][1] += 0.1;
        let r = sys.el_residual(&tr).unwrap();
        let at = r.per_sample.iter().find(|(j, _)| *j == 10).unwrap().1;
        assert!(at > 1e-2);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let sys = free_particle(1);
        let mut tr = Trajectory::new("free");
        for j in 0..4 {
            tr.push(j as f64, dvector![0.0, 0.0]);
        }
        assert!(matches!(sys.el_residual(&tr), Err(Error::TooShort { len: 4, need: 5 })));
    }

    #[test]
    fn magnetic_block_enters_qq_slots() {
        let sys = free_particle(2).with_magnetic(|x| DMatrix::from_row_slice(2, 2, &[0.0, x[1].sin(), -x[1].sin(), 0.0]));
        let m = sys.presymplectic_matrix(&dvector![0.0, 0.3, 0.0, 0.0]).unwrap();
        assert_eq!(m.get(0, 1), 0.3_f64.sin());
        assert_eq!(sys.magnetic_closedness_defect(&[dvector![0.0, 0.3]], 1e-5).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn el_solution_is_second_order(q in -3.0..3.0_f64, v in -3.0..3.0_f64) {
            let sys = pendulum();
            let s = dvector![q, v];
            let sol = sys.el_vector_field(&s).unwrap();
            prop_assert_eq!(sol.xdot[0], v);
            let omega = sys.presymplectic_matrix(&s).unwrap();
            let de = sys.energy_gradient(&s).unwrap();
            prop_assert!(max_abs(&DMatrix::from_column_slice(2, 1, (omega.contract(&sol.xdot) + de).as_slice())) < 1e-9);
        }
    }
}
