//! Magnetic Hamiltonian systems on `T*_PQ`, the explicit map `ψ_{A,β}` and
//! the momentum shift.
//!
//! Covariant states are `(q[n], α[n], p[k])`, the same layout as `T_PQ`
//! with `α` in the velocity slots.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lagrangian::BundleDims;
use crate::numcore::{
    central_jacobian, max_abs_vec, AntisymMatrix, DerivativeMode, DerivativeProvider, MatrixFn, DEFAULT_FD_STEP,
};
use crate::presym::{solve_presymplectic, PresymplecticPointData};
use crate::symmetry::{connection_one_form_mu, fiber_frame_covector, Connection, GroupAction};
use crate::transform::{beta_connection_curvature, BetaMap, TransformationPair};

#[derive(Clone, Debug, PartialEq)]
pub struct CovStateTPQ {
    pub q: DVector<f64>,
    pub alpha: DVector<f64>,
    pub p: DVector<f64>,
}

impl CovStateTPQ {
    pub fn from_vector(dims: BundleDims, s: &DVector<f64>) -> Result<Self> {
        dims.check_state(s)?;
        let n = dims.n;
        Ok(Self {
            q: s.rows(0, n).into_owned(),
            alpha: s.rows(n, n).into_owned(),
            p: s.rows(2 * n, dims.k).into_owned(),
        })
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.q.len() * 2 + self.p.len());
        v.extend(self.q.iter());
        v.extend(self.alpha.iter());
        v.extend(self.p.iter());
        DVector::from_vec(v)
    }
}

#[derive(Clone)]
pub struct MagneticHamiltonianSystem {
    pub id: String,
    pub dims: BundleDims,
    pub hamiltonian: DerivativeProvider,
    magnetic: Option<MatrixFn>,
}

impl std::fmt::Debug for MagneticHamiltonianSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MagneticHamiltonianSystem")
            .field("id", &self.id)
            .field("dims", &self.dims)
            .field("magnetic", &self.magnetic.is_some())
            .finish()
    }
}

/// Hamilton's equations at one point.
#[derive(Clone, Debug)]
pub struct HamiltonSolution {
    pub xdot: DVector<f64>,
    pub data: PresymplecticPointData,
}

impl MagneticHamiltonianSystem {
    pub fn new(id: impl Into<String>, dims: BundleDims, hamiltonian: DerivativeProvider) -> Self {
        Self { id: id.into(), dims, hamiltonian, magnetic: None }
    }

    pub fn with_magnetic(mut self, b: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.magnetic = Some(Arc::new(b));
        self
    }

    pub fn magnetic_form(&self, point: &DVector<f64>) -> Result<AntisymMatrix> {
        let d = self.dims.point_len();
        match &self.magnetic {
            None => Ok(AntisymMatrix::zeros(d)),
            Some(b) => {
                let m = b(point);
                if m.shape() != (d, d) {
                    return Err(Error::DimensionMismatch(format!("B must be {d}x{d}")));
                }
                if m.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteEvaluation("magnetic form".into()));
                }
                AntisymMatrix::new(m)
            }
        }
    }

    /// `Ω = dα_i∧dq^i + B`: `M(α_i, q_j) = δ_ij`, `B` on the `(q, p)` slots.
    pub fn presymplectic_matrix(&self, s: &DVector<f64>) -> Result<AntisymMatrix> {
        self.dims.check_state(s)?;
        let b = self.magnetic_form(&self.dims.point_of(s))?;
        Ok(ham_presymplectic_matrix(self.dims, &b))
    }

    /// `i_X Ω = −dH`, minimum-norm in the kernel directions.
    pub fn hamilton_vector_field(&self, s: &DVector<f64>) -> Result<HamiltonSolution> {
        let omega = self.presymplectic_matrix(s)?;
        let dh = self.hamiltonian.gradient(s)?;
        let (data, xdot) = solve_presymplectic(omega, dh, &[])?;
        Ok(HamiltonSolution { xdot, data })
    }

    /// `J_b = α_i σ^i_b` for the cotangent lift of an action on `Q` (`k = 0`).
    pub fn momentum_map(&self, action: &GroupAction, s: &DVector<f64>) -> Result<DVector<f64>> {
        if self.dims.k != 0 || action.space_dim != self.dims.n {
            return Err(Error::DimensionMismatch("cotangent-lift momentum needs an action on Q".into()));
        }
        let n = self.dims.n;
        let sigma = action.generators(&s.rows(0, n).into_owned())?;
        Ok(sigma.tr_mul(&s.rows(n, n)))
    }
}

pub fn ham_presymplectic_matrix(dims: BundleDims, b: &AntisymMatrix) -> AntisymMatrix {
    let n = dims.n;
    let mut m = AntisymMatrix::zeros(dims.state_len());
    for i in 0..n {
        m.set(n + i, i, 1.0);
    }
    for i in 0..dims.point_len() {
        for j in i + 1..dims.point_len() {
            let (si, sj) = (dims.state_index_of_point(i), dims.state_index_of_point(j));
            let v = m.get(si, sj) + b.get(i, j);
            m.set(si, sj, v);
        }
    }
    m
}

/// `ψ_{A,β}`: explicit, affine in `α`.
#[derive(Clone, Debug)]
pub struct HamTransformation {
    pub pair: TransformationPair,
    pub beta: BetaMap,
    pub connection: Connection,
    pub mode: DerivativeMode,
}

#[derive(Clone, Debug, Default)]
pub struct HamPullbackReport {
    pub probes: usize,
    pub omega_violation: f64,
}

impl HamTransformation {
    pub fn new(pair: TransformationPair, beta: BetaMap, connection: Connection) -> Result<Self> {
        if connection.space_dim != pair.dims2.n || connection.fiber_coords != pair.base_fiber {
            return Err(Error::DimensionMismatch(
                "connection must be expressed against the pair's base fiber coordinates".into(),
            ));
        }
        Ok(Self { pair, beta, connection, mode: DerivativeMode::Exact })
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    /// `(q, α, q̄, p̄, p) ↦ (q₂, α_i + β_a Γ^a_i, β_a, p̄)`.
    pub fn apply(&self, s1: &DVector<f64>) -> Result<DVector<f64>> {
        let pair = &self.pair;
        pair.dims1.check_state(s1)?;
        let (n1, n2) = (pair.dims1.n, pair.dims2.n);
        let p1 = pair.dims1.point_of(s1);
        let beta = self.beta.value(&p1)?;
        let q2 = pair.q2_of_point1(&p1);
        let gamma = self.connection.gamma(&q2)?;
        let shift = gamma.tr_mul(&beta);
        let mut s2 = DVector::zeros(pair.dims2.state_len());
        s2.rows_mut(0, n2).copy_from(&q2);
        for (i, &c) in pair.base_kept().iter().enumerate() {
            s2[n2 + c] = s1[n1 + i] + shift[i];
        }
        for (a, &c) in pair.base_fiber.iter().enumerate() {
            s2[n2 + c] = beta[a];
        }
        for alpha in 0..pair.k_bar() {
            s2[2 * n2 + alpha] = s1[2 * n1 + pair.k_f() + alpha];
        }
        Ok(s2)
    }

    /// `Tψ_{A,β}`: exact from `dβ` and `dΓ`, or central differences.
    pub fn jacobian(&self, s1: &DVector<f64>) -> Result<DMatrix<f64>> {
        let pair = &self.pair;
        let dim2 = pair.dims2.state_len();
        if self.mode == DerivativeMode::FiniteDifference {
            return Ok(central_jacobian(
                &|y| self.apply(y).unwrap_or_else(|_| DVector::from_element(dim2, f64::NAN)),
                s1,
                DEFAULT_FD_STEP,
            ));
        }
        let (n1, n2) = (pair.dims1.n, pair.dims2.n);
        let d1 = pair.dims1;
        let p1 = d1.point_of(s1);
        let beta = self.beta.value(&p1)?;
        let dbeta = self.beta.jacobian(&p1, self.mode)?;
        let q2 = pair.q2_of_point1(&p1);
        let gamma = self.connection.gamma(&q2)?;
        let dg = self.connection.gamma_derivatives(&q2)?;
        let srcs = pair.q2_sources_in_point1();
        let mut jac = DMatrix::zeros(dim2, d1.state_len());
        for (c, &src) in srcs.iter().enumerate() {
            jac[(c, d1.state_index_of_point(src))] = 1.0;
        }
        let kept = pair.base_kept();
        // ∂(β_a Γ^a_i)/∂x^m
        let mut dshift = gamma.tr_mul(&dbeta);
        for (m, &src) in srcs.iter().enumerate() {
            let col = dg[m].tr_mul(&beta);
            for i in 0..n1 {
                dshift[(i, src)] += col[i];
            }
        }
        for (i, &c) in kept.iter().enumerate() {
            jac[(n2 + c, n1 + i)] = 1.0;
            for m in 0..d1.point_len() {
                jac[(n2 + c, d1.state_index_of_point(m))] += dshift[(i, m)];
            }
        }
        for (a, &c) in pair.base_fiber.iter().enumerate() {
            for m in 0..d1.point_len() {
                jac[(n2 + c, d1.state_index_of_point(m))] = dbeta[(a, m)];
            }
        }
        for alpha in 0..pair.k_bar() {
            jac[(2 * n2 + alpha, 2 * n1 + pair.k_f() + alpha)] = 1.0;
        }
        Ok(jac)
    }

    /// `B₁ = F*B₂ + d⟨β, A_{P₁}⟩`.
    pub fn induced_magnetic(&self, upstairs: &MagneticHamiltonianSystem, p1: &DVector<f64>) -> Result<AntisymMatrix> {
        let f = self.pair.big_f_matrix();
        let pulled = upstairs.magnetic_form(&(&f * p1))?.pullback(&f)?;
        let d = beta_connection_curvature(&self.pair, &self.beta, &self.connection, p1, self.mode)?;
        AntisymMatrix::new(pulled.into_matrix() + d.into_matrix())
    }

    /// `(ψ*H₂, B₁)` on `T*_{P₁}Q₁`.
    pub fn induced_system(&self, upstairs: &MagneticHamiltonianSystem) -> MagneticHamiltonianSystem {
        let pdim = self.pair.dims1.point_len();
        let (ht, h2) = (self.clone(), upstairs.hamiltonian.clone());
        let mut provider =
            DerivativeProvider::new(move |s| ht.apply(s).and_then(|s2| h2.value(&s2)).unwrap_or(f64::NAN));
        if self.mode == DerivativeMode::Exact {
            let (ht, h2) = (self.clone(), upstairs.hamiltonian.clone());
            let dim = self.pair.dims1.state_len();
            provider = provider.with_gradient(move |s| {
                let g = || -> Result<DVector<f64>> { Ok(ht.jacobian(s)?.tr_mul(&h2.gradient(&ht.apply(s)?)?)) };
                g().unwrap_or_else(|_| DVector::from_element(dim, f64::NAN))
            });
        } else {
            provider = provider.with_mode(DerivativeMode::FiniteDifference);
        }
        let (ht, up) = (self.clone(), upstairs.clone());
        MagneticHamiltonianSystem::new(format!("{}/induced", upstairs.id), self.pair.dims1, provider).with_magnetic(
            move |p1| {
                ht.induced_magnetic(&up, p1)
                    .map(|b| b.into_matrix())
                    .unwrap_or_else(|_| DMatrix::from_element(pdim, pdim, f64::NAN))
            },
        )
    }

    /// `max |Tψᵀ Ω₂ Tψ − Ω₁|` over the probes.
    pub fn verify_pullback(
        &self,
        upstairs: &MagneticHamiltonianSystem,
        probes: &[DVector<f64>],
    ) -> Result<HamPullbackReport> {
        let mut rep = HamPullbackReport { probes: probes.len(), ..Default::default() };
        for s1 in probes {
            let s2 = self.apply(s1)?;
            let pulled = upstairs.presymplectic_matrix(&s2)?.pullback(&self.jacobian(s1)?)?;
            let b1 = self.induced_magnetic(upstairs, &self.pair.dims1.point_of(s1))?;
            let omega1 = ham_presymplectic_matrix(self.pair.dims1, &b1);
            rep.omega_violation = rep.omega_violation.max(pulled.max_abs_diff(&omega1));
        }
        Ok(rep)
    }
}

#[derive(Clone, Debug, Default)]
pub struct MomentumShiftReport {
    pub probes: usize,
    /// `max |J(S_μ(α))|`.
    pub shifted_momentum: f64,
    /// `max |ψ_{A,β}(S_μ(α)) − α|`.
    pub round_trip: f64,
    /// `max |J(α) − μ|` on the input samples.
    pub input_momentum: f64,
}

/// Momentum-shift scheme: `Q₁ = Q/G`, `P₁ = P₂ = Q`, `F = id`.
#[derive(Clone, Debug)]
pub struct MomentumShift {
    pub transformation: HamTransformation,
    pub action: GroupAction,
    pub mu: DVector<f64>,
}

impl MomentumShift {
    /// `β = σ̄⁻ᵀ μ`, evaluated at `q`.
    pub fn new(sys: &MagneticHamiltonianSystem, action: &GroupAction, mu: &DVector<f64>, conn: &Connection) -> Result<Self> {
        if sys.dims.k != 0 {
            return Err(Error::Unsupported("the momentum shift acts on T*Q".into()));
        }
        let kf = conn.k_f();
        if mu.len() != action.g_dim || action.g_dim != kf {
            return Err(Error::DimensionMismatch("one fiber coordinate per generator is required".into()));
        }
        let dims1 = BundleDims::new(sys.dims.n - kf, kf)?;
        let pair = TransformationPair::new(dims1, sys.dims, conn.fiber_coords.clone())?;
        let (act, m, p2) = (action.clone(), mu.clone(), pair.clone());
        let rows = conn.fiber_coords.clone();
        let beta = BetaMap::new(move |p1| {
            act.fiber_block(&p2.q2_of_point1(p1), &rows)
                .and_then(|sb| fiber_frame_covector(&sb, &m))
                .unwrap_or_else(|_| DVector::from_element(kf, f64::NAN))
        });
        let transformation = HamTransformation::new(pair, beta, conn.clone())?;
        Ok(Self { transformation, action: action.clone(), mu: mu.clone() })
    }

    /// `S_μ(α_q) = α_q − 𝔄_μ(q)`.
    pub fn shift(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        let pair = &self.transformation.pair;
        let n = pair.dims2.n;
        let q = s.rows(0, n).into_owned();
        let sigma_bar = self.action.fiber_block(&q, &pair.base_fiber)?;
        let beta = fiber_frame_covector(&sigma_bar, &self.mu)?;
        let form = connection_one_form_mu(&self.transformation.connection, &beta, &q)?;
        let mut out = s.clone();
        let mut alpha = out.rows_mut(n, n);
        alpha -= &form.covector;
        Ok(out)
    }

    /// `J⁻¹(0) ≅ T*_Q(Q/G)`: keep `(q₁, α₁, q̄)`.
    pub fn to_reduced_cotangent(&self, s: &DVector<f64>) -> DVector<f64> {
        let pair = &self.transformation.pair;
        let (n1, n2) = (pair.dims1.n, pair.dims2.n);
        let kept = pair.base_kept();
        let mut out = DVector::zeros(pair.dims1.state_len());
        for (i, &c) in kept.iter().enumerate() {
            out[i] = s[c];
            out[n1 + i] = s[n2 + c];
        }
        for (a, &c) in pair.base_fiber.iter().enumerate() {
            out[2 * n1 + a] = s[c];
        }
        out
    }

    pub fn check(&self, sys: &MagneticHamiltonianSystem, probes: &[DVector<f64>]) -> Result<MomentumShiftReport> {
        let mut rep = MomentumShiftReport { probes: probes.len(), ..Default::default() };
        for s in probes {
            rep.input_momentum = rep.input_momentum.max(max_abs_vec(&(sys.momentum_map(&self.action, s)? - &self.mu)));
            let shifted = self.shift(s)?;
            rep.shifted_momentum = rep.shifted_momentum.max(max_abs_vec(&sys.momentum_map(&self.action, &shifted)?));
            let back = self.transformation.apply(&self.to_reduced_cotangent(&shifted))?;
            rep.round_trip = rep.round_trip.max(max_abs_vec(&(back - s)));
        }
        Ok(rep)
    }
}

/// Convenience wrapper over [`MomentumShift::check`].
pub fn momentum_shift_check(
    sys: &MagneticHamiltonianSystem,
    action: &GroupAction,
    mu: &DVector<f64>,
    conn: &Connection,
    probes: &[DVector<f64>],
) -> Result<MomentumShiftReport> {
    MomentumShift::new(sys, action, mu, conn)?.check(sys, probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::null_space;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    /// H = ½ αᵀ W⁻¹ α + ½ x² on (θ, x), W = [[2, ½], [½, 1]].
    fn oscillator() -> MagneticHamiltonianSystem {
        let winv = dmatrix![2.0, 0.5; 0.5, 1.0].try_inverse().unwrap();
        let w2 = winv.clone();
        let h = DerivativeProvider::new(move |s| {
            let a = s.rows(2, 2).into_owned();
            0.5 * a.dot(&(&winv * &a)) + 0.5 * s[1] * s[1]
        })
        .with_gradient(move |s| {
            let wa = &w2 * s.rows(2, 2);
            dvector![0.0, s[1], wa[0], wa[1]]
        });
        MagneticHamiltonianSystem::new("oscillator", BundleDims::new(2, 0).unwrap(), h)
    }

    fn mechanical() -> Connection {
        Connection::new("mechanical", 2, vec![0], |_| dmatrix![0.25])
            .unwrap()
            .with_derivatives(|_| vec![dmatrix![0.0], dmatrix![0.0]])
    }

    #[test]
    fn zero_magnetic_term_gives_canonical_matrix() {
        let dims = BundleDims::new(2, 1).unwrap();
        let m = ham_presymplectic_matrix(dims, &AntisymMatrix::zeros(3));
        assert_eq!(m.get(2, 0), 1.0);
        assert_eq!(m.get(0, 2), -1.0);
        assert_eq!(m.get(3, 1), 1.0);
        assert_eq!(null_space(m.as_matrix()).ncols(), 1);
    }

    #[test]
    fn magnetic_block_lands_on_position_slots() {
        let dims = BundleDims::new(2, 0).unwrap();
        let mut b = AntisymMatrix::zeros(2);
        b.set(0, 1, 0.3);
        let m = ham_presymplectic_matrix(dims, &b);
        assert_eq!(m.get(0, 1), 0.3);
        assert_eq!(m.get(2, 0), 1.0);
    }

    #[test]
    fn fiber_magnetic_term_leaves_a_kernel() {
        // n = 1, k = 1, B = dq∧dp: rank 2 on a 3-dimensional space
        let dims = BundleDims::new(1, 1).unwrap();
        let mut b = AntisymMatrix::zeros(2);
        b.set(0, 1, 1.0);
        let m = ham_presymplectic_matrix(dims, &b);
        assert_eq!(null_space(m.as_matrix()).ncols(), 1);
    }

    #[test]
    fn hamilton_equations_have_the_canonical_sign() {
        let sys = oscillator();
        let s = dvector![0.0, 0.4, 0.2, -0.1];
        let sol = sys.hamilton_vector_field(&s).unwrap();
        let g = sys.hamiltonian.gradient(&s).unwrap();
        assert!((sol.xdot[0] - g[2]).abs() < 1e-14 && (sol.xdot[1] - g[3]).abs() < 1e-14);
        assert!((sol.xdot[3] + 0.4).abs() < 1e-14 && sol.xdot[2].abs() < 1e-14);
    }

    #[test]
    fn zero_beta_is_cotangent_projection_dual() {
        let pair = TransformationPair::new(BundleDims::new(1, 2).unwrap(), BundleDims::new(2, 1).unwrap(), vec![0])
            .unwrap();
        let conn = Connection::new("c", 2, vec![0], |q| dmatrix![q[1].sin()]).unwrap();
        let ht = HamTransformation::new(pair, BetaMap::constant(dvector![0.0], 3), conn).unwrap();
        // (q, α, q̄, p̄) ↦ (q̄, q, 0, α, p̄)
        let s2 = ht.apply(&dvector![0.3, 1.5, -0.7, 2.0]).unwrap();
        assert_eq!(s2, dvector![-0.7, 0.3, 0.0, 1.5, 2.0]);
    }

    #[test]
    fn image_fiber_momentum_is_mu() {
        let ms = MomentumShift::new(&oscillator(), &GroupAction::translation(2, vec![0]).unwrap(), &dvector![0.6], &mechanical())
            .unwrap();
        let s2 = ms.transformation.apply(&dvector![0.1, -0.3, 2.0]).unwrap();
        assert_eq!(s2[2], 0.6);
        assert!((s2[3] - (-0.3 + 0.25 * 0.6)).abs() < 1e-15);
    }

    #[test]
    fn zero_mu_shift_is_identity() {
        let sys = oscillator();
        let ms = MomentumShift::new(&sys, &GroupAction::translation(2, vec![0]).unwrap(), &dvector![0.0], &mechanical())
            .unwrap();
        let s = dvector![0.3, 0.1, 0.0, 0.7];
        assert_eq!(ms.shift(&s).unwrap(), s);
    }

    #[test]
    fn flat_shift_pullback_is_exact() {
        let sys = oscillator();
        let ms = MomentumShift::new(&sys, &GroupAction::translation(2, vec![0]).unwrap(), &dvector![0.6], &mechanical())
            .unwrap();
        let rep = ms.transformation.verify_pullback(&sys, &[dvector![0.1, -0.3, 2.0], dvector![1.0, 2.0, -1.0]]).unwrap();
        assert!(rep.omega_violation < 1e-10);
    }

    fn curved() -> HamTransformation {
        // n₂ = 3 with q = (θ, φ, ψ) and Γ = (cos ψ, 0) as for 𝔄⁰
        let pair = TransformationPair::new(BundleDims::new(2, 1).unwrap(), BundleDims::new(3, 0).unwrap(), vec![0])
            .unwrap();
        let conn = Connection::new("A0", 3, vec![0], |q| dmatrix![q[2].cos(), 0.0])
            .unwrap()
            .with_derivatives(|q| vec![dmatrix![0.0, 0.0], dmatrix![0.0, 0.0], dmatrix![-q[2].sin(), 0.0]]);
        HamTransformation::new(pair, BetaMap::constant(dvector![0.5], 3), conn).unwrap()
    }

    #[test]
    fn curved_connection_adds_curvature_term() {
        let up = MagneticHamiltonianSystem::new("free", BundleDims::new(3, 0).unwrap(), DerivativeProvider::new(|_| 0.0));
        let ht = curved();
        let p1 = dvector![0.2, -0.4, 0.0];
        let b1 = ht.induced_magnetic(&up, &p1).unwrap();
        // d(μ cos ψ dφ)[φ, ψ] = μ sin ψ
        assert!((b1.get(0, 1) - 0.5 * (-0.4_f64).sin()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn curved_pullback_holds(phi in -3.0..3.0_f64, psi in -3.0..3.0_f64, a in -2.0..2.0_f64, b in -2.0..2.0_f64, th in -3.0..3.0_f64) {
            let up = MagneticHamiltonianSystem::new("free", BundleDims::new(3, 0).unwrap(), DerivativeProvider::new(|_| 0.0));
            let s1 = dvector![phi, psi, a, b, th];
            let exact = curved().verify_pullback(&up, std::slice::from_ref(&s1)).unwrap();
            prop_assert!(exact.omega_violation < 1e-12);
            let fd = curved().with_mode(DerivativeMode::FiniteDifference).verify_pullback(&up, &[s1]).unwrap();
            prop_assert!(fd.omega_violation < 1e-8);
        }

        #[test]
        fn shift_lands_on_zero_level(x in -2.0..2.0_f64, ax in -2.0..2.0_f64, th in -3.0..3.0_f64, mu in -1.0..1.0_f64) {
            let sys = oscillator();
            let action = GroupAction::translation(2, vec![0]).unwrap();
            let rep = momentum_shift_check(&sys, &action, &dvector![mu], &mechanical(), &[dvector![th, x, mu, ax]]).unwrap();
            prop_assert!(rep.input_momentum < 1e-15);
            prop_assert!(rep.shifted_momentum < 1e-12);
            prop_assert!(rep.round_trip < 1e-12);
        }
    }
}
