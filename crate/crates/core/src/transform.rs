//! Transformation pairs in adapted coordinates, the compatible
//! transformation `ψ_{L₂,β}` and the magnetic Lagrangian system it induces.
//!
//! Layouts:
//! - `Q₂` coordinates: `q̄` sits at `base_fiber`, the rest are `q₁` in order.
//! - `P₁` points: `(q₁, q̄[k_f], p̄[k₂], p[k_F])`.
//! - `P₂` points: `(q₂, p̄)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lagrangian::{BundleDims, MagneticLagrangianSystem, RegularityReport, SINGULAR_CONDITION};
use crate::numcore::{
    central_hessian, central_jacobian, condition_number, exterior_derivative_from_jacobian, max_abs,
    max_abs_vec, newton_solve, numerical_rank, pinv_solve, AntisymMatrix, DerivativeMode, DerivativeProvider,
    MatrixFn, NewtonOptions, VectorFn, DEFAULT_FD_STEP, DEFAULT_FD_STEP_SECOND,
};
use crate::symmetry::Connection;

use std::sync::Arc;

/// Tolerance for "shared coordinates agree".
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-10;

/// Adapted-coordinate transformation pair: `F` and `f` are coordinate
/// projections, so `f∘ε₂∘F = ε₁` holds identically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformationPair {
    pub dims1: BundleDims,
    pub dims2: BundleDims,
    pub base_fiber: Vec<usize>,
}

impl TransformationPair {
    pub fn new(dims1: BundleDims, dims2: BundleDims, base_fiber: Vec<usize>) -> Result<Self> {
        let k_f = base_fiber.len();
        if dims2.n != dims1.n + k_f {
            return Err(Error::DimensionMismatch(format!(
                "n₂ = {} must equal n₁ + k_f = {}",
                dims2.n,
                dims1.n + k_f
            )));
        }
        if dims1.k < k_f + dims2.k {
            return Err(Error::DimensionMismatch(format!(
                "k₁ = {} must be at least k_f + k₂ = {}",
                dims1.k,
                k_f + dims2.k
            )));
        }
        let mut sorted = base_fiber.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != k_f || sorted.iter().any(|&c| c >= dims2.n) {
            return Err(Error::InvalidArgument("invalid base fiber indices".into()));
        }
        Ok(Self { dims1, dims2, base_fiber })
    }

    /// `f = id`, `F = id`.
    pub fn identity(dims: BundleDims) -> Self {
        Self { dims1: dims, dims2: dims, base_fiber: Vec::new() }
    }

    pub fn k_f(&self) -> usize {
        self.base_fiber.len()
    }

    /// Number of shared fiber coordinates `p̄`.
    pub fn k_bar(&self) -> usize {
        self.dims2.k
    }

    /// Number of `F`-fiber coordinates `p`.
    pub fn k_big_f(&self) -> usize {
        self.dims1.k - self.k_f() - self.dims2.k
    }

    /// Positions in `q₂` of the `q₁` coordinates.
    pub fn base_kept(&self) -> Vec<usize> {
        (0..self.dims2.n).filter(|c| !self.base_fiber.contains(c)).collect()
    }

    /// State index in `s₂` of `v̄^a`.
    pub fn fiber_velocity_index(&self, a: usize) -> usize {
        self.dims2.n + self.base_fiber[a]
    }

    /// For every `s₂` slot, the `s₁` slot it is copied from (`None` for `v̄`).
    pub fn copy_map(&self) -> Vec<Option<usize>> {
        let (n1, n2) = (self.dims1.n, self.dims2.n);
        let mut map = vec![None; self.dims2.state_len()];
        for (i, &c) in self.base_kept().iter().enumerate() {
            map[c] = Some(i);
            map[n2 + c] = Some(n1 + i);
        }
        for (a, &c) in self.base_fiber.iter().enumerate() {
            map[c] = Some(2 * n1 + a);
        }
        for alpha in 0..self.k_bar() {
            map[2 * n2 + alpha] = Some(2 * n1 + self.k_f() + alpha);
        }
        map
    }

    /// `s₂` with every shared slot copied from `s₁` and `v̄ = 0`.
    pub fn copy_state(&self, s1: &DVector<f64>) -> DVector<f64> {
        let mut s2 = DVector::zeros(self.dims2.state_len());
        for (j, src) in self.copy_map().into_iter().enumerate() {
            if let Some(i) = src {
                s2[j] = s1[i];
            }
        }
        s2
    }

    /// Linear part of [`Self::copy_state`].
    pub fn copy_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dims2.state_len(), self.dims1.state_len());
        for (j, src) in self.copy_map().into_iter().enumerate() {
            if let Some(i) = src {
                m[(j, i)] = 1.0;
            }
        }
        m
    }

    /// `q₂` from a `P₁` point.
    pub fn q2_of_point1(&self, p1: &DVector<f64>) -> DVector<f64> {
        let n1 = self.dims1.n;
        let mut q2 = DVector::zeros(self.dims2.n);
        for (i, &c) in self.base_kept().iter().enumerate() {
            q2[c] = p1[i];
        }
        for (a, &c) in self.base_fiber.iter().enumerate() {
            q2[c] = p1[n1 + a];
        }
        q2
    }

    /// Matrix of `F: P₁ → P₂`.
    pub fn big_f_matrix(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.dims1.n, self.dims2.n);
        let mut m = DMatrix::zeros(self.dims2.point_len(), self.dims1.point_len());
        for (i, &c) in self.base_kept().iter().enumerate() {
            m[(c, i)] = 1.0;
        }
        for (a, &c) in self.base_fiber.iter().enumerate() {
            m[(c, n1 + a)] = 1.0;
        }
        for alpha in 0..self.k_bar() {
            m[(n2 + alpha, n1 + self.k_f() + alpha)] = 1.0;
        }
        m
    }

    /// For each `q₂` coordinate, the `P₁` coordinate it comes from.
    pub fn q2_sources_in_point1(&self) -> Vec<usize> {
        let n1 = self.dims1.n;
        let mut src = vec![0; self.dims2.n];
        for (i, &c) in self.base_kept().iter().enumerate() {
            src[c] = i;
        }
        for (a, &c) in self.base_fiber.iter().enumerate() {
            src[c] = n1 + a;
        }
        src
    }

    /// Max disagreement of the shared coordinates of `s₁` and `s₂`.
    pub fn shared_defect(&self, s1: &DVector<f64>, s2: &DVector<f64>) -> f64 {
        self.copy_map()
            .into_iter()
            .enumerate()
            .filter_map(|(j, src)| src.map(|i| (s2[j] - s1[i]).abs()))
            .fold(0.0, f64::max)
    }
}

/// `β: P₁ → V*f`, components against `dq̄^a`.
#[derive(Clone)]
pub struct BetaMap {
    beta: VectorFn,
    jacobian: Option<MatrixFn>,
}

impl std::fmt::Debug for BetaMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BetaMap").field("exact_jacobian", &self.jacobian.is_some()).finish()
    }
}

impl BetaMap {
    pub fn new(beta: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self { beta: Arc::new(beta), jacobian: None }
    }

    pub fn constant(value: DVector<f64>, point_dim: usize) -> Self {
        let k = value.len();
        Self::new(move |_| value.clone()).with_jacobian(move |_| DMatrix::zeros(k, point_dim))
    }

    pub fn with_jacobian(mut self, j: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn value(&self, p1: &DVector<f64>) -> Result<DVector<f64>> {
        let b = (self.beta)(p1);
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEvaluation("beta".into()));
        }
        Ok(b)
    }

    /// `∂β_a/∂x^m` at `[(a, m)]`.
    pub fn jacobian(&self, p1: &DVector<f64>, mode: DerivativeMode) -> Result<DMatrix<f64>> {
        let j = match (&self.jacobian, mode) {
            (Some(j), DerivativeMode::Exact) => j(p1),
            _ => central_jacobian(&|y| (self.beta)(y), p1, DEFAULT_FD_STEP),
        };
        if j.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEvaluation("beta Jacobian".into()));
        }
        Ok(j)
    }

    /// `∂²β_a/∂x^m∂x^l` for each `a`.
    pub fn second_derivatives(&self, p1: &DVector<f64>, mode: DerivativeMode) -> Result<Vec<DMatrix<f64>>> {
        let k = self.value(p1)?.len();
        let out = match (&self.jacobian, mode) {
            (Some(j), DerivativeMode::Exact) => {
                let d = crate::numcore::central_matrix_derivatives(&|y| j(y), p1, DEFAULT_FD_STEP);
                (0..k)
                    .map(|a| {
                        let m = DMatrix::from_fn(p1.len(), p1.len(), |l, mm| d[l][(a, mm)]);
                        (&m + m.transpose()) * 0.5
                    })
                    .collect()
            }
            _ => (0..k)
                .map(|a| central_hessian(&|y| (self.beta)(y)[a], p1, DEFAULT_FD_STEP_SECOND))
                .collect(),
        };
        Ok(out)
    }
}

/// `ψ_{L₂,β}` together with everything needed to build the induced system.
#[derive(Clone, Debug)]
pub struct CompatibleTransformation {
    pub pair: TransformationPair,
    pub source: MagneticLagrangianSystem,
    pub beta: BetaMap,
    pub connection: Connection,
    pub newton: NewtonOptions,
    pub mode: DerivativeMode,
}

/// Induced first and second derivatives at one point.
#[derive(Clone, Debug)]
pub struct InducedJet {
    pub s2: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

#[derive(Clone, Debug, Default)]
pub struct PullbackReport {
    pub probes: usize,
    pub omega_violation: f64,
    pub energy_violation: f64,
}

#[derive(Clone, Debug)]
pub enum TangencyProbe {
    /// A point of `T_{P₁}Q₁`; the field is evaluated at its image.
    Source(DVector<f64>),
    /// A point of `T_{P₂}Q₂` that must lie in the image of `ψ`.
    Image(DVector<f64>),
}

#[derive(Clone, Debug, Default)]
pub struct TangencyReport {
    pub probes: usize,
    pub max_defect: f64,
    pub per_probe: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FRegularityProbe {
    pub determinant: f64,
    pub condition: f64,
    pub regular: bool,
}

#[derive(Clone, Debug)]
pub enum DiffeomorphismReport {
    /// `2n₁ + k₁ ≠ 2n₂ + k₂`: `ψ` can at best be an embedding.
    NotApplicable { dim1: usize, dim2: usize },
    Evaluated { min_rank: usize, full_rank: bool, induced: RegularityReport },
}

impl CompatibleTransformation {
    pub fn new(
        pair: TransformationPair,
        source: MagneticLagrangianSystem,
        beta: BetaMap,
        connection: Connection,
    ) -> Result<Self> {
        if source.dims != pair.dims2 {
            return Err(Error::DimensionMismatch("source system does not live on the pair's P₂".into()));
        }
        if connection.space_dim != pair.dims2.n || connection.fiber_coords != pair.base_fiber {
            return Err(Error::DimensionMismatch(
                "connection must be expressed against the pair's base fiber coordinates".into(),
            ));
        }
        Ok(Self { pair, source, beta, connection, newton: NewtonOptions::default(), mode: DerivativeMode::Exact })
    }

    /// Selects how `Tψ`, `dL₁`, `d²L₁` and `B₁` are obtained. The source
    /// Lagrangian keeps its own mode so that `ψ` stays smooth to roundoff.
    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_newton(mut self, opts: NewtonOptions) -> Self {
        self.newton = opts;
        self
    }

    fn point1(&self, s1: &DVector<f64>) -> DVector<f64> {
        self.pair.dims1.point_of(s1)
    }

    /// `(Γ v)^a` at `s₁`.
    pub fn gamma_v(&self, s1: &DVector<f64>) -> Result<DVector<f64>> {
        let n1 = self.pair.dims1.n;
        let q2 = self.pair.q2_of_point1(&self.point1(s1));
        Ok(self.connection.gamma(&q2)? * s1.rows(n1, n1))
    }

    /// Horizontal-lift initial guess `v̄ = −Γ v`.
    pub fn horizontal_guess(&self, s1: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(-self.gamma_v(s1)?)
    }

    pub fn apply_psi(&self, s1: &DVector<f64>) -> Result<DVector<f64>> {
        let guess = self.horizontal_guess(s1)?;
        self.apply_psi_from(s1, &guess)
    }

    /// `ψ(s₁)` with an explicit Newton initial guess for `v̄`.
    pub fn apply_psi_from(&self, s1: &DVector<f64>, guess: &DVector<f64>) -> Result<DVector<f64>> {
        self.pair.dims1.check_state(s1)?;
        let kf = self.pair.k_f();
        let base = self.pair.copy_state(s1);
        if kf == 0 {
            return Ok(base);
        }
        let beta = self.beta.value(&self.point1(s1))?;
        let idx: Vec<usize> = (0..kf).map(|a| self.pair.fiber_velocity_index(a)).collect();
        let assemble = |w: &DVector<f64>| {
            let mut s2 = base.clone();
            for (a, &j) in idx.iter().enumerate() {
                s2[j] = w[a];
            }
            s2
        };
        let lagrangian = &self.source.lagrangian;
        let out = newton_solve(
            |w| {
                let g = lagrangian.gradient(&assemble(w))?;
                Ok(DVector::from_iterator(kf, idx.iter().map(|&j| g[j])) - &beta)
            },
            |w| Ok(lagrangian.hessian(&assemble(w))?.select_rows(&idx).select_columns(&idx)),
            guess,
            &self.newton,
        )?;
        Ok(assemble(&out.x))
    }

    /// `max_a |∂L₂/∂v̄^a(ψ(s₁)) − β_a(p₁)|`.
    pub fn characterization_residual(&self, s1: &DVector<f64>) -> Result<f64> {
        let s2 = self.apply_psi(s1)?;
        let g = self.source.lagrangian.gradient(&s2)?;
        let beta = self.beta.value(&self.point1(s1))?;
        Ok((0..self.pair.k_f())
            .map(|a| (g[self.pair.fiber_velocity_index(a)] - beta[a]).abs())
            .fold(0.0, f64::max))
    }

    /// `∂β/∂s₁` (β only depends on the `P₁` slots).
    fn beta_state_jacobian(&self, s1: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d1 = self.pair.dims1;
        let jp = self.beta.jacobian(&self.point1(s1), self.mode)?;
        let mut js = DMatrix::zeros(self.pair.k_f(), d1.state_len());
        for m in 0..d1.point_len() {
            js.column_mut(d1.state_index_of_point(m)).copy_from(&jp.column(m));
        }
        Ok(js)
    }

    fn beta_state_second(&self, s1: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let d1 = self.pair.dims1;
        let hp = self.beta.second_derivatives(&self.point1(s1), self.mode)?;
        Ok(hp
            .into_iter()
            .map(|h| {
                let mut hs = DMatrix::zeros(d1.state_len(), d1.state_len());
                for l in 0..d1.point_len() {
                    for m in 0..d1.point_len() {
                        hs[(d1.state_index_of_point(l), d1.state_index_of_point(m))] = h[(l, m)];
                    }
                }
                hs
            })
            .collect())
    }

    /// `∂(Γv)^a/∂s₁` at `[(a, J)]`.
    fn gamma_v_jacobian(&self, s1: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d1 = self.pair.dims1;
        let n1 = d1.n;
        let p1 = self.point1(s1);
        let q2 = self.pair.q2_of_point1(&p1);
        let gamma = self.connection.gamma(&q2)?;
        let dg = self.connection.gamma_derivatives(&q2)?;
        let v = s1.rows(n1, n1);
        let mut j = DMatrix::zeros(self.pair.k_f(), d1.state_len());
        for (m, src) in self.pair.q2_sources_in_point1().into_iter().enumerate() {
            let col = &dg[m] * v;
            j.column_mut(d1.state_index_of_point(src)).copy_from(&col);
        }
        for i in 0..n1 {
            j.column_mut(n1 + i).copy_from(&gamma.column(i));
        }
        Ok(j)
    }

    /// `∂²(Γv)^a/∂s₁∂s₁`. `Γv` is linear in `v` and depends on the point
    /// only through `q₂`, so only the `q₂` directions are differenced.
    fn gamma_v_second(&self, s1: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let d1 = self.pair.dims1;
        let (dim, n1, kf) = (d1.state_len(), d1.n, self.pair.k_f());
        let q2 = self.pair.q2_of_point1(&self.point1(s1));
        let dg = self.connection.gamma_derivatives(&q2)?;
        let mut out = vec![DMatrix::zeros(dim, dim); kf];
        for (m, src) in self.pair.q2_sources_in_point1().into_iter().enumerate() {
            let col = d1.state_index_of_point(src);
            let h = DEFAULT_FD_STEP * (1.0 + s1[col].abs());
            let (mut up, mut dn) = (s1.clone(), s1.clone());
            up[col] += h;
            dn[col] -= h;
            let dj = (self.gamma_v_jacobian(&up)? - self.gamma_v_jacobian(&dn)?) / (2.0 * h);
            for (a, hm) in out.iter_mut().enumerate() {
                for l in (0..dim).filter(|l| !(n1..2 * n1).contains(l)) {
                    hm[(col, l)] += dj[(a, l)];
                }
                for i in 0..n1 {
                    hm[(col, n1 + i)] += dg[m][(a, i)];
                    hm[(n1 + i, col)] += dg[m][(a, i)];
                }
            }
        }
        let out: Vec<DMatrix<f64>> = out.into_iter().map(|m| (&m + m.transpose()) * 0.5).collect();
        if out.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFiniteEvaluation("connection second derivatives".into()));
        }
        Ok(out)
    }

    /// `ψ(s₁)` and `Tψ` at `s₁`.
    pub fn psi_jacobian(&self, s1: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let s2 = self.apply_psi(s1)?;
        if self.mode == DerivativeMode::FiniteDifference {
            let dim2 = self.pair.dims2.state_len();
            let jac = central_jacobian(
                &|y| self.apply_psi(y).unwrap_or_else(|_| DVector::from_element(dim2, f64::NAN)),
                s1,
                DEFAULT_FD_STEP,
            );
            if jac.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteEvaluation("finite-difference psi Jacobian".into()));
            }
            return Ok((s2, jac));
        }
        let h2 = self.source.lagrangian.hessian(&s2)?;
        let jac = self.implicit_jacobian(s1, &h2)?;
        Ok((s2, jac))
    }

    /// Implicit-function Jacobian given the source Hessian at `ψ(s₁)`.
    fn implicit_jacobian(&self, s1: &DVector<f64>, h2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let kf = self.pair.k_f();
        let s = self.pair.copy_matrix();
        if kf == 0 {
            return Ok(s);
        }
        let idx: Vec<usize> = (0..kf).map(|a| self.pair.fiber_velocity_index(a)).collect();
        let hbb = h2.select_rows(&idx).select_columns(&idx);
        let rhs = h2.select_rows(&idx) * &s - self.beta_state_jacobian(s1)?;
        let lu = hbb.lu();
        let sol = lu.solve(&rhs).ok_or(Error::SingularJacobian { iteration: 0 })?;
        let mut jac = s;
        for (a, &j) in idx.iter().enumerate() {
            jac.row_mut(j).copy_from(&(-sol.row(a)));
        }
        Ok(jac)
    }

    /// `L₁ = L₂∘ψ − β_a (v̄*^a + Γ^a_i v^i)`.
    pub fn induced_value(&self, s1: &DVector<f64>) -> Result<f64> {
        let s2 = self.apply_psi(s1)?;
        self.induced_value_at(s1, &s2)
    }

    fn induced_value_at(&self, s1: &DVector<f64>, s2: &DVector<f64>) -> Result<f64> {
        let beta = self.beta.value(&self.point1(s1))?;
        let u = self.fiber_velocity(s2) + self.gamma_v(s1)?;
        Ok(self.source.lagrangian.value(s2)? - beta.dot(&u))
    }

    fn fiber_velocity(&self, s2: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.pair.k_f(), (0..self.pair.k_f()).map(|a| s2[self.pair.fiber_velocity_index(a)]))
    }

    /// Value, gradient and (optionally) Hessian of `L₁` from the chain rule.
    pub fn induced_jet(&self, s1: &DVector<f64>, with_hessian: bool) -> Result<InducedJet> {
        let kf = self.pair.k_f();
        let s2 = self.apply_psi(s1)?;
        let value = self.induced_value_at(s1, &s2)?;
        let p1 = self.point1(s1);
        let beta = self.beta.value(&p1)?;
        let g2 = self.source.lagrangian.gradient(&s2)?;
        let s = self.pair.copy_matrix();
        let dbeta = self.beta_state_jacobian(s1)?;
        let dc = self.gamma_v_jacobian(s1)?;
        let u = self.fiber_velocity(&s2) + self.gamma_v(s1)?;

        // v̄ rows of S are zero, so this is the envelope term
        let mut gradient = s.tr_mul(&g2) - dbeta.tr_mul(&u) - dc.tr_mul(&beta);

        let hessian = if with_hessian {
            let h2 = self.source.lagrangian.hessian(&s2)?;
            let jac = self.implicit_jacobian(s1, &h2)?;
            let mut h1 = jac.tr_mul(&h2) * &jac;
            let idx: Vec<usize> = (0..kf).map(|a| self.pair.fiber_velocity_index(a)).collect();
            let du = jac.select_rows(&idx) + &dc;
            let cross = dbeta.tr_mul(&du);
            h1 -= &cross + cross.transpose();
            for (a, hb) in self.beta_state_second(s1)?.iter().enumerate() {
                h1 -= hb * u[a];
            }
            for (a, hc) in self.gamma_v_second(s1)?.iter().enumerate() {
                h1 -= hc * beta[a];
            }
            Some((&h1 + h1.transpose()) * 0.5)
        } else {
            None
        };
        if gradient.iter().any(|x| !x.is_finite()) {
            gradient.fill(f64::NAN);
            return Err(Error::NonFiniteEvaluation("induced gradient".into()));
        }
        Ok(InducedJet { s2, value, gradient, hessian })
    }

    pub fn theta_beta(&self, p1: &DVector<f64>) -> Result<DVector<f64>> {
        theta_beta(&self.pair, &self.beta, &self.connection, p1)
    }

    /// `B₁ = F*B₂ + d⟨β, 𝔄_{P₁}⟩` at a `P₁` point.
    pub fn induced_magnetic(&self, p1: &DVector<f64>) -> Result<AntisymMatrix> {
        let f = self.pair.big_f_matrix();
        let b2 = self.source.magnetic_form(&(&f * p1))?;
        let pulled = b2.pullback(&f)?;
        let d = beta_connection_curvature(&self.pair, &self.beta, &self.connection, p1, self.mode)?;
        AntisymMatrix::new(pulled.into_matrix() + d.into_matrix())
    }

    /// The induced magnetic Lagrangian system on `ε₁`.
    pub fn induced_system(&self) -> MagneticLagrangianSystem {
        let dim = self.pair.dims1.state_len();
        let pdim = self.pair.dims1.point_len();
        let value_ct = self.clone();
        let mut provider = DerivativeProvider::new(move |s| value_ct.induced_value(s).unwrap_or(f64::NAN));
        if self.mode == DerivativeMode::Exact {
            let gct = self.clone();
            let hct = self.clone();
            provider = provider
                .with_gradient(move |s| {
                    gct.induced_jet(s, false)
                        .map(|j| j.gradient)
                        .unwrap_or_else(|_| DVector::from_element(dim, f64::NAN))
                })
                .with_hessian(move |s| {
                    hct.induced_jet(s, true)
                        .ok()
                        .and_then(|j| j.hessian)
                        .unwrap_or_else(|| DMatrix::from_element(dim, dim, f64::NAN))
                });
        } else {
            provider = provider.with_mode(DerivativeMode::FiniteDifference);
        }
        let bct = self.clone();
        let periodic = self.induced_periodic();
        MagneticLagrangianSystem::new(format!("{}/induced", self.source.id), self.pair.dims1, provider)
            .with_magnetic(move |p1| {
                bct.induced_magnetic(p1)
                    .map(|b| b.into_matrix())
                    .unwrap_or_else(|_| DMatrix::from_element(pdim, pdim, f64::NAN))
            })
            .with_periodic(periodic)
    }

    /// Periodic `P₁` coordinates inherited from the source system, as
    /// `T_{P₁}Q₁` state indices.
    fn induced_periodic(&self) -> Vec<usize> {
        let d1 = self.pair.dims1;
        let srcs = self.pair.q2_sources_in_point1();
        self.source
            .periodic_coords
            .iter()
            .filter(|&&c| c < self.pair.dims2.n)
            .map(|&c| d1.state_index_of_point(srcs[c]))
            .collect()
    }

    /// `max |Tψᵀ Ω₂ Tψ − Ω₁|` and `max |E₂∘ψ − E₁|` over the probes.
    pub fn verify_pullback_identities(
        &self,
        induced: &MagneticLagrangianSystem,
        probes: &[DVector<f64>],
    ) -> Result<PullbackReport> {
        let mut rep = PullbackReport { probes: probes.len(), ..Default::default() };
        for s1 in probes {
            let (s2, jac) = self.psi_jacobian(s1)?;
            let omega2 = self.source.presymplectic_matrix(&s2)?;
            let pulled = omega2.pullback(&jac)?;
            let omega1 = induced.presymplectic_matrix(s1)?;
            rep.omega_violation = rep.omega_violation.max(pulled.max_abs_diff(&omega1));
            let e2 = self.source.energy(&s2)?;
            let e1 = induced.energy(s1)?;
            rep.energy_violation = rep.energy_violation.max((e2 - e1).abs());
        }
        Ok(rep)
    }

    /// Inverse of the copy map for points in the image; `p` slots (when
    /// `k_F > 0`) are taken from `fill`.
    pub fn project(&self, s2: &DVector<f64>, fill: Option<&DVector<f64>>) -> DVector<f64> {
        let mut s1 = DVector::zeros(self.pair.dims1.state_len());
        for (j, src) in self.pair.copy_map().into_iter().enumerate() {
            if let Some(i) = src {
                s1[i] = s2[j];
            }
        }
        if let Some(p) = fill {
            let off = 2 * self.pair.dims1.n + self.pair.k_f() + self.pair.k_bar();
            s1.rows_mut(off, p.len()).copy_from(p);
        }
        s1
    }

    /// Defect `X(∂L₂/∂v̄^a) − Y(β_a)` with `Y` compatible with `X`.
    pub fn verify_tangency(
        &self,
        field: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
        probes: &[TangencyProbe],
    ) -> Result<TangencyReport> {
        let kf = self.pair.k_f();
        let d1 = self.pair.dims1;
        let kbf = self.pair.k_big_f();
        let mut rep = TangencyReport { probes: probes.len(), ..Default::default() };
        for probe in probes {
            let (s1, s2) = match probe {
                TangencyProbe::Source(s1) => (s1.clone(), self.apply_psi(s1)?),
                TangencyProbe::Image(s2) => {
                    if kbf > 0 {
                        return Err(Error::Unsupported("image probes need k_F = 0".into()));
                    }
                    let s1 = self.project(s2, None);
                    let back = self.apply_psi(&s1)?;
                    let defect = max_abs_vec(&(&back - s2));
                    if defect > COMPATIBILITY_TOLERANCE * (1.0 + max_abs_vec(s2)) {
                        return Err(Error::NotInImage { defect });
                    }
                    (s1, s2.clone())
                }
            };
            let x = field(&s2)?;
            let h2 = self.source.lagrangian.hessian(&s2)?;
            // Y on P₁: shared slots copied from X
            let mut y = DVector::zeros(d1.state_len());
            for (j, src) in self.pair.copy_map().into_iter().enumerate() {
                if let Some(i) = src {
                    y[i] = x[j];
                }
            }
            let dbeta = self.beta_state_jacobian(&s1)?;
            let mut defect = DVector::zeros(kf);
            for a in 0..kf {
                let row = h2.row(self.pair.fiber_velocity_index(a));
                defect[a] = (row * &x)[(0, 0)] - (dbeta.row(a) * &y)[(0, 0)];
            }
            if kbf > 0 {
                // choose the free Y^γ to cancel as much of the defect as possible
                let off = 2 * d1.n + kf + self.pair.k_bar();
                let dbp = dbeta.columns(off, kbf).into_owned();
                let yp = pinv_solve(&dbp, &defect);
                defect -= dbp * yp;
            }
            let worst = max_abs_vec(&defect);
            rep.max_defect = rep.max_defect.max(worst);
            rep.per_probe.push(worst);
        }
        Ok(rep)
    }

    /// Rank of `∂β/∂p` at the probes plus hyperregularity of the induced
    /// system, when the dimensions allow a diffeomorphism.
    pub fn check_diffeomorphic(&self, probes: &[DVector<f64>]) -> Result<DiffeomorphismReport> {
        let dim1 = self.pair.dims1.state_len();
        let dim2 = self.pair.dims2.state_len();
        if dim1 != dim2 {
            return Ok(DiffeomorphismReport::NotApplicable { dim1, dim2 });
        }
        let kbf = self.pair.k_big_f();
        let off = self.pair.dims1.n + self.pair.k_f() + self.pair.k_bar();
        let mut min_rank = usize::MAX;
        for s1 in probes {
            let jp = self.beta.jacobian(&self.point1(s1), self.mode)?;
            min_rank = min_rank.min(numerical_rank(&jp.columns(off, kbf).into_owned()));
        }
        if probes.is_empty() {
            min_rank = 0;
        }
        let induced = self.induced_system().check_hyperregular(probes)?;
        Ok(DiffeomorphismReport::Evaluated { min_rank, full_rank: min_rank == self.pair.k_f(), induced })
    }
}

/// The 1-form `⟨β, 𝔄_{P₁}⟩` on `P₁`: `β_a Γ^a_i` on `q` slots, `β_a` on
/// `q̄` slots.
pub fn theta_beta(
    pair: &TransformationPair,
    beta: &BetaMap,
    connection: &Connection,
    p1: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n1 = pair.dims1.n;
    let b = beta.value(p1)?;
    let gamma = connection.gamma(&pair.q2_of_point1(p1))?;
    let mut th = DVector::zeros(pair.dims1.point_len());
    th.rows_mut(0, n1).copy_from(&gamma.tr_mul(&b));
    th.rows_mut(n1, pair.k_f()).copy_from(&b);
    Ok(th)
}

/// `jac[(j, m)] = ∂_m ⟨β, 𝔄_{P₁}⟩_j`.
pub fn theta_beta_jacobian(
    pair: &TransformationPair,
    beta: &BetaMap,
    connection: &Connection,
    p1: &DVector<f64>,
    mode: DerivativeMode,
) -> Result<DMatrix<f64>> {
    let n1 = pair.dims1.n;
    let kf = pair.k_f();
    let dim = pair.dims1.point_len();
    if mode == DerivativeMode::FiniteDifference {
        let jac = central_jacobian(
            &|y| theta_beta(pair, beta, connection, y).unwrap_or_else(|_| DVector::from_element(dim, f64::NAN)),
            p1,
            DEFAULT_FD_STEP,
        );
        if jac.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEvaluation("connection 1-form Jacobian".into()));
        }
        return Ok(jac);
    }
    let b = beta.value(p1)?;
    let dbeta = beta.jacobian(p1, mode)?;
    let q2 = pair.q2_of_point1(p1);
    let gamma = connection.gamma(&q2)?;
    let dg = connection.gamma_derivatives(&q2)?;
    let mut jac = DMatrix::zeros(dim, dim);
    jac.view_mut((0, 0), (n1, dim)).copy_from(&gamma.tr_mul(&dbeta));
    jac.view_mut((n1, 0), (kf, dim)).copy_from(&dbeta);
    for (m, src) in pair.q2_sources_in_point1().into_iter().enumerate() {
        let col = dg[m].tr_mul(&b);
        for i in 0..n1 {
            jac[(i, src)] += col[i];
        }
    }
    Ok(jac)
}

/// `d⟨β, 𝔄_{P₁}⟩`.
pub fn beta_connection_curvature(
    pair: &TransformationPair,
    beta: &BetaMap,
    connection: &Connection,
    p1: &DVector<f64>,
    mode: DerivativeMode,
) -> Result<AntisymMatrix> {
    Ok(exterior_derivative_from_jacobian(&theta_beta_jacobian(pair, beta, connection, p1, mode)?))
}

/// `∂²L₂/∂v̄∂v̄` at each probe (points of `T_{P₂}Q₂`).
pub fn check_f_regular(
    sys2: &MagneticLagrangianSystem,
    pair: &TransformationPair,
    probes: &[DVector<f64>],
) -> Result<Vec<FRegularityProbe>> {
    let idx: Vec<usize> = (0..pair.k_f()).map(|a| pair.fiber_velocity_index(a)).collect();
    probes
        .iter()
        .map(|s2| {
            let h = sys2.lagrangian.hessian(s2)?;
            let block = h.select_rows(&idx).select_columns(&idx);
            let condition = condition_number(&block);
            Ok(FRegularityProbe {
                determinant: block.determinant(),
                condition,
                regular: condition < SINGULAR_CONDITION,
            })
        })
        .collect()
}

/// Max entry of a matrix difference; shorthand for reports.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b))
}
