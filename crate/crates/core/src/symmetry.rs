//! Infinitesimal group actions, momentum maps, connections and
//! Bg-potentials.
//!
//! Connections are stored in the fiber frame: `𝔄 = dq̄^a + Γ^a_i dq^i`
//! against designated fiber coordinates `q̄`. The g-frame form is
//! `σ̄⁻¹ (dq̄ + Γ dq)` where `σ̄` is the fiber block of the generators.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lagrangian::{MagneticLagrangianSystem, SINGULAR_CONDITION};
use crate::numcore::{
    central_jacobian, central_matrix_derivatives, condition_number, max_abs, max_abs_vec, numerical_rank,
    solve_square, AntisymMatrix, MatrixFn, VectorFn, DEFAULT_FD_STEP,
};

pub type MatrixListFn = Arc<dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Infinitesimal action on a coordinate space of dimension `space_dim`.
/// Column `b` of `sigma(x)` is the generator of basis element `e_b`.
#[derive(Clone)]
pub struct GroupAction {
    pub g_dim: usize,
    pub space_dim: usize,
    sigma: MatrixFn,
    structure_constants: Vec<f64>,
    pub translation_coords: Option<Vec<usize>>,
}

impl std::fmt::Debug for GroupAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GroupAction")
            .field("g_dim", &self.g_dim)
            .field("space_dim", &self.space_dim)
            .field("translation_coords", &self.translation_coords)
            .finish()
    }
}

impl GroupAction {
    pub fn new(
        g_dim: usize,
        space_dim: usize,
        sigma: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            g_dim,
            space_dim,
            sigma: Arc::new(sigma),
            structure_constants: vec![0.0; g_dim * g_dim * g_dim],
            translation_coords: None,
        }
    }

    /// Abelian action by unit translations of the listed coordinates.
    pub fn translation(space_dim: usize, coords: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = coords.iter().find(|&&c| c >= space_dim) {
            return Err(Error::InvalidArgument(format!("translation coordinate {bad} out of range")));
        }
        let g_dim = coords.len();
        let cols = coords.clone();
        let mut action = Self::new(g_dim, space_dim, move |_| {
            let mut s = DMatrix::zeros(space_dim, g_dim);
            for (b, &c) in cols.iter().enumerate() {
                s[(c, b)] = 1.0;
            }
            s
        });
        action.translation_coords = Some(coords);
        Ok(action)
    }

    /// Structure constants `c^a_{bc}` stored at `[a][b][c]`; must be
    /// antisymmetric in the lower indices.
    pub fn with_structure_constants(mut self, c: Vec<f64>) -> Result<Self> {
        let g = self.g_dim;
        if c.len() != g * g * g {
            return Err(Error::DimensionMismatch(format!("expected {} structure constants", g * g * g)));
        }
        for a in 0..g {
            for b in 0..g {
                for cc in 0..g {
                    let x = c[(a * g + b) * g + cc];
                    let y = c[(a * g + cc) * g + b];
                    if x != -y {
                        return Err(Error::InvalidArgument(format!(
                            "structure constants not antisymmetric at ({a},{b},{cc})"
                        )));
                    }
                }
            }
        }
        self.structure_constants = c;
        Ok(self)
    }

    pub fn structure_constant(&self, a: usize, b: usize, c: usize) -> f64 {
        let g = self.g_dim;
        self.structure_constants[(a * g + b) * g + c]
    }

    pub fn is_abelian(&self) -> bool {
        self.structure_constants.iter().all(|c| *c == 0.0)
    }

    pub fn generators(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let s = (self.sigma)(x);
        if s.shape() != (self.space_dim, self.g_dim) {
            return Err(Error::DimensionMismatch(format!(
                "generator matrix is {}x{}, expected {}x{}",
                s.nrows(),
                s.ncols(),
                self.space_dim,
                self.g_dim
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation("generators".into()));
        }
        Ok(s)
    }

    /// Minimum generator rank over the probes; the action is free on the
    /// sample iff this equals `g_dim`.
    pub fn min_rank(&self, probes: &[DVector<f64>]) -> Result<usize> {
        let mut r = self.g_dim;
        for x in probes {
            r = r.min(numerical_rank(&self.generators(x)?));
        }
        Ok(r)
    }

    /// Generators restricted to `rows`, as a square matrix `σ̄`.
    pub fn fiber_block(&self, x: &DVector<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
        let s = self.generators(x)?;
        Ok(s.select_rows(rows))
    }

    /// Restriction to a subset of basis elements (e.g. the isotropy algebra).
    pub fn restrict(&self, basis: &[usize]) -> Result<Self> {
        if let Some(&bad) = basis.iter().find(|&&b| b >= self.g_dim) {
            return Err(Error::InvalidArgument(format!("basis index {bad} out of range")));
        }
        let sigma = self.sigma.clone();
        let cols = basis.to_vec();
        let mut out = Self::new(basis.len(), self.space_dim, move |x| sigma(x).select_columns(&cols));
        let g = basis.len();
        let mut c = vec![0.0; g * g * g];
        for (ia, &a) in basis.iter().enumerate() {
            for (ib, &b) in basis.iter().enumerate() {
                for (ic, &cc) in basis.iter().enumerate() {
                    c[(ia * g + ib) * g + ic] = self.structure_constant(a, b, cc);
                }
            }
        }
        out.structure_constants = c;
        out.translation_coords = self
            .translation_coords
            .as_ref()
            .map(|t| basis.iter().map(|&b| t[b]).collect());
        Ok(out)
    }
}

/// `g*`-valued function `δ` on `P` with an optional exact Jacobian.
#[derive(Clone)]
pub struct BgPotential {
    delta: VectorFn,
    jacobian: Option<MatrixFn>,
}

impl std::fmt::Debug for BgPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BgPotential").field("exact_jacobian", &self.jacobian.is_some()).finish()
    }
}

impl BgPotential {
    pub fn new(delta: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self { delta: Arc::new(delta), jacobian: None }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let d = (self.delta)(x);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation("Bg-potential".into()));
        }
        Ok(d)
    }

    /// Row `b` is `d δ_b`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = match &self.jacobian {
            Some(j) => j(x),
            None => central_jacobian(&|y| (self.delta)(y), x, DEFAULT_FD_STEP),
        };
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation("Bg-potential Jacobian".into()));
        }
        Ok(j)
    }
}

/// `J_b = Σ_i α_i σ^i_b − δ_b(p)`.
pub fn momentum_map(
    sys: &MagneticLagrangianSystem,
    action: &GroupAction,
    s: &DVector<f64>,
    delta: Option<&BgPotential>,
) -> Result<DVector<f64>> {
    check_action_space(sys, action)?;
    let n = sys.dims.n;
    let point = sys.dims.point_of(s);
    let alpha = sys.fiber_derivative(s)?;
    let sigma = action.generators(&point)?;
    let mut j = sigma.rows(0, n).tr_mul(&alpha);
    if let Some(d) = delta {
        j -= d.value(&point)?;
    }
    Ok(j)
}

fn check_action_space(sys: &MagneticLagrangianSystem, action: &GroupAction) -> Result<()> {
    if action.space_dim != sys.dims.point_len() {
        return Err(Error::DimensionMismatch(format!(
            "action acts on dimension {}, system points have dimension {}",
            action.space_dim,
            sys.dims.point_len()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct GRegularityProbe {
    pub locked_inertia: DMatrix<f64>,
    pub condition: f64,
    pub invertible: bool,
}

#[derive(Clone, Debug)]
pub struct GRegularityReport {
    pub probes: Vec<GRegularityProbe>,
}

impl GRegularityReport {
    pub fn regular(&self) -> bool {
        self.probes.iter().all(|p| p.invertible)
    }
}

/// `∂J/∂ξ` at `ξ = 0`, i.e. `σᵀ W σ`, at each probe.
pub fn check_g_regular(
    sys: &MagneticLagrangianSystem,
    action: &GroupAction,
    probes: &[DVector<f64>],
) -> Result<GRegularityReport> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("at least one probe is required".into()));
    }
    check_action_space(sys, action)?;
    let n = sys.dims.n;
    let mut out = Vec::with_capacity(probes.len());
    for s in probes {
        let h = sys.lagrangian.hessian(s)?;
        let w = h.view((n, n), (n, n)).into_owned();
        let sigma = action.generators(&sys.dims.point_of(s))?.rows(0, n).into_owned();
        let locked = sigma.tr_mul(&w) * &sigma;
        let condition = condition_number(&locked);
        out.push(GRegularityProbe { invertible: condition < SINGULAR_CONDITION, condition, locked_inertia: locked });
    }
    Ok(GRegularityReport { probes: out })
}

/// Max over probes and basis elements of `|dL · ξ^T|`, where `ξ^T` is the
/// tangent lift of the generator to `T_PQ`.
pub fn invariance_defect(
    sys: &MagneticLagrangianSystem,
    action: &GroupAction,
    probes: &[DVector<f64>],
) -> Result<f64> {
    check_action_space(sys, action)?;
    let (n, k) = (sys.dims.n, sys.dims.k);
    let mut worst = 0.0_f64;
    for s in probes {
        let point = sys.dims.point_of(s);
        let sigma = action.generators(&point)?;
        let dsigma = central_matrix_derivatives(&|x| (action.sigma)(x), &point, DEFAULT_FD_STEP);
        let g = sys.lagrangian.gradient(s)?;
        for b in 0..action.g_dim {
            let mut lift = DVector::zeros(2 * n + k);
            for i in 0..n {
                lift[i] = sigma[(i, b)];
                // d/dt of σ^i_b along the base curve
                lift[n + i] = (0..n).map(|m| dsigma[m][(i, b)] * s[n + m]).sum();
            }
            for a in 0..k {
                lift[2 * n + a] = sigma[(n + a, b)];
            }
            worst = worst.max(g.dot(&lift).abs());
        }
    }
    Ok(worst)
}

/// Principal connection in the fiber frame on a space with coordinates
/// `q₂`; `gamma(q₂)` is `k_f × (n₂ − k_f)` with columns ordered like the
/// non-fiber coordinates.
#[derive(Clone)]
pub struct Connection {
    pub name: String,
    pub space_dim: usize,
    pub fiber_coords: Vec<usize>,
    gamma: MatrixFn,
    gamma_derivatives: Option<MatrixListFn>,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("name", &self.name)
            .field("space_dim", &self.space_dim)
            .field("fiber_coords", &self.fiber_coords)
            .field("exact_derivatives", &self.gamma_derivatives.is_some())
            .finish()
    }
}

impl Connection {
    pub fn new(
        name: impl Into<String>,
        space_dim: usize,
        fiber_coords: Vec<usize>,
        gamma: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if fiber_coords.iter().any(|&c| c >= space_dim) {
            return Err(Error::InvalidArgument("fiber coordinate out of range".into()));
        }
        let mut sorted = fiber_coords.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != fiber_coords.len() {
            return Err(Error::InvalidArgument("duplicate fiber coordinate".into()));
        }
        Ok(Self { name: name.into(), space_dim, fiber_coords, gamma: Arc::new(gamma), gamma_derivatives: None })
    }

    /// Exact `∂Γ/∂q₂^m` for each `m`.
    pub fn with_derivatives(
        mut self,
        d: impl Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.gamma_derivatives = Some(Arc::new(d));
        self
    }

    pub fn has_exact_derivatives(&self) -> bool {
        self.gamma_derivatives.is_some()
    }

    pub fn k_f(&self) -> usize {
        self.fiber_coords.len()
    }

    pub fn base_coords(&self) -> Vec<usize> {
        (0..self.space_dim).filter(|c| !self.fiber_coords.contains(c)).collect()
    }

    pub fn gamma(&self, q2: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = (self.gamma)(q2);
        let shape = (self.k_f(), self.space_dim - self.k_f());
        if g.shape() != shape {
            return Err(Error::DimensionMismatch(format!(
                "connection coefficients are {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                shape.0,
                shape.1
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation("connection coefficients".into()));
        }
        Ok(g)
    }

    /// `∂Γ/∂q₂^m`, exact when available.
    pub fn gamma_derivatives(&self, q2: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let d = match &self.gamma_derivatives {
            Some(d) => d(q2),
            None => central_matrix_derivatives(&|x| (self.gamma)(x), q2, DEFAULT_FD_STEP),
        };
        if d.len() != self.space_dim || d.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteEvaluation("connection derivatives".into()));
        }
        Ok(d)
    }

    /// Full fiber-frame coefficient matrix `k_f × n₂`: identity on fiber
    /// columns, `Γ` on the others.
    pub fn one_form(&self, q2: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = self.gamma(q2)?;
        let mut a = DMatrix::zeros(self.k_f(), self.space_dim);
        for (r, &c) in self.fiber_coords.iter().enumerate() {
            a[(r, c)] = 1.0;
        }
        for (j, &c) in self.base_coords().iter().enumerate() {
            a.column_mut(c).copy_from(&g.column(j));
        }
        Ok(a)
    }

    /// Max over probes of `|σ̄⁻¹ 𝔄(σ) − 1|`, the defect of `𝔄(ξ_Q) = ξ`.
    pub fn generator_defect(&self, action: &GroupAction, probes: &[DVector<f64>]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for q in probes {
            let sigma = action.generators(q)?;
            let sigma_bar = sigma.select_rows(&self.fiber_coords);
            let a_sigma = self.one_form(q)? * &sigma;
            let lu = sigma_bar.clone().lu();
            let g_frame = lu.solve(&a_sigma).ok_or(Error::NotFreeAction)?;
            let id = DMatrix::identity(action.g_dim, action.g_dim);
            worst = worst.max(max_abs(&(g_frame - id)));
        }
        Ok(worst)
    }
}

/// `𝔄_μ` and `d𝔄_μ` at one point.
#[derive(Clone, Debug)]
pub struct MuForm {
    pub covector: DVector<f64>,
    pub d: AntisymMatrix,
}

/// Contraction of the fiber-frame connection with `mu` (components against
/// `dq̄`): `μ_a` on fiber slots, `μ_a Γ^a_i` on base slots.
pub fn connection_one_form_mu(conn: &Connection, mu: &DVector<f64>, q2: &DVector<f64>) -> Result<MuForm> {
    if mu.len() != conn.k_f() {
        return Err(Error::DimensionMismatch(format!("mu has length {}, expected {}", mu.len(), conn.k_f())));
    }
    let a = conn.one_form(q2)?;
    let covector = a.tr_mul(mu);
    let dg = conn.gamma_derivatives(q2)?;
    let base = conn.base_coords();
    // jac[(j, i)] = ∂_i covector_j
    let mut jac = DMatrix::zeros(conn.space_dim, conn.space_dim);
    for (i, dgi) in dg.iter().enumerate() {
        let col = dgi.tr_mul(mu);
        for (jj, &j) in base.iter().enumerate() {
            jac[(j, i)] = col[jj];
        }
    }
    Ok(MuForm { covector, d: crate::numcore::exterior_derivative_from_jacobian(&jac) })
}

/// Fiber-frame mechanical connection coefficients at `q`.
///
/// Requires a Lagrangian on `TQ` (`k = 0`) whose velocity Hessian is SPD
/// and generators with vanishing rows outside `fiber_coords`.
pub fn mechanical_connection_at(
    sys: &MagneticLagrangianSystem,
    action: &GroupAction,
    fiber_coords: &[usize],
    q: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = sys.dims.n;
    if sys.dims.k != 0 {
        return Err(Error::Unsupported("mechanical connection needs a system on TQ".into()));
    }
    if fiber_coords.len() != action.g_dim {
        return Err(Error::DimensionMismatch("one fiber coordinate per generator is required".into()));
    }
    let mut s = DVector::zeros(2 * n);
    s.rows_mut(0, n).copy_from(q);
    let h = sys.lagrangian.hessian(&s)?;
    let w = h.view((n, n), (n, n)).into_owned();
    if w.clone().cholesky().is_none() {
        return Err(Error::NotMechanical);
    }
    let sigma = action.generators(q)?;
    let base: Vec<usize> = (0..n).filter(|c| !fiber_coords.contains(c)).collect();
    if max_abs(&sigma.select_rows(&base)) > 1e-12 {
        return Err(Error::Unsupported("generators must vanish on base coordinates".into()));
    }
    let locked = sigma.tr_mul(&w) * &sigma;
    let rhs = sigma.tr_mul(&w);
    let g_frame = locked.clone().lu().solve(&rhs).ok_or(Error::NotFreeAction)?;
    if condition_number(&locked) >= SINGULAR_CONDITION {
        return Err(Error::NotFreeAction);
    }
    let fiber_frame = sigma.select_rows(fiber_coords) * g_frame;
    Ok(fiber_frame.select_columns(&base))
}

/// Mechanical connection as a [`Connection`] (FD derivatives).
pub fn mechanical_connection(
    sys: &MagneticLagrangianSystem,
    action: &GroupAction,
    fiber_coords: Vec<usize>,
) -> Result<Connection> {
    let n = sys.dims.n;
    // fail early on the obvious errors
    mechanical_connection_at(sys, action, &fiber_coords, &DVector::zeros(n))?;
    let sys = sys.clone();
    let action = action.clone();
    let fc = fiber_coords.clone();
    let kf = fiber_coords.len();
    Connection::new("mechanical", n, fiber_coords, move |q| {
        mechanical_connection_at(&sys, &action, &fc, q)
            .unwrap_or_else(|_| DMatrix::from_element(kf, n - kf, f64::NAN))
    })
}

/// Max over probes and basis elements of `|i_{ξ_P} B − d⟨δ, ξ⟩|`.
pub fn verify_bg_potential(
    sys: &MagneticLagrangianSystem,
    action: &GroupAction,
    delta: &BgPotential,
    points: &[DVector<f64>],
) -> Result<f64> {
    check_action_space(sys, action)?;
    let mut worst = 0.0_f64;
    for x in points {
        let b = sys.magnetic_form(x)?;
        let sigma = action.generators(x)?;
        let dd = delta.jacobian(x)?;
        for c in 0..action.g_dim {
            let contracted = b.contract(&sigma.column(c).into_owned());
            let diff = contracted - dd.row(c).transpose();
            worst = worst.max(max_abs_vec(&diff));
        }
    }
    Ok(worst)
}

/// `β = σ̄⁻ᵀ (μ + δ)`: turns a g-frame momentum into fiber-frame components.
pub fn fiber_frame_covector(sigma_bar: &DMatrix<f64>, m: &DVector<f64>) -> Result<DVector<f64>> {
    solve_square(&sigma_bar.transpose(), m).ok_or(Error::NotFreeAction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::BundleDims;
    use crate::numcore::DerivativeProvider;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    /// L = ½ vᵀ W v − V(q₁) with constant W on (θ, q₁).
    fn two_dof(w: DMatrix<f64>) -> MagneticLagrangianSystem {
        let w2 = w.clone();
        let w3 = w.clone();
        let l = DerivativeProvider::new(move |s| {
            let v = s.rows(2, 2);
            0.5 * (v.transpose() * &w * v)[(0, 0)] - s[1].cos()
        })
        .with_gradient(move |s| {
            let wv = &w2 * s.rows(2, 2);
            dvector![0.0, s[1].sin(), wv[0], wv[1]]
        })
        .with_hessian(move |s| {
            let mut h = DMatrix::zeros(4, 4);
            h[(1, 1)] = s[1].cos();
            h.view_mut((2, 2), (2, 2)).copy_from(&w3);
            h
        });
        MagneticLagrangianSystem::new("two", BundleDims::new(2, 0).unwrap(), l)
    }

    #[test]
    fn zero_velocity_kinetic_momentum_vanishes() {
        let sys = two_dof(dmatrix![2.0, 0.5; 0.5, 1.0]);
        let action = GroupAction::translation(2, vec![0]).unwrap();
        let j = momentum_map(&sys, &action, &dvector![0.3, 0.2, 0.0, 0.0], None).unwrap();
        assert_eq!(j, dvector![0.0]);
        let delta = BgPotential::new(|_| dvector![1.25]);
        let j = momentum_map(&sys, &action, &dvector![0.3, 0.2, 0.0, 0.0], Some(&delta)).unwrap();
        assert_eq!(j, dvector![-1.25]);
    }

    #[test]
    fn locked_inertia_and_degenerate_case() {
        let sys = two_dof(dmatrix![2.0, 0.5; 0.5, 1.0]);
        let action = GroupAction::translation(2, vec![0]).unwrap();
        let rep = check_g_regular(&sys, &action, &[dvector![0.0, 0.1, 0.2, 0.3]]).unwrap();
        assert!(rep.regular());
        assert_eq!(rep.probes[0].locked_inertia[(0, 0)], 2.0);

        // L linear in the symmetry velocity
        let l = DerivativeProvider::new(|s| s[2] + 0.5 * s[3] * s[3]);
        let lin = MagneticLagrangianSystem::new("lin", BundleDims::new(2, 0).unwrap(), l);
        let rep = check_g_regular(&lin, &action, &[dvector![0.0, 0.1, 0.2, 0.3]]).unwrap();
        assert!(!rep.regular());
    }

    #[test]
    fn mechanical_connection_on_a_circle() {
        // L = ½θ̇²: the connection is dθ with no base part
        let l = DerivativeProvider::new(|s| 0.5 * s[1] * s[1]);
        let sys = MagneticLagrangianSystem::new("circle", BundleDims::new(1, 0).unwrap(), l);
        let action = GroupAction::translation(1, vec![0]).unwrap();
        let conn = mechanical_connection(&sys, &action, vec![0]).unwrap();
        let a = conn.one_form(&dvector![0.4]).unwrap();
        assert_eq!(a, dmatrix![1.0]);
    }

    #[test]
    fn mechanical_connection_is_metric_orthogonal() {
        // Γ = W_θθ⁻¹ W_θq for a translation action in θ
        let sys = two_dof(dmatrix![2.0, 0.5; 0.5, 1.0]);
        let action = GroupAction::translation(2, vec![0]).unwrap();
        let g = mechanical_connection_at(&sys, &action, &[0], &dvector![0.0, 0.7]).unwrap();
        assert!((g[(0, 0)] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn indefinite_metric_is_not_mechanical() {
        let sys = two_dof(dmatrix![1.0, 0.0; 0.0, -1.0]);
        let action = GroupAction::translation(2, vec![0]).unwrap();
        assert!(matches!(mechanical_connection(&sys, &action, vec![0]), Err(Error::NotMechanical)));
    }

    #[test]
    fn curvature_of_cosine_connection() {
        // 𝔄 = dθ + cos(ψ) dφ on (θ, φ, ψ): d𝔄_μ = μ sin ψ dφ∧dψ
        let conn = Connection::new("A0", 3, vec![0], |q| dmatrix![q[2].cos(), 0.0]).unwrap();
        let q = dvector![0.1, 0.2, -0.4];
        let f = connection_one_form_mu(&conn, &dvector![0.5], &q).unwrap();
        assert!((f.d.get(1, 2) - 0.5 * (-0.4_f64).sin()).abs() < 1e-9);
        assert!(f.d.get(0, 1).abs() < 1e-12 && f.d.get(0, 2).abs() < 1e-12);
        assert_eq!(f.covector, dvector![0.5, 0.5 * (-0.4_f64).cos(), 0.0]);
        let zero = connection_one_form_mu(&conn, &dvector![0.0], &q).unwrap();
        assert_eq!(zero.covector, DVector::zeros(3));
        assert_eq!(max_abs(zero.d.as_matrix()), 0.0);
    }

    #[test]
    fn bg_potential_of_uniform_field() {
        // B = b dx∧dy, ξ = ∂x: i_ξB = b dy = d(b y)
        let b = 0.7;
        let l = DerivativeProvider::new(|s| 0.5 * (s[2] * s[2] + s[3] * s[3]));
        let sys = MagneticLagrangianSystem::new("plane", BundleDims::new(2, 0).unwrap(), l)
            .with_magnetic(move |_| dmatrix![0.0, b; -b, 0.0]);
        let action = GroupAction::translation(2, vec![0]).unwrap();
        let good = BgPotential::new(move |x| dvector![b * x[1]]);
        let bad = BgPotential::new(move |x| dvector![-b * x[1]]);
        let pts = [dvector![0.1, 0.2], dvector![-1.0, 3.0]];
        assert!(verify_bg_potential(&sys, &action, &good, &pts).unwrap() < 1e-8);
        assert!(verify_bg_potential(&sys, &action, &bad, &pts).unwrap() > 1.0);
        assert_eq!(verify_bg_potential(
            &MagneticLagrangianSystem::new("flat", BundleDims::new(2, 0).unwrap(), DerivativeProvider::new(|_| 0.0)),
            &action,
            &BgPotential::new(|_| dvector![3.0]),
            &pts
        )
        .unwrap(), 0.0);
    }

    #[test]
    fn structure_constants_must_be_antisymmetric() {
        let a = GroupAction::new(2, 2, |_| DMatrix::identity(2, 2));
        let mut c = vec![0.0; 8];
        c[1] = 1.0; // c^0_{01} without its mirror
        assert!(a.clone().with_structure_constants(c.clone()).is_err());
        c[2] = -1.0;
        assert!(!a.with_structure_constants(c).unwrap().is_abelian());
    }

    proptest! {
        #[test]
        fn mechanical_connection_reproduces_generators(
            a in 0.5..3.0_f64, b in -0.4..0.4_f64, c in 0.5..3.0_f64, q in -3.0..3.0_f64
        ) {
            let sys = two_dof(dmatrix![a, b; b, c]);
            let action = GroupAction::translation(2, vec![0]).unwrap();
            let conn = mechanical_connection(&sys, &action, vec![0]).unwrap();
            prop_assert!(conn.generator_defect(&action, &[dvector![0.0, q]]).unwrap() < 1e-10);
        }

        #[test]
        fn translation_invariant_lagrangian_has_no_defect(q in -3.0..3.0_f64, v0 in -2.0..2.0_f64, v1 in -2.0..2.0_f64) {
            let sys = two_dof(dmatrix![2.0, 0.5; 0.5, 1.0]);
            let action = GroupAction::translation(2, vec![0]).unwrap();
            prop_assert!(invariance_defect(&sys, &action, &[dvector![0.3, q, v0, v1]]).unwrap() < 1e-10);
        }
    }
}
