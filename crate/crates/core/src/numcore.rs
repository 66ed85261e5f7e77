//! Numerical substrate: derivative providers, antisymmetric matrices,
//! Newton root finding and kernel-aware least squares.
//!
//! Everything here is dense and sized for problems of dimension O(10).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-6;
/// Step used when a second derivative has to be taken from function values.
pub const DEFAULT_FD_STEP_SECOND: f64 = 1e-4;
/// Singular values below `KERNEL_RELATIVE_THRESHOLD * sigma_max` count as zero.
pub const KERNEL_RELATIVE_THRESHOLD: f64 = 1e-10;
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Dense antisymmetric matrix. The constructor antisymmetrizes its input, so
/// `m[(i, j)] == -m[(j, i)]` holds bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct AntisymMatrix(DMatrix<f64>);

impl AntisymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "antisymmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let t = m.transpose();
        Ok(Self((m - t) * 0.5))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    /// Sets the `(i, j)` entry and its mirror.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        if i == j {
            return;
        }
        self.0[(i, j)] = value;
        self.0[(j, i)] = -value;
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `x^T M y`, summed over the strict upper triangle so that swapping the
    /// arguments negates the result exactly.
    pub fn pair(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                acc += self.0[(i, j)] * (x[i] * y[j] - x[j] * y[i]);
            }
        }
        acc
    }

    /// Interior product `i_x M`, i.e. the covector `y ↦ M(x, y)`.
    pub fn contract(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.tr_mul(x)
    }

    /// Congruence `J^T M J`.
    pub fn pullback(&self, jac: &DMatrix<f64>) -> Result<Self> {
        if jac.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "pullback Jacobian has {} rows, form has dimension {}",
                jac.nrows(),
                self.dim()
            )));
        }
        Self::new(jac.tr_mul(&self.0) * jac)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs(&(&self.0 - &other.0))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FdScheme {
    #[default]
    Central,
}

/// Whether a provider may use its exact callbacks or must fall back to
/// finite differences everywhere.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DerivativeMode {
    #[default]
    Exact,
    FiniteDifference,
}

/// A scalar field with optional exact first and second derivatives.
#[derive(Clone)]
pub struct DerivativeProvider {
    value: ScalarFn,
    exact_gradient: Option<VectorFn>,
    exact_hessian: Option<MatrixFn>,
    fd_step: f64,
    fd_step_second: f64,
    scheme: FdScheme,
    mode: DerivativeMode,
}

impl std::fmt::Debug for DerivativeProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DerivativeProvider")
            .field("exact_gradient", &self.exact_gradient.is_some())
            .field("exact_hessian", &self.exact_hessian.is_some())
            .field("fd_step", &self.fd_step)
            .field("mode", &self.mode)
            .finish()
    }
}

/// Result of [`fd_gradient`].
#[derive(Clone, Debug)]
pub struct GradientEvaluation {
    pub gradient: DVector<f64>,
    /// Max componentwise |exact − FD| when an exact gradient was available.
    pub fd_residual: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct CrossCheck {
    pub gradient: Option<f64>,
    pub hessian: Option<f64>,
}

impl DerivativeProvider {
    pub fn new(value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            exact_gradient: None,
            exact_hessian: None,
            fd_step: DEFAULT_FD_STEP,
            fd_step_second: DEFAULT_FD_STEP_SECOND,
            scheme: FdScheme::Central,
            mode: DerivativeMode::Exact,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.exact_gradient = Some(Arc::new(gradient));
        self
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.exact_hessian = Some(Arc::new(hessian));
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("fd_step must be positive, got {step}")));
        }
        self.fd_step = step;
        Ok(self)
    }

    pub fn with_fd_step_second(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "second-derivative step must be positive, got {step}"
            )));
        }
        self.fd_step_second = step;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn scheme(&self) -> FdScheme {
        self.scheme
    }

    pub fn has_exact_gradient(&self) -> bool {
        self.exact_gradient.is_some()
    }

    pub fn has_exact_hessian(&self) -> bool {
        self.exact_hessian.is_some()
    }

    fn use_exact(&self) -> bool {
        self.mode == DerivativeMode::Exact
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let v = (self.value)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteEvaluation("scalar field".into()))
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match (&self.exact_gradient, self.use_exact()) {
            (Some(g), true) => check_vector(g(x), "gradient"),
            _ => self.fd_gradient(x),
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.use_exact() {
            if let Some(h) = &self.exact_hessian {
                return check_matrix(h(x), "hessian");
            }
            if let Some(g) = &self.exact_gradient {
                let jac = central_jacobian(&|y| g(y), x, self.fd_step);
                return check_matrix(symmetrize(&jac), "hessian");
            }
        }
        self.fd_hessian(x)
    }

    /// Central-difference gradient from values only.
    pub fn fd_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let g = central_gradient(&|y| (self.value)(y), x, self.fd_step);
        check_vector(g, "finite-difference gradient")
    }

    /// Central-difference Hessian from values only.
    pub fn fd_hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let h = central_hessian(&|y| (self.value)(y), x, self.fd_step_second);
        check_matrix(h, "finite-difference hessian")
    }

    /// Max componentwise discrepancy between exact and FD derivatives.
    pub fn cross_check(&self, x: &DVector<f64>) -> Result<CrossCheck> {
        let gradient = match &self.exact_gradient {
            Some(g) => Some(max_abs_vec(&(g(x) - self.fd_gradient(x)?))),
            None => None,
        };
        let hessian = match (&self.exact_hessian, &self.exact_gradient) {
            (Some(h), Some(g)) => {
                // FD of the exact gradient is far less noisy than second
                // differences of values.
                let fd = symmetrize(&central_jacobian(&|y| g(y), x, self.fd_step));
                Some(max_abs(&(h(x) - fd)))
            }
            (Some(h), None) => Some(max_abs(&(h(x) - self.fd_hessian(x)?))),
            _ => None,
        };
        Ok(CrossCheck { gradient, hessian })
    }
}

/// Gradient of the provider's field at `x`. Uses the exact callback when one
/// is present and records its FD cross-check residual.
pub fn fd_gradient(provider: &DerivativeProvider, x: &DVector<f64>) -> Result<GradientEvaluation> {
    let fd = provider.fd_gradient(x)?;
    match &provider.exact_gradient {
        Some(g) if provider.use_exact() => {
            let exact = check_vector(g(x), "gradient")?;
            let fd_residual = Some(max_abs_vec(&(&exact - &fd)));
            Ok(GradientEvaluation { gradient: exact, fd_residual })
        }
        _ => Ok(GradientEvaluation { gradient: fd, fd_residual: None }),
    }
}

pub fn central_gradient(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut y = x.clone();
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Jacobian `∂f_i/∂x_j` of a vector field by central differences.
pub fn central_jacobian(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let mut y = x.clone();
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        cols.push((fp - fm) / (2.0 * h));
    }
    if cols.is_empty() {
        let m = f(x).len();
        return DMatrix::zeros(m, 0);
    }
    DMatrix::from_columns(&cols)
}

pub fn central_hessian(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut out = DMatrix::zeros(n, n);
    let f0 = f(x);
    let mut y = x.clone();
    for i in 0..n {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..n {
            let mut eval = |si: f64, sj: f64| {
                y[i] = x[i] + si * h;
                y[j] = x[j] + sj * h;
                let v = f(&y);
                y[i] = x[i];
                y[j] = x[j];
                v
            };
            let d = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * h * h);
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

/// Partial derivatives of a matrix-valued field: entry `m` of the result is
/// `∂F/∂x_m`.
pub fn central_matrix_derivatives(
    f: &dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    x: &DVector<f64>,
    h: f64,
) -> Vec<DMatrix<f64>> {
    let mut y = x.clone();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Exterior derivative of a 1-form given its coefficient Jacobian
/// `jac[(j, i)] = ∂θ_j/∂x_i`: `(dθ)_{ij} = ∂_i θ_j − ∂_j θ_i`.
pub fn exterior_derivative_from_jacobian(jac: &DMatrix<f64>) -> AntisymMatrix {
    // jac^T - jac is antisymmetric; AntisymMatrix::new halves it, so double first.
    let d = jac.transpose() - jac;
    AntisymMatrix::new(d).expect("square Jacobian")
}

/// FD exterior derivative of a 1-form field.
pub fn exterior_derivative_1form(
    theta: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> AntisymMatrix {
    exterior_derivative_from_jacobian(&central_jacobian(theta, x, h))
}

/// Components `(dB)_{ijk} = ∂_i B_jk + ∂_j B_ki + ∂_k B_ij` for `i < j < k`,
/// by central differences.
pub fn exterior_derivative_2form(
    b: &dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    x: &DVector<f64>,
    h: f64,
) -> Vec<f64> {
    let d = central_matrix_derivatives(b, x, h);
    let n = x.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                out.push(d[i][(j, k)] + d[j][(k, i)] + d[k][(i, j)]);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50 }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Undamped Newton iteration until `‖residual‖_∞ ≤ tol`.
pub fn newton_solve<R, J>(
    residual: R,
    jacobian: J,
    x0: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let mut x = x0.clone();
    let mut last = f64::INFINITY;
    for iteration in 0..=opts.max_iter {
        let r = residual(&x)?;
        if r.len() != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "residual has length {}, unknown has length {}",
                r.len(),
                x.len()
            )));
        }
        let norm = max_abs_vec(&r);
        if !norm.is_finite() {
            return Err(Error::NonFiniteEvaluation("Newton residual".into()));
        }
        last = norm;
        if norm <= opts.tol {
            return Ok(NewtonOutcome { x, iterations: iteration, residual_norm: norm });
        }
        if iteration == opts.max_iter {
            break;
        }
        let jac = jacobian(&x)?;
        let step = solve_square(&jac, &r).ok_or(Error::SingularJacobian { iteration })?;
        x -= step;
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: last })
}

/// LU solve that refuses numerically singular matrices.
pub fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if !a.is_square() || a.nrows() != b.len() {
        return None;
    }
    if a.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if max.is_nan() || max <= 0.0 || min <= 1e-14 * max {
        return None;
    }
    lu.solve(b)
}

/// Orthonormal basis (as columns) of the null space of `a`, using the
/// relative singular-value threshold.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (nrows, ncols) = a.shape();
    if ncols == 0 {
        return DMatrix::zeros(0, 0);
    }
    // Pad with zero rows so the SVD yields a full right basis.
    let padded = if nrows < ncols {
        let mut p = DMatrix::zeros(ncols, ncols);
        p.view_mut((0, 0), (nrows, ncols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = svd(padded, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max(*s));
    let threshold = KERNEL_RELATIVE_THRESHOLD * sigma_max;
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| sigma_max == 0.0 || **s <= threshold)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(ncols, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm least-squares solution of `a x = b` (thresholded pseudo-inverse).
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let ncols = a.ncols();
    if ncols == 0 {
        return DVector::zeros(0);
    }
    let svd = svd(a.clone(), true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max(*s));
    let threshold = KERNEL_RELATIVE_THRESHOLD * sigma_max;
    let mut x = DVector::zeros(ncols);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if sigma_max > 0.0 && *s > threshold {
            let coeff = u.column(i).dot(b) / s;
            x += v_t.row(i).transpose() * coeff;
        }
    }
    x
}

#[derive(Clone, Debug)]
pub struct LsqSolution {
    pub solution: DVector<f64>,
    /// Columns span the solution freedom left after fixing components
    /// (`ker M` when nothing is fixed), embedded in the full index space.
    pub kernel_basis: DMatrix<f64>,
    pub consistent: bool,
    /// Max |b'·ν| over an orthonormal basis ν of the left null space.
    pub defect: f64,
}

/// Minimum-norm solution of `M x = b` subject to `x[i] = v` for every
/// `(i, v)` in `fixed`.
pub fn constrained_lsq_solve(
    m: &AntisymMatrix,
    b: &DVector<f64>,
    fixed: &[(usize, f64)],
) -> Result<LsqSolution> {
    constrained_lsq_general(m.as_matrix(), b, fixed)
}

pub(crate) fn constrained_lsq_general(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    fixed: &[(usize, f64)],
) -> Result<LsqSolution> {
    let (nrows, dim) = m.shape();
    if nrows != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {nrows} rows, right-hand side has length {}",
            b.len()
        )));
    }
    let mut is_fixed: Vec<Option<f64>> = vec![None; dim];
    for &(i, v) in fixed {
        if i >= dim {
            return Err(Error::DimensionMismatch(format!(
                "fixed index {i} out of range for dimension {dim}"
            )));
        }
        if let Some(prev) = is_fixed[i] {
            if prev != v {
                return Err(Error::InconsistentConstraint { residual: (prev - v).abs() });
            }
        }
        is_fixed[i] = Some(v);
    }
    let free: Vec<usize> = (0..dim).filter(|&i| is_fixed[i].is_none()).collect();

    let mut rhs = b.clone();
    for (i, v) in is_fixed.iter().enumerate() {
        if let Some(v) = v {
            rhs -= m.column(i) * *v;
        }
    }
    let a = m.select_columns(&free);
    let x_free = pinv_solve(&a, &rhs);
    let kernel_free = null_space(&a);
    let left_null = null_space(&a.transpose());
    let defect = left_null
        .column_iter()
        .map(|nu| nu.dot(&rhs).abs())
        .fold(0.0_f64, f64::max);
    let consistent = defect <= CONSISTENCY_TOLERANCE * (1.0 + rhs.norm());

    if !consistent && !fixed.is_empty() {
        let unconstrained = null_space(&m.transpose())
            .column_iter()
            .map(|nu| nu.dot(b).abs())
            .fold(0.0_f64, f64::max);
        if unconstrained <= CONSISTENCY_TOLERANCE * (1.0 + b.norm()) {
            return Err(Error::InconsistentConstraint { residual: defect });
        }
    }

    let mut solution = DVector::zeros(dim);
    for (i, v) in is_fixed.iter().enumerate() {
        if let Some(v) = v {
            solution[i] = *v;
        }
    }
    for (k, &i) in free.iter().enumerate() {
        solution[i] = x_free[k];
    }
    let mut kernel_basis = DMatrix::zeros(dim, kernel_free.ncols());
    for (k, &i) in free.iter().enumerate() {
        for c in 0..kernel_free.ncols() {
            kernel_basis[(i, c)] = kernel_free[(k, c)];
        }
    }
    Ok(LsqSolution { solution, kernel_basis, consistent, defect })
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Spectral condition number; `inf` for singular or empty-rank matrices.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let s = svd(m.clone(), false, false).singular_values;
    let max = s.iter().fold(0.0_f64, |a, v| a.max(*v));
    let min = s.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if min <= KERNEL_RELATIVE_THRESHOLD * max || max == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank under the relative singular-value threshold.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = svd(m.clone(), false, false).singular_values;
    let max = s.iter().fold(0.0_f64, |a, v| a.max(*v));
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|v| **v > KERNEL_RELATIVE_THRESHOLD * max).count()
}

type Svd = nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>;

/// SVD checked against a reconstruction of `m`.
///
/// The library routine occasionally returns visibly wrong factors for small
/// matrices with clustered singular values, and whether it does depends on
/// the stopping tolerance. Several tolerances and the transposed problem are
/// tried; the first candidate that reconstructs `m` is kept, otherwise the
/// most accurate one.
pub fn svd(m: DMatrix<f64>, compute_u: bool, compute_v: bool) -> Svd {
    let (nrows, ncols) = m.shape();
    if nrows == 0 || ncols == 0 {
        return m.svd(compute_u, compute_v);
    }
    let tol = 1e-12 * (1.0 + max_abs(&m)) * nrows.max(ncols) as f64;
    let mut best: Option<(f64, Svd)> = None;
    let t = m.transpose();
    for transposed in [false, true] {
        for eps in [f64::EPSILON, 1e-15, 1e-17, 1e-14] {
            let candidate = if transposed {
                t.clone().try_svd(true, true, eps, 0).map(|s| Svd {
                    u: s.v_t.map(|v| v.transpose()),
                    v_t: s.u.map(|u| u.transpose()),
                    singular_values: s.singular_values,
                })
            } else {
                m.clone().try_svd(true, true, eps, 0)
            };
            let Some(c) = candidate else { continue };
            let err = svd_error(&m, &c);
            if err <= tol {
                return trim(c, compute_u, compute_v);
            }
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, c));
            }
        }
    }
    match best {
        Some((_, c)) => trim(c, compute_u, compute_v),
        None => m.svd(compute_u, compute_v),
    }
}

fn svd_error(m: &DMatrix<f64>, s: &Svd) -> f64 {
    let (Some(u), Some(v_t)) = (&s.u, &s.v_t) else { return f64::INFINITY };
    let rec = u * DMatrix::from_diagonal(&s.singular_values) * v_t;
    let k = s.singular_values.len();
    let ortho_u = max_abs(&(u.tr_mul(u) - DMatrix::identity(k, k)));
    let ortho_v = max_abs(&(v_t * v_t.transpose() - DMatrix::identity(k, k)));
    max_abs(&(rec - m)).max(ortho_u).max(ortho_v)
}

fn trim(mut s: Svd, compute_u: bool, compute_v: bool) -> Svd {
    if !compute_u {
        s.u = None;
    }
    if !compute_v {
        s.v_t = None;
    }
    s
}

fn check_vector(v: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFiniteEvaluation(what.into()))
    }
}

fn check_matrix(m: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(m)
    } else {
        Err(Error::NonFiniteEvaluation(what.into()))
    }
}
