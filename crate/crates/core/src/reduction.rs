//! Fiberwise reduction by translation actions and the two-step Routh
//! pipeline: `ψ_{L,β}` with `β` built from `(μ, δ)`, then the quotient by
//! `G_μ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::harness::Trajectory;
use crate::lagrangian::{BundleDims, MagneticLagrangianSystem};
use crate::numcore::{max_abs, max_abs_vec, AntisymMatrix, DerivativeProvider, DEFAULT_FD_STEP};
use crate::symmetry::{check_g_regular, fiber_frame_covector, invariance_defect, BgPotential, Connection, GroupAction};
use crate::transform::{BetaMap, CompatibleTransformation, TransformationPair};

/// `∂L/∂(dropped)` and `i_ξ B` must be below this.
pub const REDUCIBILITY_TOLERANCE: f64 = 1e-10;
/// `∂B/∂(dropped)` is a difference quotient, hence the looser bound.
pub const MAGNETIC_INVARIANCE_TOLERANCE: f64 = 1e-5;
/// Invariance of the full Lagrangian under the group.
pub const INVARIANCE_TOLERANCE: f64 = 1e-8;

/// `β_a = Σ^b_a (μ_b + δ_b)` with `Σ = σ̄⁻¹`, evaluated at `F(p₁)`.
pub fn build_beta_from_mu(
    action: &GroupAction,
    mu: &DVector<f64>,
    delta: Option<BgPotential>,
    pair: &TransformationPair,
    probe: Option<&DVector<f64>>,
) -> Result<BetaMap> {
    if mu.len() != action.g_dim || action.g_dim != pair.k_f() {
        return Err(Error::DimensionMismatch(format!(
            "mu has length {}, g has dimension {}, fiber has dimension {}",
            mu.len(),
            action.g_dim,
            pair.k_f()
        )));
    }
    if action.space_dim != pair.dims2.point_len() {
        return Err(Error::DimensionMismatch("action must act on the upstairs points".into()));
    }
    let f = pair.big_f_matrix();
    let rows = pair.base_fiber.clone();
    let has_delta = delta.is_some();
    let eval = {
        let (action, mu, f, rows) = (action.clone(), mu.clone(), f.clone(), rows.clone());
        move |p1: &DVector<f64>| -> Result<DVector<f64>> {
            let p2 = &f * p1;
            let sigma_bar = action.fiber_block(&p2, &rows)?;
            let m = match &delta {
                Some(d) => &mu + d.value(&p2)?,
                None => mu.clone(),
            };
            fiber_frame_covector(&sigma_bar, &m)
        }
    };
    let p0 = probe.cloned().unwrap_or_else(|| DVector::zeros(pair.dims1.point_len()));
    let b0 = eval(&p0)?;
    // translations have a constant σ̄, so without δ the map is constant
    if action.translation_coords.is_some() && !has_delta {
        return Ok(BetaMap::constant(b0, pair.dims1.point_len()));
    }
    let kf = pair.k_f();
    Ok(BetaMap::new(move |p1| eval(p1).unwrap_or_else(|_| DVector::from_element(kf, f64::NAN))))
}

/// Translation action on fiber coordinates of `ε: P → Q`.
#[derive(Clone, Debug)]
pub struct FiberwiseAction {
    pub action: GroupAction,
    pub dims: BundleDims,
    pub reduced_dims: BundleDims,
    /// Dropped coordinates as `P` point indices (all `≥ n`).
    pub dropped: Vec<usize>,
}

impl FiberwiseAction {
    pub fn translation(dims: BundleDims, dropped: Vec<usize>) -> Result<Self> {
        if dropped.iter().any(|&c| c < dims.n || c >= dims.point_len()) {
            return Err(Error::InvalidArgument("translated coordinates must be fiber coordinates".into()));
        }
        let mut sorted = dropped.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != dropped.len() {
            return Err(Error::InvalidArgument("repeated translated coordinate".into()));
        }
        let action = GroupAction::translation(dims.point_len(), dropped.clone())?;
        let reduced_dims = BundleDims::new(dims.n, dims.k - dropped.len())?;
        Ok(Self { action, dims, reduced_dims, dropped })
    }

    /// Kept `P` point indices.
    pub fn kept_points(&self) -> Vec<usize> {
        (0..self.dims.point_len()).filter(|c| !self.dropped.contains(c)).collect()
    }

    /// Kept `T_PQ` state indices.
    pub fn kept_states(&self) -> Vec<usize> {
        let drop: Vec<usize> = self.dropped.iter().map(|&c| self.dims.state_index_of_point(c)).collect();
        (0..self.dims.state_len()).filter(|c| !drop.contains(c)).collect()
    }

    /// Dropped `T_PQ` state indices.
    pub fn dropped_states(&self) -> Vec<usize> {
        self.dropped.iter().map(|&c| self.dims.state_index_of_point(c)).collect()
    }

    /// `τ_G`.
    pub fn project_state(&self, s: &DVector<f64>) -> DVector<f64> {
        s.select_rows(&self.kept_states())
    }

    /// Section with the dropped coordinates at `values` (0 if `None`).
    pub fn embed_state(&self, r: &DVector<f64>, values: Option<&DVector<f64>>) -> DVector<f64> {
        let mut s = DVector::zeros(self.dims.state_len());
        for (j, &i) in self.kept_states().iter().enumerate() {
            s[i] = r[j];
        }
        if let Some(v) = values {
            for (a, &i) in self.dropped_states().iter().enumerate() {
                s[i] = v[a];
            }
        }
        s
    }

    pub fn embed_point(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut p = DVector::zeros(self.dims.point_len());
        for (j, &i) in self.kept_points().iter().enumerate() {
            p[i] = r[j];
        }
        p
    }

    /// Matrix of `Tτ_G`.
    pub fn projection_matrix(&self) -> DMatrix<f64> {
        let kept = self.kept_states();
        let mut m = DMatrix::zeros(kept.len(), self.dims.state_len());
        for (j, &i) in kept.iter().enumerate() {
            m[(j, i)] = 1.0;
        }
        m
    }
}

/// Worst reducibility violations over a probe set.
#[derive(Clone, Debug, Default)]
pub struct ReducibilityReport {
    pub lagrangian: f64,
    pub contraction: f64,
    pub magnetic_invariance: f64,
}

/// Invariance of `L`, `i_ξ B = 0` and invariance of `B` at the probes.
/// Returns the first offending probe as [`Error::NotReducible`].
pub fn validate_reducible(
    sys: &MagneticLagrangianSystem,
    fa: &FiberwiseAction,
    probes: &[DVector<f64>],
) -> Result<ReducibilityReport> {
    if sys.dims != fa.dims {
        return Err(Error::DimensionMismatch("action and system live on different bundles".into()));
    }
    let mut rep = ReducibilityReport::default();
    let dropped_states = fa.dropped_states();
    for (probe, s) in probes.iter().enumerate() {
        let g = sys.lagrangian.gradient(s)?;
        let dl = dropped_states.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
        if dl > REDUCIBILITY_TOLERANCE {
            return Err(Error::NotReducible { probe, reason: "Lagrangian depends on a dropped coordinate".into(), defect: dl });
        }
        let point = sys.dims.point_of(s);
        let (contraction, invariance) = magnetic_defects(sys, fa, &point)?;
        if contraction > REDUCIBILITY_TOLERANCE {
            return Err(Error::NotReducible { probe, reason: "i_ξ B does not vanish".into(), defect: contraction });
        }
        if invariance > MAGNETIC_INVARIANCE_TOLERANCE {
            return Err(Error::NotReducible { probe, reason: "B depends on a dropped coordinate".into(), defect: invariance });
        }
        rep.lagrangian = rep.lagrangian.max(dl);
        rep.contraction = rep.contraction.max(contraction);
        rep.magnetic_invariance = rep.magnetic_invariance.max(invariance);
    }
    Ok(rep)
}

fn magnetic_defects(sys: &MagneticLagrangianSystem, fa: &FiberwiseAction, point: &DVector<f64>) -> Result<(f64, f64)> {
    if !sys.has_magnetic() {
        return Ok((0.0, 0.0));
    }
    let b = sys.magnetic_form(point)?;
    let mut contraction = 0.0_f64;
    let mut invariance = 0.0_f64;
    for &c in &fa.dropped {
        contraction = contraction.max(max_abs_vec(&b.as_matrix().column(c).into_owned()));
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus[c] += DEFAULT_FD_STEP;
        minus[c] -= DEFAULT_FD_STEP;
        let d = (sys.magnetic_form(&plus)?.into_matrix() - sys.magnetic_form(&minus)?.into_matrix())
            / (2.0 * DEFAULT_FD_STEP);
        invariance = invariance.max(max_abs(&d));
    }
    Ok((contraction, invariance))
}

/// `(L̄, B̄)` on `P/G → Q`, obtained by evaluating at the dropped
/// coordinates `= 0`.
pub fn fiberwise_reduce(
    sys: &MagneticLagrangianSystem,
    fa: &FiberwiseAction,
    probes: &[DVector<f64>],
) -> Result<MagneticLagrangianSystem> {
    validate_reducible(sys, fa, probes)?;
    let kept = fa.kept_states();
    let lagrangian = &sys.lagrangian;
    let embed = {
        let fa = fa.clone();
        move |r: &DVector<f64>| fa.embed_state(r, None)
    };
    let (l1, e1) = (lagrangian.clone(), embed.clone());
    let mut provider = DerivativeProvider::new(move |r| l1.value(&e1(r)).unwrap_or(f64::NAN))
        .with_mode(lagrangian.mode());
    provider = provider.with_fd_step(lagrangian.fd_step())?;
    if lagrangian.has_exact_gradient() {
        let (l2, e2, k2) = (lagrangian.clone(), embed.clone(), kept.clone());
        provider = provider.with_gradient(move |r| {
            l2.gradient(&e2(r)).map(|g| g.select_rows(&k2)).unwrap_or_else(|_| DVector::from_element(k2.len(), f64::NAN))
        });
    }
    if lagrangian.has_exact_hessian() {
        let (l3, e3, k3) = (lagrangian.clone(), embed, kept.clone());
        provider = provider.with_hessian(move |r| {
            l3.hessian(&e3(r))
                .map(|h| h.select_rows(&k3).select_columns(&k3))
                .unwrap_or_else(|_| DMatrix::from_element(k3.len(), k3.len(), f64::NAN))
        });
    }
    let mut reduced = MagneticLagrangianSystem::new(format!("{}/reduced", sys.id), fa.reduced_dims, provider);
    if sys.has_magnetic() {
        let (full, fa2) = (sys.clone(), fa.clone());
        let kept_points = fa.kept_points();
        let pdim = kept_points.len();
        reduced = reduced.with_magnetic(move |r| {
            full.magnetic_form(&fa2.embed_point(r))
                .map(|b| b.into_matrix().select_rows(&kept_points).select_columns(&kept_points))
                .unwrap_or_else(|_| DMatrix::from_element(pdim, pdim, f64::NAN))
        });
    }
    let periodic = sys
        .periodic_coords
        .iter()
        .filter_map(|c| kept.iter().position(|k| k == c))
        .collect();
    Ok(reduced.with_periodic(periodic))
}

/// Worst violations of `τ*Ω̄ = Ω`, `τ*Ē = E` and `p_G∘FL = FL̄∘τ`.
#[derive(Clone, Debug, Default)]
pub struct ProjectionReport {
    pub omega: f64,
    pub energy: f64,
    pub fiber_derivative: f64,
}

pub fn verify_projection(
    sys: &MagneticLagrangianSystem,
    reduced: &MagneticLagrangianSystem,
    fa: &FiberwiseAction,
    probes: &[DVector<f64>],
) -> Result<ProjectionReport> {
    let t = fa.projection_matrix();
    let mut rep = ProjectionReport::default();
    for s in probes {
        let r = fa.project_state(s);
        let pulled = reduced.presymplectic_matrix(&r)?.pullback(&t)?;
        rep.omega = rep.omega.max(pulled.max_abs_diff(&sys.presymplectic_matrix(s)?));
        rep.energy = rep.energy.max((reduced.energy(&r)? - sys.energy(s)?).abs());
        let fl = sys.fiber_derivative(s)?;
        rep.fiber_derivative = rep.fiber_derivative.max(max_abs_vec(&(reduced.fiber_derivative(&r)? - fl)));
    }
    Ok(rep)
}

/// Both stages of a Routh reduction.
#[derive(Clone, Debug)]
pub struct RouthResult {
    pub full: MagneticLagrangianSystem,
    pub action: GroupAction,
    pub transformation: CompatibleTransformation,
    pub intermediate: MagneticLagrangianSystem,
    pub fiberwise: FiberwiseAction,
    pub reduced: MagneticLagrangianSystem,
    pub mu: DVector<f64>,
    pub connection: Connection,
    pub delta: Option<BgPotential>,
}

/// Options for [`routh_reduce`].
#[derive(Clone, Debug, Default)]
pub struct RouthOptions {
    /// Basis indices of `g_μ`; `None` means `G_μ = G` (required when `G` is
    /// non-Abelian).
    pub isotropy: Option<Vec<usize>>,
}

/// Step 1 (`ψ_{L,β}`) followed by step 2 (quotient by `G_μ`).
///
/// `probes` are states of the full system used for the invariance,
/// regularity and reducibility checks.
pub fn routh_reduce(
    full: &MagneticLagrangianSystem,
    action: &GroupAction,
    mu: &DVector<f64>,
    connection: &Connection,
    delta: Option<BgPotential>,
    probes: &[DVector<f64>],
    opts: &RouthOptions,
) -> Result<RouthResult> {
    if full.dims.k != 0 {
        return Err(Error::Unsupported("Routh reduction starts from a system on TQ".into()));
    }
    let defect = invariance_defect(full, action, probes)?;
    if defect > INVARIANCE_TOLERANCE {
        return Err(Error::NotInvariant { defect });
    }
    if !check_g_regular(full, action, probes)?.regular() {
        return Err(Error::NotFreeAction);
    }
    let kf = connection.k_f();
    let dims1 = BundleDims::new(full.dims.n - kf, kf)?;
    let pair = TransformationPair::new(dims1, full.dims, connection.fiber_coords.clone())?;
    let ct0 = CompatibleTransformation::new(pair.clone(), full.clone(), BetaMap::constant(DVector::zeros(kf), 0), connection.clone())?;
    let probe1 = probes.first().map(|s| dims1.point_of(&ct0.project(s, None)));
    let beta = build_beta_from_mu(action, mu, delta.clone(), &pair, probe1.as_ref())?;
    let transformation = CompatibleTransformation::new(pair, full.clone(), beta, connection.clone())?;
    let intermediate = transformation.induced_system();

    let isotropy: Vec<usize> = match &opts.isotropy {
        Some(b) => b.clone(),
        None if action.is_abelian() => (0..action.g_dim).collect(),
        None => return Err(Error::Unsupported("non-Abelian G needs an explicit isotropy basis".into())),
    };
    // β-coordinates of q̄ are translated; G_μ acts through the matching fiber slots
    let dropped = isotropy.iter().map(|&b| dims1.n + b).collect();
    let fiberwise = FiberwiseAction::translation(dims1, dropped)?;
    let probes1: Vec<DVector<f64>> = probes.iter().map(|s| transformation.project(s, None)).collect();
    let reduced = fiberwise_reduce(&intermediate, &fiberwise, &probes1)?;
    Ok(RouthResult {
        full: full.clone(),
        action: action.clone(),
        transformation,
        intermediate,
        fiberwise,
        reduced,
        mu: mu.clone(),
        connection: connection.clone(),
        delta,
    })
}

impl RouthResult {
    /// Reduced state of a full state on `{J = μ}`: coordinate projection.
    pub fn reduced_state(&self, full_state: &DVector<f64>) -> DVector<f64> {
        self.fiberwise.project_state(&self.transformation.project(full_state, None))
    }

    /// Full state over a reduced state with group coordinates `group`;
    /// fiber velocities come from the momentum equation.
    pub fn full_state(&self, reduced_state: &DVector<f64>, group: &DVector<f64>) -> Result<DVector<f64>> {
        let s1 = self.fiberwise.embed_state(reduced_state, Some(group));
        self.transformation.apply_psi(&s1)
    }

    /// Dropped group coordinates of a full state.
    pub fn group_coords(&self, full_state: &DVector<f64>) -> DVector<f64> {
        let s1 = self.transformation.project(full_state, None);
        s1.select_rows(&self.fiberwise.dropped_states())
    }

    /// Full trajectory from a reduced one: fiber velocities from `J = μ`,
    /// group coordinates by fourth-order cumulative quadrature.
    pub fn reconstruct(&self, reduced: &Trajectory, group0: &DVector<f64>) -> Result<Trajectory> {
        reduced.validate()?;
        if reduced.len() < 4 {
            return Err(Error::TooShort { len: reduced.len(), need: 4 });
        }
        let h = reduced.step()?;
        let g = self.fiberwise.dropped.len();
        if group0.len() != g {
            return Err(Error::DimensionMismatch(format!("expected {g} group coordinates")));
        }
        let fiber_rows: Vec<usize> = self
            .fiberwise
            .dropped
            .iter()
            .map(|&c| self.transformation.pair.fiber_velocity_index(c - self.transformation.pair.dims1.n))
            .collect();
        // group velocities do not depend on the group coordinates
        let mut rates = vec![Vec::with_capacity(reduced.len()); g];
        for r in &reduced.states {
            let s2 = self.full_state(r, &DVector::zeros(g))?;
            for (a, &row) in fiber_rows.iter().enumerate() {
                rates[a].push(s2[row]);
            }
        }
        let integrals: Vec<Vec<f64>> = rates.iter().map(|f| cumulative_quadrature(f, h)).collect::<Result<_>>()?;
        let mut out = Trajectory::new(self.full.id.clone()).with_momentum(self.mu.as_slice());
        for (j, (t, r)) in reduced.times.iter().zip(&reduced.states).enumerate() {
            let group = DVector::from_iterator(g, (0..g).map(|a| group0[a] + integrals[a][j]));
            out.push(*t, self.full_state(r, &group)?);
        }
        Ok(out)
    }
}

/// Fourth-order cumulative integral of uniformly sampled values; entry `j`
/// approximates `∫_{t₀}^{t_j} f`.
pub fn cumulative_quadrature(f: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = f.len();
    if n < 4 {
        return Err(Error::TooShort { len: n, need: 4 });
    }
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    for j in 0..n - 1 {
        let piece = if j == 0 {
            9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]
        } else if j == n - 2 {
            9.0 * f[n - 1] + 19.0 * f[n - 2] - 5.0 * f[n - 3] + f[n - 4]
        } else {
            -f[j - 1] + 13.0 * f[j] + 13.0 * f[j + 1] - f[j + 2]
        };
        out.push(out[j] + h / 24.0 * piece);
    }
    Ok(out)
}

/// Worst `|i_ξ B_μ|` and `|∂B_μ/∂(dropped)|` over the probes (`P` points).
#[derive(Clone, Debug, Default)]
pub struct BmuReport {
    pub contraction: f64,
    pub invariance: f64,
}

impl BmuReport {
    pub fn max(&self) -> f64 {
        self.contraction.max(self.invariance)
    }
}

pub fn verify_bmu_reducible(
    intermediate: &MagneticLagrangianSystem,
    fa: &FiberwiseAction,
    points: &[DVector<f64>],
) -> Result<BmuReport> {
    let mut rep = BmuReport::default();
    for p in points {
        let (c, i) = magnetic_defects(intermediate, fa, p)?;
        rep.contraction = rep.contraction.max(c);
        rep.invariance = rep.invariance.max(i);
    }
    Ok(rep)
}

/// `B` restricted to the kept coordinates at a reduced point.
pub fn reduced_magnetic(reduced: &MagneticLagrangianSystem, point: &DVector<f64>) -> Result<AntisymMatrix> {
    reduced.magnetic_form(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetry::mechanical_connection;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    /// L = ½ vᵀ W v − ½ x² on (θ, x) with constant W.
    fn coupled_oscillator() -> MagneticLagrangianSystem {
        let w = dmatrix![2.0, 0.5; 0.5, 1.0];
        let (w1, w2) = (w.clone(), w.clone());
        let l = DerivativeProvider::new(move |s| {
            let v = s.rows(2, 2).into_owned();
            0.5 * v.dot(&(&w * &v)) - 0.5 * s[1] * s[1]
        })
        .with_gradient(move |s| {
            let v = s.rows(2, 2).into_owned();
            let wv = &w1 * v;
            dvector![0.0, -s[1], wv[0], wv[1]]
        })
        .with_hessian(move |_| {
            let mut h = DMatrix::zeros(4, 4);
            h[(1, 1)] = -1.0;
            h.view_mut((2, 2), (2, 2)).copy_from(&w2);
            h
        });
        MagneticLagrangianSystem::new("oscillator", BundleDims::new(2, 0).unwrap(), l).with_periodic(vec![0])
    }

    fn probes() -> Vec<DVector<f64>> {
        (0..6).map(|j| {
            let t = j as f64;
            dvector![0.7 * t, (0.3 * t).sin(), (0.5 * t).cos(), 0.2 - 0.1 * t]
        })
        .collect()
    }

    fn reduce(mu: f64) -> RouthResult {
        let sys = coupled_oscillator();
        let action = GroupAction::translation(2, vec![0]).unwrap();
        let conn = mechanical_connection(&sys, &action, vec![0]).unwrap();
        routh_reduce(&sys, &action, &dvector![mu], &conn, None, &probes(), &RouthOptions::default()).unwrap()
    }

    #[test]
    fn beta_from_rescaled_generator() {
        let pair = TransformationPair::new(BundleDims::new(1, 1).unwrap(), BundleDims::new(2, 0).unwrap(), vec![0])
            .unwrap();
        let action = GroupAction::new(1, 2, |_| dmatrix![2.0; 0.0]);
        let beta = build_beta_from_mu(&action, &dvector![0.6], None, &pair, None).unwrap();
        assert!((beta.value(&dvector![0.1, 0.2]).unwrap()[0] - 0.3).abs() < 1e-15);
        let zero = build_beta_from_mu(&action, &dvector![0.0], None, &pair, None).unwrap();
        assert_eq!(zero.value(&dvector![0.1, 0.2]).unwrap()[0], 0.0);
        let frozen = GroupAction::new(1, 2, |_| dmatrix![0.0; 1.0]);
        assert!(matches!(build_beta_from_mu(&frozen, &dvector![1.0], None, &pair, None), Err(Error::NotFreeAction)));
    }

    #[test]
    fn reduced_lagrangian_is_the_routhian() {
        // R = ½(1 − 0.125)ẋ² − ½x² − μ²/4 for the mechanical connection
        let mu = 0.8;
        let rr = reduce(mu);
        assert_eq!(rr.reduced.dims, BundleDims::new(1, 0).unwrap());
        for (x, v) in [(0.3, -0.2), (1.0, 0.5), (-0.4, 2.0)] {
            let r = dvector![x, v];
            let expected = 0.5 * 0.875 * v * v - 0.5 * x * x - mu * mu / 4.0;
            assert!((rr.reduced.lagrangian.value(&r).unwrap() - expected).abs() < 1e-12);
            let h = rr.reduced.lagrangian.hessian(&r).unwrap();
            assert!((h[(1, 1)] - 0.875).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_identities_hold() {
        let rr = reduce(0.8);
        let probes1: Vec<_> = (0..5).map(|j| dvector![0.1 * j as f64, -0.3, 0.4 + j as f64]).collect();
        let rep = verify_projection(&rr.intermediate, &rr.reduced, &rr.fiberwise, &probes1).unwrap();
        assert!(rep.omega < 1e-8, "{rep:?}");
        assert!(rep.energy < 1e-12);
        assert!(rep.fiber_derivative < 1e-10);
    }

    #[test]
    fn trivial_group_is_identity_reduction() {
        let sys = coupled_oscillator();
        let fa = FiberwiseAction::translation(sys.dims, vec![]).unwrap();
        let red = fiberwise_reduce(&sys, &fa, &probes()).unwrap();
        for s in probes() {
            assert_eq!(red.lagrangian.value(&s).unwrap(), sys.lagrangian.value(&s).unwrap());
        }
    }

    #[test]
    fn dependence_on_dropped_coordinate_is_rejected() {
        let l = DerivativeProvider::new(|s| 0.5 * s[1] * s[1] + 0.1 * s[2].sin())
            .with_gradient(|s| dvector![0.0, s[1], 0.1 * s[2].cos()]);
        let sys = MagneticLagrangianSystem::new("bad", BundleDims::new(1, 1).unwrap(), l);
        let fa = FiberwiseAction::translation(sys.dims, vec![1]).unwrap();
        let err = fiberwise_reduce(&sys, &fa, &[dvector![0.0, 1.0, 0.3]]).unwrap_err();
        assert!(matches!(err, Error::NotReducible { probe: 0, .. }));
    }

    #[test]
    fn non_invariant_magnetic_term_is_flagged() {
        let l = DerivativeProvider::new(|s| 0.5 * s[1] * s[1]);
        let sys = MagneticLagrangianSystem::new("b", BundleDims::new(1, 1).unwrap(), l)
            .with_magnetic(|p| dmatrix![0.0, p[1].sin(); -p[1].sin(), 0.0]);
        let fa = FiberwiseAction::translation(sys.dims, vec![1]).unwrap();
        let rep = verify_bmu_reducible(&sys, &fa, &[dvector![0.0, 0.4]]).unwrap();
        assert!(rep.contraction > 0.1 && rep.invariance > 0.1);
    }

    #[test]
    fn non_invariant_lagrangian_is_rejected() {
        let l = DerivativeProvider::new(|s| 0.5 * (s[2] * s[2] + s[3] * s[3]) - 0.2 * s[0].cos());
        let sys = MagneticLagrangianSystem::new("tilted", BundleDims::new(2, 0).unwrap(), l);
        let action = GroupAction::translation(2, vec![0]).unwrap();
        let conn = Connection::new("flat", 2, vec![0], |_| dmatrix![0.0]).unwrap();
        let err = routh_reduce(&sys, &action, &dvector![0.1], &conn, None, &probes(), &RouthOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::NotInvariant { .. }));
    }

    #[test]
    fn quadrature_is_fourth_order() {
        let err = |n: usize| {
            let h = 2.0 / (n - 1) as f64;
            let f: Vec<f64> = (0..n).map(|j| (j as f64 * h).cos()).collect();
            let q = cumulative_quadrature(&f, h).unwrap();
            (0..n).map(|j| (q[j] - (j as f64 * h).sin()).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(41), err(81));
        assert!(e1 < 1e-6);
        assert!((e1 / e2).log2() > 3.8, "order {}", (e1 / e2).log2());
    }

    #[test]
    fn reconstruction_matches_closed_form() {
        // ẍ = −x/0.875; 2θ̇ + 0.5ẋ = μ ⇒ θ = θ₀ + μt/2 − (x − x₀)/4
        let mu = 0.8;
        let rr = reduce(mu);
        let w = 1.0 / 0.875_f64.sqrt();
        let (x0, v0, theta0) = (0.3, -0.1, 0.2);
        let h = 1e-2;
        let mut red = Trajectory::new("oscillator/reduced");
        for j in 0..=500 {
            let t = j as f64 * h;
            let x = x0 * (w * t).cos() + v0 / w * (w * t).sin();
            let v = -x0 * w * (w * t).sin() + v0 * (w * t).cos();
            red.push(t, dvector![x, v]);
        }
        let full = rr.reconstruct(&red, &dvector![theta0]).unwrap();
        for (t, s) in full.times.iter().zip(&full.states) {
            let theta = theta0 + mu * t / 2.0 - (s[1] - x0) / 4.0;
            assert!((s[0] - theta).abs() < 1e-9);
            assert!((2.0 * s[2] + 0.5 * s[3] - mu).abs() < 1e-12);
        }
        assert_eq!(full.momentum_tag.as_deref(), Some(&[mu][..]));
        let res = rr.full.el_residual(&full).unwrap();
        assert!(res.max < 1e-6, "{}", res.max);
    }

    proptest! {
        #[test]
        fn reduced_and_full_states_round_trip(x in -2.0..2.0_f64, v in -2.0..2.0_f64, th in -3.0..3.0_f64, mu in -1.0..1.0_f64) {
            let rr = reduce(mu);
            let full = rr.full_state(&dvector![x, v], &dvector![th]).unwrap();
            prop_assert!((rr.reduced_state(&full) - dvector![x, v]).amax() < 1e-14);
            prop_assert!((rr.group_coords(&full)[0] - th).abs() < 1e-14);
            prop_assert!((2.0 * full[2] + 0.5 * full[3] - mu).abs() < 1e-12);
        }
    }
}
