//! Three planar rigid bodies with a common fixed point, `q = (θ, φ, ψ)`.

use nalgebra::{dmatrix, dvector, DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamside::MagneticHamiltonianSystem;
use crate::lagrangian::{BundleDims, MagneticLagrangianSystem};
use crate::numcore::DerivativeProvider;
use crate::symmetry::{Connection, GroupAction};

/// `V = c₁ cos φ + c₂ cos ψ + c₃ cos(φ − ψ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosinePotential {
    pub coefficients: [f64; 3],
}

impl Default for CosinePotential {
    fn default() -> Self {
        Self { coefficients: [1.0, 1.0, 0.0] }
    }
}

impl CosinePotential {
    pub fn value(&self, phi: f64, psi: f64) -> f64 {
        let [c1, c2, c3] = self.coefficients;
        c1 * phi.cos() + c2 * psi.cos() + c3 * (phi - psi).cos()
    }

    /// `(V_φ, V_ψ)`.
    pub fn gradient(&self, phi: f64, psi: f64) -> (f64, f64) {
        let [c1, c2, c3] = self.coefficients;
        let s = (phi - psi).sin();
        (-c1 * phi.sin() - c3 * s, -c2 * psi.sin() + c3 * s)
    }

    /// `[[V_φφ, V_φψ], [V_φψ, V_ψψ]]`.
    pub fn hessian(&self, phi: f64, psi: f64) -> [[f64; 2]; 2] {
        let [c1, c2, c3] = self.coefficients;
        let c = (phi - psi).cos();
        [[-c1 * phi.cos() - c3 * c, c3 * c], [c3 * c, -c2 * psi.cos() - c3 * c]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeBodyParams {
    pub inertia: [f64; 3],
    #[serde(default)]
    pub potential: CosinePotential,
}

impl Default for ThreeBodyParams {
    fn default() -> Self {
        Self { inertia: [1.0, 2.0, 3.0], potential: CosinePotential::default() }
    }
}

impl ThreeBodyParams {
    pub fn validate(&self) -> Result<()> {
        if self.inertia.iter().any(|i| !(*i > 0.0 && i.is_finite())) {
            return Err(Error::Config(format!("moments of inertia must be positive, got {:?}", self.inertia)));
        }
        if self.potential.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("potential coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.inertia.iter().sum()
    }

    /// Kinetic-energy metric in `(θ̇, φ̇, ψ̇)`.
    pub fn metric(&self) -> Matrix3<f64> {
        let [i1, i2, i3] = self.inertia;
        let s = i1 + i2 + i3;
        Matrix3::new(s, i2 + i3, i3, i2 + i3, i2 + i3, i3, i3, i3, i3)
    }

    /// `(I₂+I₃)/ΣI` and `I₃/ΣI`.
    pub fn mechanical_coefficients(&self) -> (f64, f64) {
        let [_, i2, i3] = self.inertia;
        ((i2 + i3) / self.total(), i3 / self.total())
    }

    /// Closed-form Routhian mass matrix in `(φ̇, ψ̇)`.
    pub fn routhian_mass_matrix(&self) -> DMatrix<f64> {
        let [i1, i2, i3] = self.inertia;
        let s = self.total();
        dmatrix![i1 * (i2 + i3) / s, i1 * i3 / s; i1 * i3 / s, i3 * (i1 + i2) / s]
    }

    /// Reference velocity-linear coefficients of the `𝔄⁰` Routhian.
    pub fn reference_a0_linear_terms(&self, mu: f64, psi: f64) -> (f64, f64) {
        let [_, i2, i3] = self.inertia;
        let s = self.total();
        (mu * (i2 + i3) * (1.0 - psi.cos()) / s, mu * i3 / s)
    }

    /// Closed-form normal-form accelerations `(θ̈, φ̈, ψ̈)`.
    pub fn normal_form(&self, phi: f64, psi: f64) -> [f64; 3] {
        let [i1, i2, i3] = self.inertia;
        let (vp, vs) = self.potential.gradient(phi, psi);
        [vp / i1, -(i1 + i2) / (i2 * i1) * vp + vs / i2, -(i2 + i3) / (i3 * i2) * vs + vp / i2]
    }

    /// `θ̇` on `{J = μ}`.
    pub fn theta_dot(&self, mu: f64, phi_dot: f64, psi_dot: f64) -> f64 {
        let [_, i2, i3] = self.inertia;
        (mu - (i2 + i3) * phi_dot - i3 * psi_dot) / self.total()
    }

    /// Full state `(θ, φ, ψ, θ̇, φ̇, ψ̇)` on `{J = μ}`.
    pub fn state_on_level(&self, theta: f64, phi: f64, psi: f64, phi_dot: f64, psi_dot: f64, mu: f64) -> DVector<f64> {
        dvector![theta, phi, psi, self.theta_dot(mu, phi_dot, psi_dot), phi_dot, psi_dot]
    }

    pub fn momentum(&self, s: &DVector<f64>) -> f64 {
        let w = self.metric();
        (w.row(0) * s.fixed_rows::<3>(3))[(0, 0)]
    }

    pub fn energy(&self, s: &DVector<f64>) -> f64 {
        let v = s.fixed_rows::<3>(3).into_owned();
        0.5 * v.dot(&(self.metric() * v)) + self.potential.value(s[1], s[2])
    }
}

/// The assembled example: system, symmetry and both connections.
#[derive(Clone, Debug)]
pub struct ThreeBody {
    pub params: ThreeBodyParams,
    pub system: MagneticLagrangianSystem,
    pub action: GroupAction,
    pub mechanical: Connection,
    pub a0: Connection,
}

pub const THREE_BODY_ID: &str = "three_body";

pub fn build_three_body(params: ThreeBodyParams) -> Result<ThreeBody> {
    params.validate()?;
    let w = DMatrix::from_iterator(3, 3, params.metric().iter().copied());
    let pot = params.potential;
    let (w1, w2) = (w.clone(), w.clone());
    let lagrangian = DerivativeProvider::new(move |s| {
        let v = s.rows(3, 3).into_owned();
        0.5 * v.dot(&(&w * &v)) - pot.value(s[1], s[2])
    })
    .with_gradient(move |s| {
        let wv = &w1 * s.rows(3, 3);
        let (vp, vs) = pot.gradient(s[1], s[2]);
        dvector![0.0, -vp, -vs, wv[0], wv[1], wv[2]]
    })
    .with_hessian(move |s| {
        let hv = pot.hessian(s[1], s[2]);
        let mut h = DMatrix::zeros(6, 6);
        for a in 0..2 {
            for b in 0..2 {
                h[(1 + a, 1 + b)] = -hv[a][b];
            }
        }
        h.view_mut((3, 3), (3, 3)).copy_from(&w2);
        h
    });
    let system = MagneticLagrangianSystem::new(THREE_BODY_ID, BundleDims::new(3, 0)?, lagrangian).with_periodic(vec![0, 1, 2]);
    let action = GroupAction::translation(3, vec![0])?;
    let (gp, gs) = params.mechanical_coefficients();
    let mechanical = Connection::new("mechanical", 3, vec![0], move |_| dmatrix![gp, gs])?
        .with_derivatives(|_| vec![DMatrix::zeros(1, 2); 3]);
    let a0 = Connection::new("A0", 3, vec![0], |q| dmatrix![q[2].cos(), 0.0])?
        .with_derivatives(|q| vec![DMatrix::zeros(1, 2), DMatrix::zeros(1, 2), dmatrix![-q[2].sin(), 0.0]]);
    Ok(ThreeBody { params, system, action, mechanical, a0 })
}

impl ThreeBody {
    pub fn connection(&self, name: &str) -> Result<Connection> {
        match name {
            "mechanical" => Ok(self.mechanical.clone()),
            "A0" => Ok(self.a0.clone()),
            other => Err(Error::Config(format!("unknown connection '{other}' (available: A0, mechanical)"))),
        }
    }

    /// `H = ½ αᵀ W⁻¹ α + V` on `T*Q`.
    pub fn hamiltonian(&self) -> Result<MagneticHamiltonianSystem> {
        let winv = self
            .params
            .metric()
            .try_inverse()
            .ok_or_else(|| Error::Config("singular inertia metric".into()))?;
        let winv = DMatrix::from_iterator(3, 3, winv.iter().copied());
        let w2 = winv.clone();
        let pot = self.params.potential;
        let h = DerivativeProvider::new(move |s| {
            let a = s.rows(3, 3).into_owned();
            0.5 * a.dot(&(&winv * &a)) + pot.value(s[1], s[2])
        })
        .with_gradient(move |s| {
            let wa = &w2 * s.rows(3, 3);
            let (vp, vs) = pot.gradient(s[1], s[2]);
            dvector![0.0, vp, vs, wa[0], wa[1], wa[2]]
        });
        Ok(MagneticHamiltonianSystem::new(format!("{THREE_BODY_ID}/hamiltonian"), BundleDims::new(3, 0)?, h))
    }

    /// Cotangent state `(q, W v)` of a tangent state.
    pub fn legendre(&self, s: &DVector<f64>) -> DVector<f64> {
        let mut out = s.clone();
        let a = self.params.metric() * s.fixed_rows::<3>(3);
        out.fixed_rows_mut::<3>(3).copy_from(&a);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::max_abs_vec;

    #[test]
    fn mechanical_coefficients_for_reference_inertia() {
        let (a, b) = ThreeBodyParams::default().mechanical_coefficients();
        assert!((a - 5.0 / 6.0).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
    }

    #[test]
    fn vector_field_matches_normal_form() {
        let tb = build_three_body(ThreeBodyParams::default()).unwrap();
        let s = dvector![0.4, 0.3, -0.2, 0.7, 0.1, 0.05];
        let x = tb.system.el_vector_field(&s).unwrap().xdot;
        let nf = tb.params.normal_form(0.3, -0.2);
        for i in 0..3 {
            assert!((x[3 + i] - nf[i]).abs() < 1e-12);
            assert_eq!(x[i], s[3 + i]);
        }
    }

    #[test]
    fn exact_derivatives_agree_with_differences() {
        let mut params = ThreeBodyParams::default();
        params.potential.coefficients = [1.0, 0.5, -0.3];
        let tb = build_three_body(params).unwrap();
        let s = dvector![0.4, 0.3, -0.2, 0.7, 0.1, 0.05];
        let cc = tb.system.lagrangian.cross_check(&s).unwrap();
        assert!(cc.gradient.unwrap() < 1e-8 && cc.hessian.unwrap() < 1e-6, "{cc:?}");
    }

    #[test]
    fn level_set_velocity_has_the_requested_momentum() {
        let p = ThreeBodyParams::default();
        let s = p.state_on_level(0.0, 0.3, -0.2, 0.1, 0.05, 0.5);
        assert!((p.momentum(&s) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_inertia_is_a_config_error() {
        let p = ThreeBodyParams { inertia: [1.0, 0.0, 1.0], ..Default::default() };
        assert!(matches!(build_three_body(p), Err(Error::Config(_))));
    }

    #[test]
    fn hamiltonian_field_is_the_legendre_image() {
        let tb = build_three_body(ThreeBodyParams::default()).unwrap();
        let s = dvector![0.4, 0.3, -0.2, 0.7, 0.1, 0.05];
        let x = tb.system.el_vector_field(&s).unwrap().xdot;
        let h = tb.hamiltonian().unwrap();
        let y = h.hamilton_vector_field(&tb.legendre(&s)).unwrap().xdot;
        let w = DMatrix::from_iterator(3, 3, tb.params.metric().iter().copied());
        let adot = &w * x.rows(3, 3);
        assert!(max_abs_vec(&(y.rows(3, 3) - adot)) < 1e-12);
        assert!(max_abs_vec(&(y.rows(0, 3) - x.rows(0, 3))) < 1e-12);
    }
}
