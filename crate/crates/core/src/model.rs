//! Constitutive pieces of the tumor model: the double-well potential and its
//! convex/concave splitting, degenerate mobility with a positive floor, the
//! cut-off and sigmoid regularizations, the five reaction functions and the
//! Ginzburg--Landau free energy.

use crate::fem::{for_each_quad_point, NodalField};
use crate::mesh::Mesh;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter `{key}` must be nonnegative, got {value}")]
    NegativeRate { key: &'static str, value: f64 },
    #[error("parameter `{key}` must be strictly positive, got {value}")]
    NonPositive { key: &'static str, value: f64 },
}

/// All scalar coefficients of the model, with the dimensionless reference
/// values as defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Interface width of the tumor phase field.
    pub eps_t: f64,
    /// Chemotaxis coefficient.
    pub chi_c: f64,
    /// Haptotaxis coefficient.
    pub chi_h: f64,
    pub delta_sigma: f64,
    pub delta_t: f64,
    pub lambda_t_pro: f64,
    pub lambda_t_apo: f64,
    pub lambda_n_deg: f64,
    pub lambda_vn: f64,
    pub lambda_sigma_sat: f64,
    pub lambda_m_dec: f64,
    pub lambda_m_pro: f64,
    pub lambda_theta_dec: f64,
    pub lambda_theta_deg: f64,
    /// Height of the double well.
    pub e_bar: f64,
    /// Nutrient threshold in the enzyme production term.
    pub sigma_h: f64,
    /// Nutrient threshold below which cells turn necrotic.
    pub sigma_vn: f64,
    /// Mobility scale.
    pub m_t: f64,
    pub d_sigma: f64,
    pub d_m: f64,
    /// Steepness of the sigmoid approximating the Heaviside function.
    pub eps_sigmoid: f64,
    /// Relative mobility floor keeping the mobility bounded away from zero.
    pub kappa_m: f64,
    /// Overrides the phase-dependent mobility with a constant when set.
    pub mobility_const: Option<f64>,
    /// Whether the nutrient is pinned on the x1 = 1 face.
    pub sigma_dirichlet_enabled: bool,
    /// Pinned nutrient value on that face.
    pub sigma_dirichlet_value: f64,
}

impl Default for ModelParams {
    fn default() -> ModelParams {
        ModelParams {
            eps_t: 0.005,
            chi_c: 0.0,
            chi_h: 0.001,
            delta_sigma: 0.01,
            delta_t: 0.0,
            lambda_t_pro: 2.0,
            lambda_t_apo: 0.005,
            lambda_n_deg: 0.0,
            lambda_vn: 1.0,
            lambda_sigma_sat: 0.0,
            lambda_m_dec: 1.0,
            lambda_m_pro: 1.0,
            lambda_theta_dec: 0.1,
            lambda_theta_deg: 1.0,
            e_bar: 0.045,
            sigma_h: 0.6,
            sigma_vn: 0.44,
            m_t: 2.0,
            d_sigma: 0.001,
            d_m: 0.1,
            eps_sigmoid: 0.01,
            kappa_m: 1e-3,
            mobility_const: None,
            sigma_dirichlet_enabled: true,
            sigma_dirichlet_value: 1.0,
        }
    }
}

impl ModelParams {
    /// Derived necrotic decline coefficient.
    pub fn lambda_n_dec(&self) -> f64 {
        self.lambda_n_deg - self.lambda_t_apo
    }

    /// Checks sign constraints, naming the offending key.
    pub fn validate(&self) -> Result<(), ModelError> {
        let nonneg = [
            ("chi_c", self.chi_c),
            ("chi_h", self.chi_h),
            ("delta_t", self.delta_t),
            ("lambda_t_pro", self.lambda_t_pro),
            ("lambda_t_apo", self.lambda_t_apo),
            ("lambda_n_deg", self.lambda_n_deg),
            ("lambda_vn", self.lambda_vn),
            ("lambda_sigma_sat", self.lambda_sigma_sat),
            ("lambda_m_dec", self.lambda_m_dec),
            ("lambda_m_pro", self.lambda_m_pro),
            ("lambda_theta_dec", self.lambda_theta_dec),
            ("lambda_theta_deg", self.lambda_theta_deg),
            ("sigma_h", self.sigma_h),
            ("sigma_vn", self.sigma_vn),
            ("kappa_m", self.kappa_m),
        ];
        for (key, value) in nonneg {
            if !(value >= 0.0) {
                return Err(ModelError::NegativeRate { key, value });
            }
        }
        let positive = [
            ("eps_t", self.eps_t),
            ("delta_sigma", self.delta_sigma),
            ("e_bar", self.e_bar),
            ("m_t", self.m_t),
            ("d_sigma", self.d_sigma),
            ("d_m", self.d_m),
            ("eps_sigmoid", self.eps_sigmoid),
        ];
        for (key, value) in positive {
            if !(value > 0.0) {
                return Err(ModelError::NonPositive { key, value });
            }
        }
        if let Some(m) = self.mobility_const {
            if !(m > 0.0) {
                return Err(ModelError::NonPositive {
                    key: "mobility_const",
                    value: m,
                });
            }
        }
        Ok(())
    }

    /// Cell mobility, the degenerate quartic of the viable fraction lifted
    /// by the relative floor, or the constant override when configured.
    pub fn mobility(&self, phi_t: f64, phi_n: f64) -> f64 {
        if let Some(m) = self.mobility_const {
            return m;
        }
        let v = cutoff(phi_t - phi_n);
        self.m_t * (v * v * (1.0 - v) * (1.0 - v) + self.kappa_m)
    }
}

/// Clamp to [0,1]; 1-Lipschitz and monotone.
pub fn cutoff(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Smooth approximation of the Heaviside step, `1/(1 + exp(-x/eps))`.
pub fn sigmoid(x: f64, eps_sigmoid: f64) -> f64 {
    debug_assert!(eps_sigmoid > 0.0);
    // saturate the exponent so the division never sees an overflowed exp
    let z = (-x / eps_sigmoid).clamp(-700.0, 700.0);
    1.0 / (1.0 + z.exp())
}

/// Double-well potential value together with the derivatives of its
/// convex/concave splitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialEval {
    /// Psi(phi) = E_bar phi^2 (1-phi)^2.
    pub psi: f64,
    /// Derivative of the contractive part Psi_c = E_bar (phi^4 - 2 phi^3 + 1.5 phi^2).
    pub convex_prime: f64,
    /// Derivative of the expansive part Psi_e = 0.5 E_bar phi^2.
    pub expansive_prime: f64,
    /// Second derivative of the contractive part, 3 E_bar (2 phi - 1)^2 >= 0.
    pub convex_second: f64,
}

/// Evaluates the double well and its splitting Psi = Psi_c - Psi_e, both
/// parts convex.
pub fn potential(phi: f64, e_bar: f64) -> PotentialEval {
    let one_m = 1.0 - phi;
    PotentialEval {
        psi: e_bar * phi * phi * one_m * one_m,
        convex_prime: e_bar * (4.0 * phi * phi * phi - 6.0 * phi * phi + 3.0 * phi),
        expansive_prime: e_bar * phi,
        convex_second: 3.0 * e_bar * (2.0 * phi - 1.0) * (2.0 * phi - 1.0),
    }
}

/// Value of the contractive part Psi_c.
pub fn potential_convex(phi: f64, e_bar: f64) -> f64 {
    e_bar * (phi * phi * phi * phi - 2.0 * phi * phi * phi + 1.5 * phi * phi)
}

/// Value of the expansive part Psi_e.
pub fn potential_expansive(phi: f64, e_bar: f64) -> f64 {
    0.5 * e_bar * phi * phi
}

/// Michaelis--Menten style saturation factor `c/(c + sat)` with the 0/0
/// convention resolving to 0 (so zero saturation keeps the factor in {0,1}).
pub fn saturation_factor(c_sigma: f64, lambda_sat: f64) -> f64 {
    let denom = c_sigma + lambda_sat;
    if denom > 0.0 {
        c_sigma / denom
    } else {
        0.0
    }
}

/// The five bounded reaction functions of the semi-implicit scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reactions {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    pub f5: f64,
}

/// Evaluates the reaction functions at one point. All inputs pass through
/// the cut-off, so the outputs stay bounded for arbitrary real arguments.
pub fn reactions(phi_t: f64, phi_n: f64, phi_sigma: f64, phi_m: f64, p: &ModelParams) -> Reactions {
    let ct = cutoff(phi_t);
    let cn = cutoff(phi_n);
    let cs = cutoff(phi_sigma);
    let cm = cutoff(phi_m);
    let viable = ct - cn;
    let f1 = p.lambda_t_pro * viable * (1.0 - ct);
    let f2 = p.lambda_vn * viable;
    let f3 = p.lambda_t_pro * viable * saturation_factor(cs, p.lambda_sigma_sat);
    let mde_sat = {
        let denom = p.sigma_h + cs;
        if denom > 0.0 {
            p.sigma_h / denom
        } else {
            0.0
        }
    };
    let f4 = p.lambda_m_pro * viable * mde_sat * (1.0 - cm) - p.lambda_theta_dec * cm;
    let f5 = p.lambda_theta_deg * cm;
    Reactions { f1, f2, f3, f4, f5 }
}

/// Ginzburg--Landau free energy of the (tumor, nutrient) pair, evaluated
/// with the same edge-midpoint quadrature as the assembly routines.
pub fn energy(mesh: &Mesh, phi_t: &NodalField, phi_sigma: &NodalField, p: &ModelParams) -> f64 {
    assert_eq!(phi_t.len(), mesh.n_nodes(), "mesh/field mismatch");
    assert_eq!(phi_sigma.len(), mesh.n_nodes(), "mesh/field mismatch");
    let grads = crate::fem::element_gradients(mesh, phi_t);
    let mut total = 0.0;
    for_each_quad_point(mesh, |w, qp| {
        let t = qp.interp(phi_t);
        let s = qp.interp(phi_sigma);
        let g = grads[qp.elem];
        let grad_sq = g[0] * g[0] + g[1] * g[1];
        total += w
            * (potential(t, p.e_bar).psi + 0.5 * p.eps_t * p.eps_t * grad_sq
                - p.chi_c * s * t
                + 0.5 / p.delta_sigma * s * s
                + 0.5 * p.delta_t * t * t);
    });
    total
}
