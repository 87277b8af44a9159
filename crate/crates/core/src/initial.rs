//! Initial condition shapes for the six fields, selectable from the
//! configuration file.

use crate::fem::NodalField;
use crate::mesh::Mesh;
use crate::model::ModelParams;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One field's initial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldInit {
    /// Spatially uniform value.
    Uniform { value: f64 },
    /// Tanh-regularized disk: 0.5 (1 - tanh((|x - c| - r)/(sqrt(2) eps_t))),
    /// the interface width taken from the model parameters.
    Disk { center: [f64; 2], radius: f64 },
    /// Two horizontal layers split at x2 = `split`.
    Band { split: f64, below: f64, above: f64 },
    /// Uniform value plus a smooth random combination of low Neumann modes,
    /// reproducible from the seed.
    PerturbedUniform {
        base: f64,
        amplitude: f64,
        seed: u64,
        max_mode: usize,
    },
}

impl FieldInit {
    pub fn evaluate(&self, mesh: &Mesh, params: &ModelParams) -> NodalField {
        match *self {
            FieldInit::Uniform { value } => NodalField::constant(mesh.n_nodes(), value),
            FieldInit::Disk { center, radius } => {
                let width = std::f64::consts::SQRT_2 * params.eps_t;
                NodalField::from_fn(mesh, |p| {
                    let r = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                    0.5 * (1.0 - ((r - radius) / width).tanh())
                })
            }
            FieldInit::Band {
                split,
                below,
                above,
            } => NodalField::from_fn(mesh, |p| if p[1] > split { above } else { below }),
            FieldInit::PerturbedUniform {
                base,
                amplitude,
                seed,
                max_mode,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // coefficients of cos(k pi (x+1)/2) tensor modes, which have
                // zero normal derivative on the square
                let mut coeffs = Vec::new();
                for kx in 0..=max_mode {
                    for ky in 0..=max_mode {
                        if kx == 0 && ky == 0 {
                            continue;
                        }
                        coeffs.push((kx as f64, ky as f64, rng.random_range(-1.0..1.0)));
                    }
                }
                let norm = coeffs
                    .iter()
                    .map(|&(_, _, c): &(f64, f64, f64)| c.abs())
                    .sum::<f64>()
                    .max(1e-12);
                NodalField::from_fn(mesh, |p| {
                    let mut v = 0.0;
                    for &(kx, ky, c) in &coeffs {
                        v += c
                            * (kx * PI * (p[0] + 1.0) / 2.0).cos()
                            * (ky * PI * (p[1] + 1.0) / 2.0).cos();
                    }
                    base + amplitude * v / norm
                })
            }
        }
    }
}

/// Initial profiles for all evolved fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditions {
    pub phi_t: FieldInit,
    pub phi_n: FieldInit,
    pub phi_sigma: FieldInit,
    pub phi_m: FieldInit,
    pub theta: FieldInit,
}

impl Default for InitialConditions {
    /// The reference scenario: a small tumor disk without necrotic core in a
    /// fully nourished domain, with a denser ECM band in the upper half.
    fn default() -> InitialConditions {
        InitialConditions {
            phi_t: FieldInit::Disk {
                center: [0.0, 0.0],
                radius: 0.1,
            },
            phi_n: FieldInit::Uniform { value: 0.0 },
            phi_sigma: FieldInit::Uniform { value: 1.0 },
            phi_m: FieldInit::Uniform { value: 0.0 },
            theta: FieldInit::Band {
                split: 0.0,
                below: 0.5,
                above: 1.0,
            },
        }
    }
}

impl InitialConditions {
    pub fn evaluate(&self, mesh: &Mesh, params: &ModelParams) -> crate::stepper::State {
        crate::stepper::State {
            t: 0.0,
            phi_t: self.phi_t.evaluate(mesh, params),
            mu: NodalField::zeros(mesh.n_nodes()),
            phi_n: self.phi_n.evaluate(mesh, params),
            phi_sigma: self.phi_sigma.evaluate(mesh, params),
            phi_m: self.phi_m.evaluate(mesh, params),
            theta: self.theta.evaluate(mesh, params),
        }
    }
}
