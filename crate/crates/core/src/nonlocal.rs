//! Nonlocal adhesion machinery: the odd vector kernel supported on a
//! max-norm ball, its normalization, the zero-extended discrete convolution
//! and the unified local/nonlocal adhesion flux.
//!
//! The kernel is `k(z) = -omega(eps) z` for `|z|_inf <= eps` and zero
//! outside. Two normalizations are provided: `PaperDot` makes the dot moment
//! `int z . k(-z) dz = 1` (so the convolution of a linear field recovers
//! half its gradient in 2D), `ComponentConsistent` normalizes each component
//! moment to 1 (so the convolution recovers the full gradient).

use crate::fem::{element_gradients, NodalField, QuadPoint};
use crate::mesh::Mesh;
use crate::model::{cutoff, ModelParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NonlocalError {
    #[error("kernel radius must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("only dimension 2 is implemented, got {0}")]
    UnsupportedDimension(usize),
    #[error("nonlocal haptotaxis requires a convolution stencil")]
    MissingStencil,
    #[error("field has {field} entries but the stencil was built for {mesh}")]
    MeshMismatch { field: usize, mesh: usize },
}

/// Normalization convention for the kernel weight omega(eps).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMode {
    /// omega = 3/(8 eps^4): unit dot moment, gradient factor 1/2 in 2D.
    PaperDot,
    /// omega = 3/(4 eps^4): unit component moments, gradient factor 1.
    ComponentConsistent,
}

/// Expected ratio between the convolution of a linear field and its
/// gradient, per normalization mode.
pub fn gradient_factor(mode: OmegaMode) -> f64 {
    match mode {
        OmegaMode::PaperDot => 0.5,
        OmegaMode::ComponentConsistent => 1.0,
    }
}

/// Normalization weight omega(eps) in dimension `dim`.
pub fn kernel_normalization(eps: f64, dim: usize, mode: OmegaMode) -> Result<f64, NonlocalError> {
    if !(eps > 0.0) {
        return Err(NonlocalError::NonPositiveEps(eps));
    }
    if dim != 2 {
        return Err(NonlocalError::UnsupportedDimension(dim));
    }
    let eps4 = eps * eps * eps * eps;
    Ok(match mode {
        // int over [-eps,eps]^2 of (z1^2 + z2^2) dz = (8/3) eps^4
        OmegaMode::PaperDot => 3.0 / (8.0 * eps4),
        // int over [-eps,eps]^2 of z_i^2 dz = (4/3) eps^4
        OmegaMode::ComponentConsistent => 3.0 / (4.0 * eps4),
    })
}

/// Kernel radius and normalization, fixed for a whole run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub eps: f64,
    pub omega_mode: OmegaMode,
    pub omega: f64,
}

impl KernelSpec {
    pub fn new(eps: f64, omega_mode: OmegaMode) -> Result<KernelSpec, NonlocalError> {
        let omega = kernel_normalization(eps, 2, omega_mode)?;
        Ok(KernelSpec {
            eps,
            omega_mode,
            omega,
        })
    }
}

/// Precomputed discrete convolution against the kernel.
///
/// The convolution integral is approximated by a midpoint rule over the
/// Cartesian dual cells of the nodes: the weight of neighbor `j` seen from
/// node `i` is `k(x_i - x_j)` times the area of the dual cell of `j`
/// clipped to both the kernel support around `i` and the domain (the zero
/// extension outside the domain contributes nothing). Nodes far enough from
/// the boundary share a single translation-invariant template; nodes closer
/// than `eps` carry explicit clipped neighbor lists.
#[derive(Debug, Clone)]
pub struct ConvolutionStencil {
    eps: f64,
    n_per_side: usize,
    n_nodes: usize,
    /// Offsets (di, dj) and weight vectors for interior nodes.
    template: Vec<(i32, i32, [f64; 2])>,
    /// Explicit (neighbor, weight) lists for nodes within eps of the
    /// boundary, sorted by node index.
    overrides: Vec<(usize, Vec<(usize, [f64; 2])>)>,
}

impl ConvolutionStencil {
    pub fn build(mesh: &Mesh, spec: &KernelSpec) -> ConvolutionStencil {
        let h = mesh.spacing();
        let eps = spec.eps;
        let omega = spec.omega;
        // largest grid offset still inside the support (guard the exact
        // eps = m*h case against roundoff)
        let reach = ((eps / h) * (1.0 + 1e-12)).floor() as i64;
        let n = mesh.n_per_side() as i64;

        // 1D overlap of the dual cell of offset d with the support interval,
        // both relative to the center node
        let overlap_1d = |d: f64| -> f64 {
            let lo = (d - 0.5 * h).max(-eps);
            let hi = (d + 0.5 * h).min(eps);
            (hi - lo).max(0.0)
        };

        let mut template = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                if di == 0 && dj == 0 {
                    continue;
                }
                let zx = di as f64 * h;
                let zy = dj as f64 * h;
                let area = overlap_1d(zx) * overlap_1d(zy);
                if area == 0.0 {
                    continue;
                }
                // k(x_i - x_j) = -omega (x_i - x_j) = omega (x_j - x_i)
                template.push((di as i32, dj as i32, [omega * zx * area, omega * zy * area]));
            }
        }

        let mut overrides = Vec::new();
        for node in 0..mesh.n_nodes() {
            if mesh.boundary_distance_inf(node) >= eps {
                continue;
            }
            let (ix, iy) = mesh.grid_coords(node);
            let [cx, cy] = mesh.node(node);
            let mut pairs = Vec::new();
            for dj in -reach..=reach {
                let jy = iy as i64 + dj;
                if jy < 0 || jy > n {
                    continue;
                }
                for di in -reach..=reach {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let jx = ix as i64 + di;
                    if jx < 0 || jx > n {
                        continue;
                    }
                    let neighbor = mesh.node_index(jx as usize, jy as usize);
                    let [px, py] = mesh.node(neighbor);
                    // dual cell clipped to the support and to the domain
                    let ax = ((px + 0.5 * h).min(cx + eps).min(1.0)
                        - (px - 0.5 * h).max(cx - eps).max(-1.0))
                    .max(0.0);
                    let ay = ((py + 0.5 * h).min(cy + eps).min(1.0)
                        - (py - 0.5 * h).max(cy - eps).max(-1.0))
                    .max(0.0);
                    let area = ax * ay;
                    if area == 0.0 {
                        continue;
                    }
                    let zx = px - cx;
                    let zy = py - cy;
                    pairs.push((neighbor, [omega * zx * area, omega * zy * area]));
                }
            }
            overrides.push((node, pairs));
        }

        ConvolutionStencil {
            eps,
            n_per_side: mesh.n_per_side(),
            n_nodes: mesh.n_nodes(),
            template,
            overrides,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Materialized (neighbor index, weight) pairs of one node.
    pub fn node_pairs(&self, node: usize) -> Vec<(usize, [f64; 2])> {
        if let Ok(k) = self.overrides.binary_search_by_key(&node, |(n, _)| *n) {
            return self.overrides[k].1.clone();
        }
        let np = self.n_per_side + 1;
        let (ix, iy) = (node % np, node / np);
        self.template
            .iter()
            .map(|&(di, dj, w)| {
                let jx = (ix as i64 + di as i64) as usize;
                let jy = (iy as i64 + dj as i64) as usize;
                (jy * np + jx, w)
            })
            .collect()
    }

    /// Discrete convolution `(k * theta)(x_i)` at every node; linear in the
    /// field and free of reads outside the mesh.
    pub fn apply(&self, theta: &NodalField) -> Result<Vec<[f64; 2]>, NonlocalError> {
        if theta.len() != self.n_nodes {
            return Err(NonlocalError::MeshMismatch {
                field: theta.len(),
                mesh: self.n_nodes,
            });
        }
        let np = self.n_per_side + 1;
        let mut out = vec![[0.0, 0.0]; self.n_nodes];
        let mut next_override = 0usize;
        for node in 0..self.n_nodes {
            if next_override < self.overrides.len() && self.overrides[next_override].0 == node {
                let mut acc = [0.0, 0.0];
                for &(j, w) in &self.overrides[next_override].1 {
                    let t = theta[j];
                    acc[0] += w[0] * t;
                    acc[1] += w[1] * t;
                }
                out[node] = acc;
                next_override += 1;
            } else {
                let ix = node % np;
                let iy = node / np;
                let mut acc = [0.0, 0.0];
                for &(di, dj, w) in &self.template {
                    let j = (iy as i64 + dj as i64) as usize * np + (ix as i64 + di as i64) as usize;
                    let t = theta[j];
                    acc[0] += w[0] * t;
                    acc[1] += w[1] * t;
                }
                out[node] = acc;
            }
        }
        Ok(out)
    }
}

/// Which haptotaxis flux the tumor equation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaptotaxisMode {
    #[serde(rename = "loc")]
    Local,
    #[serde(rename = "nonloc")]
    Nonlocal,
}

/// Adhesion flux evaluator for one Gauss--Seidel sweep: the ECM direction
/// field is precomputed (element gradients or nodal convolution) and the
/// viable-fraction cutoff is applied per quadrature point.
#[derive(Debug)]
pub struct AdhesionFlux {
    chi_h: f64,
    direction: FluxDirection,
}

#[derive(Debug)]
enum FluxDirection {
    Zero,
    /// Per-element constant gradient of the ECM density.
    Local(Vec<[f64; 2]>),
    /// Nodal convolution values, interpolated to quadrature points.
    Nonlocal(Vec<[f64; 2]>),
}

/// Builds the flux `J = chi_h C(phi_T - phi_N) G(theta)` with `G` the ECM
/// gradient (local mode) or the kernel convolution (nonlocal mode).
pub fn adhesion_flux(
    mode: HaptotaxisMode,
    mesh: &Mesh,
    theta: &NodalField,
    params: &ModelParams,
    stencil: Option<&ConvolutionStencil>,
) -> Result<AdhesionFlux, NonlocalError> {
    if params.chi_h == 0.0 {
        return Ok(AdhesionFlux {
            chi_h: 0.0,
            direction: FluxDirection::Zero,
        });
    }
    let direction = match mode {
        HaptotaxisMode::Local => FluxDirection::Local(element_gradients(mesh, theta)),
        HaptotaxisMode::Nonlocal => {
            let stencil = stencil.ok_or(NonlocalError::MissingStencil)?;
            FluxDirection::Nonlocal(stencil.apply(theta)?)
        }
    };
    Ok(AdhesionFlux {
        chi_h: params.chi_h,
        direction,
    })
}

impl AdhesionFlux {
    /// Flux vector at a quadrature point, with the viable fraction
    /// interpolated from the lagged iterates.
    pub fn eval(&self, qp: &QuadPoint, phi_t: &NodalField, phi_n: &NodalField) -> [f64; 2] {
        match &self.direction {
            FluxDirection::Zero => [0.0, 0.0],
            dir => {
                let viable = cutoff(qp.interp(phi_t) - qp.interp(phi_n));
                let scale = self.chi_h * viable;
                let g = match dir {
                    FluxDirection::Local(grads) => grads[qp.elem],
                    FluxDirection::Nonlocal(conv) => {
                        let mut g = [0.0, 0.0];
                        for i in 0..3 {
                            let c = conv[qp.verts[i]];
                            g[0] += qp.bary[i] * c[0];
                            g[1] += qp.bary[i] * c[1];
                        }
                        g
                    }
                    FluxDirection::Zero => unreachable!(),
                };
                [scale * g[0], scale * g[1]]
            }
        }
    }
}
