//! Structured conforming triangulations of the square domain (-1,1)^2.
//!
//! Every cell of a uniform n-by-n grid is split along its bottom-left to
//! top-right diagonal, giving a deterministic connectivity whose node
//! ordering is lexicographic in (x2, x1). Only d=2 is implemented; the
//! dimension is carried as data so callers can reject anything else.

use thiserror::Error;

/// Spatial dimension of the implemented meshes.
pub const DIM: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("n_per_side must be at least 1")]
    ZeroResolution,
    #[error("element index {index} out of range (have {count})")]
    ElementOutOfRange { index: usize, count: usize },
}

/// Boundary face of the square domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    fn bit(self) -> u8 {
        match self {
            Side::Left => 1,
            Side::Right => 2,
            Side::Bottom => 4,
            Side::Top => 8,
        }
    }
}

/// Uniform triangulation of (-1,1)^2 with (n+1)^2 nodes and 2 n^2 triangles.
#[derive(Debug, Clone)]
pub struct Mesh {
    n_per_side: usize,
    h: f64,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    boundary_flags: Vec<u8>,
}

impl Mesh {
    /// Builds the structured mesh with `n_per_side` cells per side.
    ///
    /// Nodes are ordered lexicographically by (x2, x1); each square cell is
    /// split along the bottom-left to top-right diagonal into two
    /// counterclockwise triangles.
    pub fn structured(n_per_side: usize) -> Result<Mesh, MeshError> {
        if n_per_side == 0 {
            return Err(MeshError::ZeroResolution);
        }
        let n = n_per_side;
        let np = n + 1;
        let mut nodes = Vec::with_capacity(np * np);
        let mut boundary_flags = vec![0u8; np * np];
        for iy in 0..np {
            for ix in 0..np {
                // (2i - n)/n is exactly ±1 at the walls for any n.
                let x = (2 * ix as i64 - n as i64) as f64 / n as f64;
                let y = (2 * iy as i64 - n as i64) as f64 / n as f64;
                let mut flags = 0u8;
                if ix == 0 {
                    flags |= Side::Left.bit();
                }
                if ix == n {
                    flags |= Side::Right.bit();
                }
                if iy == 0 {
                    flags |= Side::Bottom.bit();
                }
                if iy == n {
                    flags |= Side::Top.bit();
                }
                boundary_flags[iy * np + ix] = flags;
                nodes.push([x, y]);
            }
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for iy in 0..n {
            for ix in 0..n {
                let bl = iy * np + ix;
                let br = bl + 1;
                let tl = bl + np;
                let tr = tl + 1;
                elements.push([bl, br, tr]);
                elements.push([bl, tr, tl]);
            }
        }
        Ok(Mesh {
            n_per_side: n,
            h: 2.0 / n as f64,
            nodes,
            elements,
            boundary_flags,
        })
    }

    /// Spatial dimension; only 2 is constructible.
    pub fn dim(&self) -> usize {
        DIM
    }

    pub fn n_per_side(&self) -> usize {
        self.n_per_side
    }

    /// Mesh spacing h = 2/n.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn element(&self, e: usize) -> [usize; 3] {
        self.elements[e]
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    /// Grid coordinates (ix, iy) of a node under the lexicographic ordering.
    pub fn grid_coords(&self, node: usize) -> (usize, usize) {
        let np = self.n_per_side + 1;
        (node % np, node / np)
    }

    /// Node index from grid coordinates.
    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix <= self.n_per_side && iy <= self.n_per_side);
        iy * (self.n_per_side + 1) + ix
    }

    pub fn is_on_side(&self, node: usize, side: Side) -> bool {
        self.boundary_flags[node] & side.bit() != 0
    }

    /// All nodes lying on the given face, in index order.
    pub fn boundary_nodes(&self, side: Side) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| self.is_on_side(i, side))
            .collect()
    }

    /// Distance of a node to the domain boundary in the max norm.
    pub fn boundary_distance_inf(&self, node: usize) -> f64 {
        let [x, y] = self.nodes[node];
        (1.0 - x.abs()).min(1.0 - y.abs())
    }

    /// Area and constant P1 basis gradients of an element.
    pub fn element_geometry(&self, e: usize) -> Result<(f64, [[f64; 2]; 3]), MeshError> {
        if e >= self.elements.len() {
            return Err(MeshError::ElementOutOfRange {
                index: e,
                count: self.elements.len(),
            });
        }
        let [a, b, c] = self.elements[e];
        Ok(triangle_geometry(self.nodes[a], self.nodes[b], self.nodes[c]))
    }
}

/// Signed area and P1 basis gradients of an arbitrary triangle.
///
/// For vertices p0, p1, p2 in counterclockwise order the returned gradients
/// are the constant vectors grad(lambda_i); they always sum to zero.
pub fn triangle_geometry(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> (f64, [[f64; 2]; 3]) {
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let area = 0.5 * det;
    let grads = [
        [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
        [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
        [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
    ];
    (area, grads)
}
