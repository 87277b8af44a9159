//! P1 Galerkin assembly on the structured triangulation: mass, stiffness and
//! weighted-reaction matrices, load vectors for scalar and flux integrands,
//! mass lumping and symmetric Dirichlet elimination.
//!
//! All variable-coefficient integrals use the 3-point edge-midpoint rule,
//! which integrates quadratics exactly on each triangle, so products of two
//! P1 functions are assembled without quadrature error.

use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

/// Nodal coefficient vector of a P1 finite element function.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(n: usize) -> NodalField {
        NodalField {
            values: vec![0.0; n],
        }
    }

    pub fn constant(n: usize, value: f64) -> NodalField {
        NodalField {
            values: vec![value; n],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> NodalField {
        NodalField { values }
    }

    /// Nodal interpolant of a pointwise function.
    pub fn from_fn(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> NodalField {
        NodalField {
            values: mesh.nodes().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &NodalField) -> f64 {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for NodalField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for NodalField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// Scalar coefficient of a bilinear form: a constant or a P1 field that is
/// interpolated at the quadrature points.
#[derive(Clone, Copy)]
pub enum Coeff<'a> {
    Constant(f64),
    Nodal(&'a NodalField),
}

impl Coeff<'_> {
    fn at(&self, verts: [usize; 3], bary: [f64; 3]) -> f64 {
        match self {
            Coeff::Constant(c) => *c,
            Coeff::Nodal(f) => {
                bary[0] * f[verts[0]] + bary[1] * f[verts[1]] + bary[2] * f[verts[2]]
            }
        }
    }
}

/// One quadrature point with everything an integrand evaluator needs.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub elem: usize,
    pub verts: [usize; 3],
    pub xy: [f64; 2],
    pub bary: [f64; 3],
}

impl QuadPoint {
    /// Value of a P1 field at this quadrature point.
    pub fn interp(&self, f: &NodalField) -> f64 {
        self.bary[0] * f[self.verts[0]] + self.bary[1] * f[self.verts[1]] + self.bary[2] * f[self.verts[2]]
    }
}

/// Barycentric coordinates of the edge midpoints (degree-2 exact rule).
pub const EDGE_MIDPOINT_BARY: [[f64; 3]; 3] = [
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
];

/// Visits every quadrature point of the mesh, passing the quadrature weight.
pub fn for_each_quad_point(mesh: &Mesh, mut visit: impl FnMut(f64, QuadPoint)) {
    for e in 0..mesh.n_elements() {
        let verts = mesh.element(e);
        let (area, _) = mesh.element_geometry(e).expect("valid element");
        let w = area / 3.0;
        let p = [
            mesh.node(verts[0]),
            mesh.node(verts[1]),
            mesh.node(verts[2]),
        ];
        for bary in EDGE_MIDPOINT_BARY {
            let xy = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            visit(
                w,
                QuadPoint {
                    elem: e,
                    verts,
                    xy,
                    bary,
                },
            );
        }
    }
}

/// Assembles the (possibly weighted) mass matrix `(c u, v)`.
pub fn assemble_mass(mesh: &Mesh, coeff: Coeff) -> CsrMatrix {
    if let Coeff::Nodal(f) = coeff {
        assert_eq!(f.len(), mesh.n_nodes(), "mesh/field mismatch");
    }
    assemble_mass_qp(mesh, |qp| coeff.at(qp.verts, qp.bary))
}

/// Mass matrix with the weight evaluated directly at quadrature points.
///
/// Needed where the weight is a nonlinear composition of a P1 field (the
/// linearized potential curvature); nodal interpolation of the composed
/// values would break the exact variational structure of the splitting.
pub fn assemble_mass_qp(mesh: &Mesh, weight: impl Fn(&QuadPoint) -> f64) -> CsrMatrix {
    let n = mesh.n_nodes();
    let mut triplets = Vec::with_capacity(mesh.n_elements() * 9);
    for_each_quad_point(mesh, |w, qp| {
        let c = weight(&qp);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((
                    qp.verts[i],
                    qp.verts[j],
                    w * c * qp.bary[i] * qp.bary[j],
                ));
            }
        }
    });
    CsrMatrix::from_triplets(n, n, &triplets).expect("in-range indices")
}

/// Assembles the weighted stiffness matrix `(c grad u, grad v)`.
pub fn assemble_stiffness(mesh: &Mesh, coeff: Coeff) -> CsrMatrix {
    if let Coeff::Nodal(f) = coeff {
        assert_eq!(f.len(), mesh.n_nodes(), "mesh/field mismatch");
    }
    let n = mesh.n_nodes();
    let mut triplets = Vec::with_capacity(mesh.n_elements() * 9);
    for e in 0..mesh.n_elements() {
        let verts = mesh.element(e);
        let (area, grads) = mesh.element_geometry(e).expect("valid element");
        let w = area / 3.0;
        // gradients are constant per element; only the coefficient needs
        // quadrature
        let mut c_int = 0.0;
        for bary in EDGE_MIDPOINT_BARY {
            c_int += w * coeff.at(verts, bary);
        }
        for i in 0..3 {
            for j in 0..3 {
                let gij = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                triplets.push((verts[i], verts[j], c_int * gij));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets).expect("in-range indices")
}

/// Load vector with entries `(f, v_i)` for a quadrature-point integrand.
pub fn assemble_weighted_rhs(mesh: &Mesh, integrand: impl Fn(&QuadPoint) -> f64) -> Vec<f64> {
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for_each_quad_point(mesh, |w, qp| {
        let f = integrand(&qp);
        for i in 0..3 {
            rhs[qp.verts[i]] += w * f * qp.bary[i];
        }
    });
    rhs
}

/// Load vector with entries `(F, grad v_i)` for a vector-valued integrand
/// (the weak divergence of a flux).
pub fn assemble_flux_rhs(mesh: &Mesh, field: impl Fn(&QuadPoint) -> [f64; 2]) -> Vec<f64> {
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        let verts = mesh.element(e);
        let (area, grads) = mesh.element_geometry(e).expect("valid element");
        let w = area / 3.0;
        let p = [
            mesh.node(verts[0]),
            mesh.node(verts[1]),
            mesh.node(verts[2]),
        ];
        for bary in EDGE_MIDPOINT_BARY {
            let xy = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let f = field(&QuadPoint {
                elem: e,
                verts,
                xy,
                bary,
            });
            for i in 0..3 {
                rhs[verts[i]] += w * (f[0] * grads[i][0] + f[1] * grads[i][1]);
            }
        }
    }
    rhs
}

/// Row sums of the unit-coefficient mass matrix; all entries positive and
/// summing to the domain area.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let mut lump = vec![0.0; mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        let verts = mesh.element(e);
        let (area, _) = mesh.element_geometry(e).expect("valid element");
        for v in verts {
            lump[v] += area / 3.0;
        }
    }
    lump
}

/// Piecewise-constant gradient of a P1 field, one vector per element.
pub fn element_gradients(mesh: &Mesh, f: &NodalField) -> Vec<[f64; 2]> {
    assert_eq!(f.len(), mesh.n_nodes(), "mesh/field mismatch");
    let mut out = Vec::with_capacity(mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let verts = mesh.element(e);
        let (_, grads) = mesh.element_geometry(e).expect("valid element");
        let mut g = [0.0, 0.0];
        for i in 0..3 {
            g[0] += f[verts[i]] * grads[i][0];
            g[1] += f[verts[i]] * grads[i][1];
        }
        out.push(g);
    }
    out
}

/// Imposes `u = value` on the given nodes by symmetric elimination: the
/// constrained rows and columns are cleared with a unit diagonal and the
/// right-hand side is compensated, so an SPD matrix stays SPD.
pub fn apply_dirichlet(a: &mut CsrMatrix, b: &mut [f64], nodes: &[usize], value: f64) {
    let n = a.n_rows();
    assert_eq!(b.len(), n, "rhs dimension mismatch");
    let mut constrained = vec![false; n];
    for &i in nodes {
        constrained[i] = true;
    }
    for i in 0..n {
        let lo = a.row_offsets()[i];
        let hi = a.row_offsets()[i + 1];
        if constrained[i] {
            for k in lo..hi {
                let j = a.col_indices()[k];
                a.values_mut()[k] = if j == i { 1.0 } else { 0.0 };
            }
            b[i] = value;
        } else {
            for k in lo..hi {
                let j = a.col_indices()[k];
                if constrained[j] {
                    b[i] -= a.values()[k] * value;
                    a.values_mut()[k] = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::cg_solve;

    fn mesh(n: usize) -> Mesh {
        Mesh::structured(n).unwrap()
    }

    #[test]
    fn unit_mesh_mass_matches_hand_assembly() {
        // two triangles of area 2, local matrix (A/12)[[2,1,1],[1,2,1],[1,1,2]]
        let m = assemble_mass(&mesh(1), Coeff::Constant(1.0));
        let expect = [
            [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0],
            [1.0 / 6.0, 1.0 / 3.0, 0.0, 1.0 / 6.0],
            [1.0 / 6.0, 0.0, 1.0 / 3.0, 1.0 / 6.0],
            [1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (m.get(i, j) - expect[i][j]).abs() < 1e-14,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn mass_entries_sum_to_domain_area() {
        let m = assemble_mass(&mesh(8), Coeff::Constant(1.0));
        let total: f64 = m.values().iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mass_is_linear_in_coefficient() {
        let msh = mesh(4);
        let m1 = assemble_mass(&msh, Coeff::Constant(1.0));
        let m2 = assemble_mass(&msh, Coeff::Constant(2.0));
        for (a, b) in m1.values().iter().zip(m2.values()) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_is_symmetric() {
        let msh = mesh(6);
        let w = NodalField::from_fn(&msh, |p| 1.0 + 0.5 * p[0] * p[1]);
        let m = assemble_mass(&msh, Coeff::Nodal(&w));
        for i in 0..msh.n_nodes() {
            let (cols, _) = m.row(i);
            for &j in cols {
                assert!((m.get(i, j) - m.get(j, i)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let msh = mesh(8);
        let k = assemble_stiffness(&msh, Coeff::Constant(1.0));
        for i in 0..msh.n_nodes() {
            let (_, vals) = k.row(i);
            let sum: f64 = vals.iter().sum();
            assert!(sum.abs() < 1e-13);
        }
    }

    #[test]
    fn unit_mesh_stiffness_matches_hand_assembly() {
        let k = assemble_stiffness(&mesh(1), Coeff::Constant(1.0));
        let expect = [
            [1.0, -0.5, -0.5, 0.0],
            [-0.5, 1.0, 0.0, -0.5],
            [-0.5, 0.0, 1.0, -0.5],
            [0.0, -0.5, -0.5, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (k.get(i, j) - expect[i][j]).abs() < 1e-14,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn stiffness_applied_to_linear_field() {
        let msh = mesh(4);
        let k = assemble_stiffness(&msh, Coeff::Constant(1.0));
        let f = NodalField::from_fn(&msh, |p| p[0]);
        let y = k.spmv(f.as_slice());
        for i in 0..msh.n_nodes() {
            if msh.boundary_distance_inf(i) > 0.0 {
                assert!(y[i].abs() < 1e-13, "interior row {i}");
            }
        }
        let total: f64 = y.iter().sum();
        assert!(total.abs() < 1e-13);
    }

    #[test]
    fn stiffness_kills_constants() {
        let msh = mesh(5);
        let k = assemble_stiffness(&msh, Coeff::Constant(3.0));
        let ones = vec![1.0; msh.n_nodes()];
        for v in k.spmv(&ones) {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn stiffness_is_positive_semidefinite() {
        let msh = mesh(6);
        let w = NodalField::from_fn(&msh, |p| 0.5 + 0.25 * (p[0] + p[1]).abs());
        let k = assemble_stiffness(&msh, Coeff::Nodal(&w));
        // deterministic pseudo-random probes
        let mut state = 0x12345678u64;
        for _ in 0..20 {
            let x: Vec<f64> = (0..msh.n_nodes())
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
                })
                .collect();
            let xkx: f64 = x.iter().zip(k.spmv(&x)).map(|(a, b)| a * b).sum();
            assert!(xkx >= -1e-12);
        }
    }

    #[test]
    fn weighted_rhs_of_one_sums_to_area() {
        let rhs = assemble_weighted_rhs(&mesh(8), |_| 1.0);
        let total: f64 = rhs.iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_rhs_of_zero_is_zero() {
        let rhs = assemble_weighted_rhs(&mesh(4), |_| 0.0);
        assert!(rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weighted_rhs_of_x1_is_antisymmetric() {
        let msh = mesh(2);
        let rhs = assemble_weighted_rhs(&msh, |qp| qp.xy[0]);
        let total: f64 = rhs.iter().sum();
        assert!(total.abs() < 1e-14);
        // the diagonal split is invariant under point reflection, so loads
        // of an odd integrand are antisymmetric node pair by node pair
        for iy in 0..=2 {
            for ix in 0..=2 {
                let i = msh.node_index(ix, iy);
                let j = msh.node_index(2 - ix, 2 - iy);
                assert!((rhs[i] + rhs[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn quadrature_integrates_quadratics_exactly() {
        let msh = mesh(4);
        let x1x2 = assemble_weighted_rhs(&msh, |qp| qp.xy[0] * qp.xy[1]);
        let total: f64 = x1x2.iter().sum();
        assert!(total.abs() < 1e-13);
        let x1sq = assemble_weighted_rhs(&msh, |qp| qp.xy[0] * qp.xy[0]);
        let total: f64 = x1sq.iter().sum();
        assert!((total - 4.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn flux_rhs_of_constant_field() {
        let msh = mesh(6);
        let rhs = assemble_flux_rhs(&msh, |_| [1.0, -2.0]);
        for i in 0..msh.n_nodes() {
            if msh.boundary_distance_inf(i) > 0.0 {
                assert!(rhs[i].abs() < 1e-13);
            }
        }
        let total: f64 = rhs.iter().sum();
        assert!(total.abs() < 1e-13);
    }

    #[test]
    fn flux_rhs_of_zero_field_is_zero() {
        let rhs = assemble_flux_rhs(&mesh(3), |_| [0.0, 0.0]);
        assert!(rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flux_rhs_matches_integration_by_parts() {
        // (grad(x1^2/2), grad v) == ((x1, 0), grad v) up to interpolation error
        let msh = mesh(32);
        let k = assemble_stiffness(&msh, Coeff::Constant(1.0));
        let half_sq = NodalField::from_fn(&msh, |p| 0.5 * p[0] * p[0]);
        let lhs = k.spmv(half_sq.as_slice());
        let rhs = assemble_flux_rhs(&msh, |qp| [qp.xy[0], 0.0]);
        let h = msh.spacing();
        let tol = 2.0 * h * h;
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() < tol, "{a} vs {b}");
        }
    }

    #[test]
    fn lumped_mass_unit_mesh() {
        let lump = lumped_mass(&mesh(1));
        let total: f64 = lump.iter().sum();
        assert!((total - 4.0).abs() < 1e-14);
        assert!(lump.iter().all(|&v| v > 0.0));
        // corners on the split diagonal collect two triangles, the others one
        assert!((lump[0] - 4.0 / 3.0).abs() < 1e-14);
        assert!((lump[1] - 2.0 / 3.0).abs() < 1e-14);
        assert!((lump[2] - 2.0 / 3.0).abs() < 1e-14);
        assert!((lump[3] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn lumped_mass_interior_value() {
        let msh = mesh(4);
        let lump = lumped_mass(&msh);
        let h = msh.spacing();
        let center = msh.node_index(2, 2);
        assert!((lump[center] - h * h).abs() < 1e-14);
        let total: f64 = lump.iter().sum();
        assert!((total - 4.0).abs() < 1e-13);
    }

    #[test]
    fn dirichlet_all_nodes_forces_constant_solution() {
        let msh = mesh(3);
        let mut a = assemble_stiffness(&msh, Coeff::Constant(1.0));
        let mass = assemble_mass(&msh, Coeff::Constant(1.0));
        a.add_scaled(&mass, 1.0);
        let mut b = vec![0.0; msh.n_nodes()];
        let all: Vec<usize> = (0..msh.n_nodes()).collect();
        apply_dirichlet(&mut a, &mut b, &all, 1.0);
        let (x, report) = cg_solve(&a, &b, 1e-12, 100);
        assert!(report.converged);
        for v in x {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_empty_set_is_identity() {
        let msh = mesh(2);
        let a0 = assemble_stiffness(&msh, Coeff::Constant(1.0));
        let mut a = a0.clone();
        let mut b = vec![1.0; msh.n_nodes()];
        apply_dirichlet(&mut a, &mut b, &[], 5.0);
        assert_eq!(a, a0);
        assert!(b.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dirichlet_face_gives_harmonic_constant() {
        // Laplace with u = 1 on the x1 = 1 face and natural conditions
        // elsewhere has the unique solution u = 1
        let msh = mesh(8);
        let mut a = assemble_stiffness(&msh, Coeff::Constant(1.0));
        let mut b = vec![0.0; msh.n_nodes()];
        let face = msh.boundary_nodes(crate::mesh::Side::Right);
        apply_dirichlet(&mut a, &mut b, &face, 1.0);
        let (x, report) = cg_solve(&a, &b, 1e-12, 2000);
        assert!(report.converged);
        for v in x {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn dirichlet_preserves_symmetry() {
        let msh = mesh(4);
        let mut a = assemble_stiffness(&msh, Coeff::Constant(1.0));
        let mass = assemble_mass(&msh, Coeff::Constant(1.0));
        a.add_scaled(&mass, 0.5);
        let mut b = vec![1.0; msh.n_nodes()];
        let face = msh.boundary_nodes(crate::mesh::Side::Right);
        apply_dirichlet(&mut a, &mut b, &face, 2.0);
        for i in 0..msh.n_nodes() {
            let (cols, _) = a.row(i);
            for &j in cols {
                assert!((a.get(i, j) - a.get(j, i)).abs() < 1e-14);
            }
        }
    }
}
