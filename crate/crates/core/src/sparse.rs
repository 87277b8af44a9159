//! Compressed-row sparse matrices and the two iterative solvers used by the
//! time stepper: unpreconditioned CG for the symmetric positive definite
//! systems and Jacobi-preconditioned BiCGSTAB for the coupled nonsymmetric
//! block. Everything is single-threaded and bitwise reproducible.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("triplet index ({row}, {col}) out of range for a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
}

/// General sparse matrix in canonical CSR form (columns strictly increasing
/// within each row, duplicates summed).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<CsrMatrix, SparseError> {
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(SparseError::IndexOutOfRange {
                    row: i,
                    col: j,
                    n_rows,
                    n_cols,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_counts = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_counts[i + 1] += 1;
                last = Some((i, j));
            }
        }
        let mut row_offsets = row_counts;
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles a CSR matrix directly from its parts. The caller must
    /// supply canonical data (sorted columns, offsets of length n_rows + 1).
    pub fn from_csr_parts(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> CsrMatrix {
        debug_assert_eq!(row_offsets.len(), n_rows + 1);
        debug_assert_eq!(*row_offsets.last().unwrap(), col_indices.len());
        debug_assert_eq!(col_indices.len(), values.len());
        debug_assert!(row_offsets.windows(2).all(|w| w[0] <= w[1]));
        CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Entry lookup by binary search; absent entries read as zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        match self.col_indices[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Matrix-vector product with fixed per-row accumulation order.
    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "spmv dimension mismatch");
        assert_eq!(y.len(), self.n_rows, "spmv output dimension mismatch");
        for i in 0..self.n_rows {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            y[i] = acc;
        }
    }

    /// Transposed matrix-vector product `A^T x` with deterministic
    /// scatter order.
    pub fn spmv_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows, "transpose spmv dimension mismatch");
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            for k in lo..hi {
                y[self.col_indices[k]] += self.values[k] * xi;
            }
        }
        y
    }

    /// Main diagonal, zeros where no entry is stored.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// True if both matrices share the exact same sparsity pattern.
    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_offsets == other.row_offsets
            && self.col_indices == other.col_indices
    }

    /// In-place `self += scale * other`, requiring identical patterns.
    pub fn add_scaled(&mut self, other: &CsrMatrix, scale: f64) {
        assert!(self.same_pattern(other), "pattern mismatch in add_scaled");
        for (v, o) in self.values.iter_mut().zip(other.values.iter()) {
            *v += scale * o;
        }
    }

    /// In-place `self *= scale`.
    pub fn scale(&mut self, scale: f64) {
        for v in &mut self.values {
            *v *= scale;
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients for symmetric positive definite systems (the caller
/// guarantees SPD). Returns immediately with x = 0 when b = 0. Convergence
/// is certified against the true residual, not just the recursion.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, SolveReport) {
    cg_solve_from(a, b, None, tol, max_iter)
}

/// CG with an optional warm start; used internally by the stepper.
pub fn cg_solve_from(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveReport) {
    let n = a.n_rows();
    assert_eq!(a.n_cols(), n, "cg requires a square matrix");
    assert_eq!(b.len(), n, "cg dimension mismatch");
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                final_relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), n);
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    a.spmv_into(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let target = tol * b_norm;

    while iterations < max_iter {
        if rr.sqrt() <= target {
            // certify against the true residual; restart if the recursion drifted
            a.spmv_into(&x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            rr = dot(&r, &r);
            if rr.sqrt() <= target {
                break;
            }
            p.copy_from_slice(&r);
        }
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // loss of positive definiteness (or exact convergence); stop here
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        iterations += 1;
    }

    let mut residual = vec![0.0; n];
    a.spmv_into(&x, &mut residual);
    for i in 0..n {
        residual[i] = b[i] - residual[i];
    }
    let rel = norm(&residual) / b_norm;
    let report = SolveReport {
        iterations,
        final_relative_residual: rel,
        converged: rel <= tol,
    };
    (x, report)
}

/// Diagonal (Jacobi) preconditioner; zero diagonal entries are replaced by 1
/// so the saddle block stays usable.
pub fn jacobi_preconditioner(a: &CsrMatrix) -> Vec<f64> {
    a.diagonal()
        .into_iter()
        .map(|d| if d == 0.0 { 1.0 } else { d })
        .collect()
}

/// BiCGSTAB with diagonal preconditioning for square nonsingular systems.
///
/// On a rho-breakdown it restarts once from the current iterate and fails
/// with the report if breakdown recurs.
pub fn bicgstab_solve(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    precond_diag: &[f64],
) -> (Vec<f64>, SolveReport) {
    bicgstab_solve_from(a, b, None, tol, max_iter, precond_diag)
}

/// BiCGSTAB with an optional warm start; used internally by the stepper.
///
/// Breakdowns and divergence are detected by relative guards; the first
/// occurrence restarts the Krylov process from the best iterate seen so far,
/// the second ends the solve with the (non-converged) report. The best
/// iterate is always the one returned.
pub fn bicgstab_solve_from(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    precond_diag: &[f64],
) -> (Vec<f64>, SolveReport) {
    let n = a.n_rows();
    assert_eq!(a.n_cols(), n, "bicgstab requires a square matrix");
    assert_eq!(b.len(), n, "bicgstab dimension mismatch");
    assert_eq!(precond_diag.len(), n, "preconditioner dimension mismatch");
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                final_relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let inv_diag: Vec<f64> = precond_diag
        .iter()
        .map(|&d| if d == 0.0 { 1.0 } else { 1.0 / d })
        .collect();

    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), n);
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut Vec<f64>| {
        a.spmv_into(x, r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
    };
    true_residual(&x, &mut r);
    let mut r_norm = norm(&r);
    let mut best_x = x.clone();
    let mut best_norm = r_norm;

    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut restarted = false;
    let mut iterations = 0;
    let target = tol * b_norm;
    // well beyond any useful iterate; signals the process went unstable
    let blowup = 1e8 * (b_norm + best_norm);

    'outer: while iterations < max_iter && r_norm > target {
        let rho_new = dot(&r_hat, &r);
        let mut need_restart =
            rho_new.abs() < 1e-14 * norm(&r_hat) * r_norm || omega == 0.0 || !r_norm.is_finite();
        if !need_restart {
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            for i in 0..n {
                p_hat[i] = p[i] * inv_diag[i];
            }
            a.spmv_into(&p_hat, &mut v);
            let rhv = dot(&r_hat, &v);
            if rhv.abs() < 1e-14 * norm(&r_hat) * norm(&v) || rhv == 0.0 {
                need_restart = true;
            } else {
                alpha = rho_new / rhv;
                for i in 0..n {
                    s[i] = r[i] - alpha * v[i];
                }
                if norm(&s) <= target {
                    for i in 0..n {
                        x[i] += alpha * p_hat[i];
                    }
                    r.copy_from_slice(&s);
                    r_norm = norm(&r);
                    iterations += 1;
                    if r_norm < best_norm {
                        best_norm = r_norm;
                        best_x.copy_from_slice(&x);
                    }
                    break 'outer;
                }
                for i in 0..n {
                    s_hat[i] = s[i] * inv_diag[i];
                }
                a.spmv_into(&s_hat, &mut t);
                let tt = dot(&t, &t);
                omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
                for i in 0..n {
                    x[i] += alpha * p_hat[i] + omega * s_hat[i];
                    r[i] = s[i] - omega * t[i];
                }
                rho = rho_new;
                iterations += 1;
                r_norm = norm(&r);
                if r_norm < best_norm {
                    best_norm = r_norm;
                    best_x.copy_from_slice(&x);
                }
                if !r_norm.is_finite() || r_norm > blowup {
                    need_restart = true;
                }
            }
        }
        if need_restart {
            if restarted {
                break;
            }
            // resume from the best iterate with a fresh shadow residual
            x.copy_from_slice(&best_x);
            true_residual(&x, &mut r);
            r_norm = norm(&r);
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|z| *z = 0.0);
            p.iter_mut().for_each(|z| *z = 0.0);
            restarted = true;
        }
    }

    // certify the better of the final and best-seen iterates
    let mut residual = vec![0.0; n];
    a.spmv_into(&x, &mut residual);
    for i in 0..n {
        residual[i] = b[i] - residual[i];
    }
    let mut rel = norm(&residual) / b_norm;
    if !rel.is_finite() || rel * b_norm > best_norm {
        a.spmv_into(&best_x, &mut residual);
        for i in 0..n {
            residual[i] = b[i] - residual[i];
        }
        let best_rel = norm(&residual) / b_norm;
        if best_rel < rel || !rel.is_finite() {
            x.copy_from_slice(&best_x);
            rel = best_rel;
        }
    }
    let report = SolveReport {
        iterations,
        final_relative_residual: rel,
        converged: rel <= tol,
    };
    (x, report)
}

/// CG on the normal equations: slow but unconditionally convergent for any
/// nonsingular system. The stepper falls back to it when BiCGSTAB stalls.
pub fn cgnr_solve_from(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveReport) {
    let n = a.n_rows();
    assert_eq!(a.n_cols(), n, "cgnr requires a square matrix");
    assert_eq!(b.len(), n, "cgnr dimension mismatch");
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return (
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                final_relative_residual: 0.0,
                converged: true,
            },
        );
    }
    let target = tol * b_norm;
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    a.spmv_into(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = a.spmv_transpose(&r);
    let mut p = z.clone();
    let mut zz = dot(&z, &z);
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    while iterations < max_iter && norm(&r) > target && zz > 0.0 {
        a.spmv_into(&p, &mut w);
        let ww = dot(&w, &w);
        if ww == 0.0 {
            break;
        }
        let alpha = zz / ww;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * w[i];
        }
        z = a.spmv_transpose(&r);
        let zz_new = dot(&z, &z);
        let beta = zz_new / zz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        zz = zz_new;
        iterations += 1;
    }
    let mut residual = vec![0.0; n];
    a.spmv_into(&x, &mut residual);
    for i in 0..n {
        residual[i] = b[i] - residual[i];
    }
    let rel = norm(&residual) / b_norm;
    let report = SolveReport {
        iterations,
        final_relative_residual: rel,
        converged: rel <= tol,
    };
    (x, report)
}
