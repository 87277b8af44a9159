//! Per-step observables, the closed-form ECM oracle and the manufactured
//! convergence study that validate the discretization.

use crate::fem::{
    apply_dirichlet, assemble_mass, assemble_stiffness, assemble_weighted_rhs, for_each_quad_point,
    Coeff, NodalField,
};
use crate::mesh::{Mesh, Side};
use crate::model::{cutoff, energy, ModelParams};
use crate::sparse::cg_solve_from;
use crate::stepper::State;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("enzyme history covers [{first}, {last}] but t = {t} was requested")]
    InsufficientHistory { first: f64, last: f64, t: f64 },
    #[error("a convergence study needs at least 3 resolutions, got {0}")]
    TooFewResolutions(usize),
}

/// One row of scalar observables.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub tumor_mass: f64,
    pub necrotic_mass: f64,
    pub nutrient_mass: f64,
    pub mde_mass: f64,
    pub ecm_total: f64,
    pub energy: f64,
    pub phi_t_min: f64,
    pub phi_t_max: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub phi_n_min: f64,
    pub phi_n_max: f64,
    pub phi_sigma_min: f64,
    pub phi_sigma_max: f64,
    pub phi_m_min: f64,
    pub phi_m_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub gauss_seidel_iterations: usize,
}

/// Integral of a P1 field with the assembly quadrature.
pub fn field_mass(mesh: &Mesh, f: &NodalField) -> f64 {
    let mut total = 0.0;
    for_each_quad_point(mesh, |w, qp| total += w * qp.interp(f));
    total
}

/// Collects masses, extrema and the free energy of a state.
pub fn summarize(
    state: &State,
    mesh: &Mesh,
    params: &ModelParams,
    gauss_seidel_iterations: usize,
) -> DiagnosticsRow {
    DiagnosticsRow {
        t: state.t,
        tumor_mass: field_mass(mesh, &state.phi_t),
        necrotic_mass: field_mass(mesh, &state.phi_n),
        nutrient_mass: field_mass(mesh, &state.phi_sigma),
        mde_mass: field_mass(mesh, &state.phi_m),
        ecm_total: field_mass(mesh, &state.theta),
        energy: energy(mesh, &state.phi_t, &state.phi_sigma, params),
        phi_t_min: state.phi_t.min(),
        phi_t_max: state.phi_t.max(),
        mu_min: state.mu.min(),
        mu_max: state.mu.max(),
        phi_n_min: state.phi_n.min(),
        phi_n_max: state.phi_n.max(),
        phi_sigma_min: state.phi_sigma.min(),
        phi_sigma_max: state.phi_sigma.max(),
        phi_m_min: state.phi_m.min(),
        phi_m_max: state.phi_m.max(),
        theta_min: state.theta.min(),
        theta_max: state.theta.max(),
        gauss_seidel_iterations,
    }
}

pub const CSV_HEADER: &str = "t,tumor_mass,necrotic_mass,nutrient_mass,mde_mass,ecm_total,energy,\
phi_T_min,phi_T_max,mu_min,mu_max,phi_N_min,phi_N_max,phi_sigma_min,phi_sigma_max,\
phi_M_min,phi_M_max,theta_min,theta_max,gauss_seidel_iterations";

impl DiagnosticsRow {
    /// Comma-separated row with 17 significant digits, enough for an exact
    /// f64 round trip.
    pub fn to_csv_row(&self) -> String {
        let f = |v: f64| format!("{v:.16e}");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f(self.t),
            f(self.tumor_mass),
            f(self.necrotic_mass),
            f(self.nutrient_mass),
            f(self.mde_mass),
            f(self.ecm_total),
            f(self.energy),
            f(self.phi_t_min),
            f(self.phi_t_max),
            f(self.mu_min),
            f(self.mu_max),
            f(self.phi_n_min),
            f(self.phi_n_max),
            f(self.phi_sigma_min),
            f(self.phi_sigma_max),
            f(self.phi_m_min),
            f(self.phi_m_max),
            f(self.theta_min),
            f(self.theta_max),
            self.gauss_seidel_iterations
        )
    }
}

/// Closed-form ECM density: theta0 * exp(-integral of the enzyme decay rate),
/// the time integral taken with the trapezoidal rule over the stored
/// snapshots `(time, phi_M)`.
pub fn ecm_closed_form(
    theta0: &NodalField,
    phi_m_history: &[(f64, NodalField)],
    lambda_theta_deg: f64,
    t: f64,
) -> Result<NodalField, DiagnosticsError> {
    let first = phi_m_history.first().map(|(s, _)| *s);
    let last = phi_m_history.last().map(|(s, _)| *s);
    match (first, last) {
        (Some(f), Some(l)) if f <= 1e-14 && t <= l + 1e-12 => {}
        _ => {
            return Err(DiagnosticsError::InsufficientHistory {
                first: first.unwrap_or(f64::NAN),
                last: last.unwrap_or(f64::NAN),
                t,
            })
        }
    }
    let n = theta0.len();
    let mut integral = vec![0.0; n];
    for pair in phi_m_history.windows(2) {
        let (t0, f0) = (&pair[0].0, &pair[0].1);
        let (t1, f1) = (&pair[1].0, &pair[1].1);
        if *t0 >= t {
            break;
        }
        // clip the last interval at t
        let hi = t1.min(t);
        let dt = hi - t0;
        if dt <= 0.0 {
            continue;
        }
        let frac = if t1 - t0 > 0.0 { dt / (t1 - t0) } else { 0.0 };
        for i in 0..n {
            let a = lambda_theta_deg * cutoff(f0[i]);
            let b_full = lambda_theta_deg * cutoff(f1[i]);
            // value at the clipped endpoint by linear interpolation
            let b = a + frac * (b_full - a);
            integral[i] += 0.5 * dt * (a + b);
        }
    }
    Ok(NodalField::from_vec(
        (0..n).map(|i| theta0[i] * (-integral[i]).exp()).collect(),
    ))
}

/// One resolution of the manufactured study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n_per_side: usize,
    pub h: f64,
    pub l2_error: f64,
    /// log2(previous error / this error); empty for the first row.
    pub observed_order: Option<f64>,
}

/// Manufactured solution of the nutrient subproblem,
/// `u(x, t) = exp(-t) cos(pi x1 / 2) cos(pi x2 / 2)`,
/// which vanishes on the whole boundary of the square.
pub fn manufactured_solution(x: [f64; 2], t: f64) -> f64 {
    (-t).exp() * (PI * x[0] / 2.0).cos() * (PI * x[1] / 2.0).cos()
}

/// Backward-Euler/P1 convergence study for `du/dt = D lap(u) + g` with the
/// forcing matched to the manufactured solution and homogeneous Dirichlet
/// values (exact for it). Returns the L2 errors at `t_end` and the observed
/// orders between successive refinements.
pub fn manufactured_convergence_study(
    resolutions: &[usize],
    diffusivity: f64,
    dt: f64,
    t_end: f64,
) -> Result<Vec<ConvergenceRow>, DiagnosticsError> {
    if resolutions.len() < 3 {
        return Err(DiagnosticsError::TooFewResolutions(resolutions.len()));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(resolutions.len());
    for &n in resolutions {
        let err = nutrient_subproblem_error(n, diffusivity, dt, t_end);
        let order = rows
            .last()
            .map(|prev: &ConvergenceRow| (prev.l2_error / err).log2());
        rows.push(ConvergenceRow {
            n_per_side: n,
            h: 2.0 / n as f64,
            l2_error: err,
            observed_order: order,
        });
    }
    Ok(rows)
}

/// L2 error of the discrete nutrient subproblem against the manufactured
/// solution at `t_end`.
pub fn nutrient_subproblem_error(n_per_side: usize, diffusivity: f64, dt: f64, t_end: f64) -> f64 {
    let mesh = Mesh::structured(n_per_side).expect("resolution >= 1");
    let mass = assemble_mass(&mesh, Coeff::Constant(1.0));
    let stiffness = assemble_stiffness(&mesh, Coeff::Constant(1.0));
    let mut a = mass.clone();
    a.add_scaled(&stiffness, dt * diffusivity);
    let boundary: Vec<usize> = Side::ALL
        .iter()
        .flat_map(|&s| mesh.boundary_nodes(s))
        .collect();
    {
        // Dirichlet rows installed once; the matrix is constant in time
        let mut dummy = vec![0.0; mesh.n_nodes()];
        apply_dirichlet(&mut a, &mut dummy, &boundary, 0.0);
    }

    // forcing g = du/dt - D lap(u) = (D pi^2/2 - 1) u
    let source_factor = diffusivity * PI * PI / 2.0 - 1.0;

    let mut u = NodalField::from_fn(&mesh, |p| manufactured_solution(p, 0.0));
    let steps = (t_end / dt).round().max(1.0) as usize;
    for step in 1..=steps {
        let t_next = step as f64 * dt;
        let mut b = mass.spmv(u.as_slice());
        let g = assemble_weighted_rhs(&mesh, |qp| {
            source_factor * manufactured_solution(qp.xy, t_next)
        });
        for (bi, gi) in b.iter_mut().zip(&g) {
            *bi += dt * gi;
        }
        for &i in &boundary {
            b[i] = 0.0;
        }
        let (x, report) = cg_solve_from(&a, &b, Some(u.as_slice()), 1e-12, 10_000);
        assert!(report.converged, "manufactured subproblem solve failed");
        u = NodalField::from_vec(x);
    }

    let t_final = steps as f64 * dt;
    let mut err_sq = 0.0;
    for_each_quad_point(&mesh, |w, qp| {
        let d = qp.interp(&u) - manufactured_solution(qp.xy, t_final);
        err_sq += w * d * d;
    });
    err_sq.sqrt()
}
