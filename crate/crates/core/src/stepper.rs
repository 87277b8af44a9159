//! Semi-implicit backward-Euler time integration. Each step decouples the
//! six-field system into a Gauss--Seidel sweep of linear subsolves in the
//! order nutrient -> (tumor, chemical potential) -> necrotic -> enzyme ->
//! ECM, repeated until the max nodal tumor increment drops below TOL.
//!
//! Linearization policy: every nonlinearity in the unknown of the current
//! subsolve is lagged at the previous sweep, except (a) the contractive
//! potential derivative, which gets one Newton step around the lagged tumor
//! iterate (its curvature is nonnegative), and (b) linear implicit decay and
//! consumption terms, which move to the matrix. The necrotic and ECM updates
//! are mass-lumped pointwise relations, which keeps them monotone and
//! positivity preserving.

use crate::fem::{
    apply_dirichlet, assemble_flux_rhs, assemble_mass, assemble_mass_qp, assemble_stiffness,
    assemble_weighted_rhs, Coeff, NodalField,
};
use crate::mesh::{Mesh, Side};
use crate::model::{
    cutoff, potential, reactions, saturation_factor, sigmoid, ModelError, ModelParams,
};
use crate::nonlocal::{
    adhesion_flux, ConvolutionStencil, HaptotaxisMode, KernelSpec, NonlocalError,
};
use crate::sparse::{
    bicgstab_solve_from, cg_solve_from, jacobi_preconditioner, CsrMatrix, SolveReport,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// All six nodal fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub phi_t: NodalField,
    pub mu: NodalField,
    pub phi_n: NodalField,
    pub phi_sigma: NodalField,
    pub phi_m: NodalField,
    pub theta: NodalField,
}

impl State {
    pub fn zeros(mesh: &Mesh) -> State {
        let n = mesh.n_nodes();
        State {
            t: 0.0,
            phi_t: NodalField::zeros(n),
            mu: NodalField::zeros(n),
            phi_n: NodalField::zeros(n),
            phi_sigma: NodalField::zeros(n),
            phi_m: NodalField::zeros(n),
            theta: NodalField::zeros(n),
        }
    }

    pub fn fields(&self) -> [(&'static str, &NodalField); 6] {
        [
            ("phi_T", &self.phi_t),
            ("mu", &self.mu),
            ("phi_N", &self.phi_n),
            ("phi_sigma", &self.phi_sigma),
            ("phi_M", &self.phi_m),
            ("theta", &self.theta),
        ]
    }
}

/// Working fields of the inner Gauss--Seidel loop.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub phi_t: NodalField,
    pub mu: NodalField,
    pub phi_n: NodalField,
    pub phi_sigma: NodalField,
    pub phi_m: NodalField,
    pub theta: NodalField,
}

impl Iterate {
    pub fn from_state(state: &State) -> Iterate {
        Iterate {
            phi_t: state.phi_t.clone(),
            mu: state.mu.clone(),
            phi_n: state.phi_n.clone(),
            phi_sigma: state.phi_sigma.clone(),
            phi_m: state.phi_m.clone(),
            theta: state.theta.clone(),
        }
    }
}

/// Reports of the linear subsolves of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsolveReports {
    pub nutrient: SolveReport,
    pub tumor_chempot: SolveReport,
    pub mde: SolveReport,
}

/// Outcome of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub gauss_seidel_iterations: usize,
    /// Max nodal tumor change of the last sweep.
    pub final_increment: f64,
    pub converged: bool,
    /// Linear solver reports of the last sweep.
    pub subsolves: Option<SubsolveReports>,
}

/// What `run` does with a step whose inner loop hit the iteration cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonconvergedPolicy {
    Abort,
    Accept,
}

/// Time discretization controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub dt: f64,
    /// Gauss--Seidel stopping tolerance on the max nodal tumor increment.
    pub tol: f64,
    /// Max inner iterations per step.
    pub n_iter: usize,
    pub t_end: f64,
    /// Steps between emitted outputs.
    pub output_every: usize,
    /// Relative residual tolerance of the linear solvers.
    pub lin_tol: f64,
    pub lin_max_iter: usize,
    pub on_nonconverged: NonconvergedPolicy,
}

impl Default for SchemeConfig {
    fn default() -> SchemeConfig {
        SchemeConfig {
            dt: 0.01,
            tol: 1e-6,
            n_iter: 100,
            t_end: 15.0,
            output_every: 100,
            lin_tol: 1e-10,
            lin_max_iter: 10_000,
            on_nonconverged: NonconvergedPolicy::Abort,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt > 0.0) {
            return Err(StepError::InvalidScheme {
                key: "dt",
                value: self.dt,
            });
        }
        if !(self.tol > 0.0) {
            return Err(StepError::InvalidScheme {
                key: "tol",
                value: self.tol,
            });
        }
        if self.n_iter == 0 {
            return Err(StepError::InvalidScheme {
                key: "n_iter",
                value: 0.0,
            });
        }
        if !(self.t_end >= 0.0) {
            return Err(StepError::InvalidScheme {
                key: "t_end",
                value: self.t_end,
            });
        }
        if !(self.lin_tol > 0.0) {
            return Err(StepError::InvalidScheme {
                key: "lin_tol",
                value: self.lin_tol,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("scheme parameter `{key}` is invalid ({value})")]
    InvalidScheme { key: &'static str, value: f64 },
    #[error("{system} solve failed at t = {t}: {iterations} iterations, relative residual {residual:.3e}")]
    LinearSolveFailed {
        system: &'static str,
        t: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("{system} produced a non-finite value at t = {t}")]
    NonFinite { system: &'static str, t: f64 },
    #[error("Gauss-Seidel loop did not converge at t = {t}: increment {increment:.3e} after {iterations} iterations")]
    GaussSeidelNonConvergence {
        t: f64,
        increment: f64,
        iterations: usize,
    },
    #[error(transparent)]
    Nonlocal(#[from] NonlocalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Totals of a completed run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub max_gauss_seidel_iterations: usize,
    pub nonconverged_steps: usize,
}

/// Holds the mesh-dependent operators and drives the time stepping.
pub struct Stepper<'m> {
    mesh: &'m Mesh,
    params: ModelParams,
    config: SchemeConfig,
    mode: HaptotaxisMode,
    stencil: Option<ConvolutionStencil>,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    lumped: Vec<f64>,
    dirichlet_nodes: Vec<usize>,
    /// (1 + dt lambda_apo) M, the fixed tumor block.
    tumor_diag_block: CsrMatrix,
    /// -(eps_T^2 K + delta_T M), the fixed part of the potential block.
    potential_block_base: CsrMatrix,
    /// (1 + dt lambda_M_dec) M + dt D_M K, the fixed enzyme matrix.
    mde_matrix: CsrMatrix,
}

impl<'m> Stepper<'m> {
    pub fn new(
        mesh: &'m Mesh,
        params: ModelParams,
        config: SchemeConfig,
        mode: HaptotaxisMode,
        kernel: Option<KernelSpec>,
    ) -> Result<Stepper<'m>, StepError> {
        params.validate()?;
        config.validate()?;
        let stencil = match (mode, kernel) {
            (HaptotaxisMode::Nonlocal, Some(spec)) => Some(ConvolutionStencil::build(mesh, &spec)),
            (HaptotaxisMode::Nonlocal, None) => return Err(NonlocalError::MissingStencil.into()),
            (HaptotaxisMode::Local, _) => None,
        };
        let mass = assemble_mass(mesh, Coeff::Constant(1.0));
        let stiffness = assemble_stiffness(mesh, Coeff::Constant(1.0));
        debug_assert!(mass.same_pattern(&stiffness));
        let lumped = crate::fem::lumped_mass(mesh);
        let dirichlet_nodes = if params.sigma_dirichlet_enabled {
            mesh.boundary_nodes(Side::Right)
        } else {
            Vec::new()
        };

        let mut tumor_diag_block = mass.clone();
        tumor_diag_block.scale(1.0 + config.dt * params.lambda_t_apo);

        let mut potential_block_base = stiffness.clone();
        potential_block_base.scale(-params.eps_t * params.eps_t);
        potential_block_base.add_scaled(&mass, -params.delta_t);

        let mut mde_matrix = mass.clone();
        mde_matrix.scale(1.0 + config.dt * params.lambda_m_dec);
        mde_matrix.add_scaled(&stiffness, config.dt * params.d_m);

        Ok(Stepper {
            mesh,
            params,
            config,
            mode,
            stencil,
            mass,
            stiffness,
            lumped,
            dirichlet_nodes,
            tumor_diag_block,
            potential_block_base,
            mde_matrix,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn mode(&self) -> HaptotaxisMode {
        self.mode
    }

    pub fn stencil(&self) -> Option<&ConvolutionStencil> {
        self.stencil.as_ref()
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    /// Nutrient subsolve: implicit diffusion and consumption, explicit
    /// chemotaxis coupling, Dirichlet face applied when enabled; SPD, CG.
    pub fn solve_nutrient(
        &self,
        state_n: &State,
        iter: &Iterate,
    ) -> Result<(NodalField, SolveReport), StepError> {
        let p = &self.params;
        let dt = self.config.dt;
        // lagged consumption coefficient: rate * viable fraction * saturation
        let coeff = NodalField::from_vec(
            (0..self.mesh.n_nodes())
                .map(|i| {
                    p.lambda_t_pro
                        * cutoff(iter.phi_t[i] - iter.phi_n[i])
                        * saturation_factor(cutoff(iter.phi_sigma[i]), p.lambda_sigma_sat)
                })
                .collect(),
        );
        let consumption = assemble_mass(self.mesh, Coeff::Nodal(&coeff));
        let mut a = self.mass.clone();
        a.add_scaled(&self.stiffness, dt * p.d_sigma / p.delta_sigma);
        a.add_scaled(&consumption, dt);

        let mut b = self.mass.spmv(state_n.phi_sigma.as_slice());
        if p.chi_c != 0.0 {
            let chemo = self.stiffness.spmv(iter.phi_t.as_slice());
            for (bi, ci) in b.iter_mut().zip(&chemo) {
                *bi += dt * p.chi_c * p.d_sigma * ci;
            }
        }
        if !self.dirichlet_nodes.is_empty() {
            apply_dirichlet(&mut a, &mut b, &self.dirichlet_nodes, p.sigma_dirichlet_value);
        }
        let (x, report) = cg_solve_from(
            &a,
            &b,
            Some(iter.phi_sigma.as_slice()),
            self.config.lin_tol,
            self.config.lin_max_iter,
        );
        if !report.converged {
            return Err(StepError::LinearSolveFailed {
                system: "nutrient",
                t: state_n.t,
                iterations: report.iterations,
                residual: report.final_relative_residual,
            });
        }
        let field = NodalField::from_vec(x);
        self.check_finite("nutrient", state_n.t, &field)?;
        Ok((field, report))
    }

    /// Coupled (tumor, chemical potential) subsolve. The 2N x 2N block is
    /// nonsymmetric and goes to Jacobi-preconditioned BiCGSTAB.
    pub fn solve_tumor_chempot(
        &self,
        state_n: &State,
        iter: &Iterate,
    ) -> Result<((NodalField, NodalField), SolveReport), StepError> {
        let p = &self.params;
        let dt = self.config.dt;
        let n = self.mesh.n_nodes();

        // mobility at the lagged iterate, nodally interpolated
        let mobility = NodalField::from_vec(
            (0..n)
                .map(|i| p.mobility(iter.phi_t[i], iter.phi_n[i]))
                .collect(),
        );
        let mut k_m = assemble_stiffness(self.mesh, Coeff::Nodal(&mobility));
        k_m.scale(dt);

        // Newton curvature of the contractive potential at the lagged iterate
        let e_bar = p.e_bar;
        let mut curvature = assemble_mass_qp(self.mesh, |qp| {
            potential(qp.interp(&iter.phi_t), e_bar).convex_second
        });
        curvature.scale(-1.0);
        curvature.add_scaled(&self.potential_block_base, 1.0);

        // tumor equation right-hand side
        let flux = adhesion_flux(
            self.mode,
            self.mesh,
            &iter.theta,
            p,
            self.stencil.as_ref(),
        )?;
        let flux_rhs = assemble_flux_rhs(self.mesh, |qp| flux.eval(qp, &iter.phi_t, &iter.phi_n));
        let prolif_rhs = assemble_weighted_rhs(self.mesh, |qp| {
            let r = reactions(qp.interp(&iter.phi_t), qp.interp(&iter.phi_n), 0.0, 0.0, p);
            r.f1 * qp.interp(&iter.phi_sigma)
        });
        let decline = self.mass.spmv(iter.phi_n.as_slice());
        let mut b1 = self.mass.spmv(state_n.phi_t.as_slice());
        let lambda_n_dec = p.lambda_n_dec();
        for i in 0..n {
            b1[i] += dt * (flux_rhs[i] + prolif_rhs[i] - lambda_n_dec * decline[i]);
        }

        // potential equation right-hand side: explicit expansive derivative
        // (with the chemotaxis coupling) at time level n, subtracted per the
        // splitting mu = D Psi_c(phi^{n+1}) - D Psi_e(phi^n), plus the
        // constant part of the Newton linearization
        let b2 = assemble_weighted_rhs(self.mesh, |qp| {
            let tn = qp.interp(&state_n.phi_t);
            let sn = qp.interp(&state_n.phi_sigma);
            let tk = qp.interp(&iter.phi_t);
            let pk = potential(tk, e_bar);
            -e_bar * tn - p.chi_c * sn + pk.convex_prime - pk.convex_second * tk
        });

        let block = compose_block(&self.tumor_diag_block, &k_m, &curvature, &self.mass);
        let mut rhs = Vec::with_capacity(2 * n);
        rhs.extend_from_slice(&b1);
        rhs.extend_from_slice(&b2);
        let mut x0 = Vec::with_capacity(2 * n);
        x0.extend_from_slice(iter.phi_t.as_slice());
        x0.extend_from_slice(iter.mu.as_slice());
        let precond = jacobi_preconditioner(&block);
        let (mut x, mut report) = bicgstab_solve_from(
            &block,
            &rhs,
            Some(&x0),
            self.config.lin_tol,
            self.config.lin_max_iter,
            &precond,
        );
        // rare repeated breakdowns: re-seed from the best iterate, then hand
        // the system to the slow-but-sure normal-equations fallback
        for _ in 0..2 {
            if report.converged {
                break;
            }
            (x, report) = bicgstab_solve_from(
                &block,
                &rhs,
                Some(&x),
                self.config.lin_tol,
                self.config.lin_max_iter,
                &precond,
            );
        }
        if !report.converged {
            (x, report) = crate::sparse::cgnr_solve_from(
                &block,
                &rhs,
                Some(&x),
                self.config.lin_tol,
                self.config.lin_max_iter,
            );
        }
        if !report.converged {
            return Err(StepError::LinearSolveFailed {
                system: "tumor/chemical potential",
                t: state_n.t,
                iterations: report.iterations,
                residual: report.final_relative_residual,
            });
        }
        let phi_t = NodalField::from_vec(x[..n].to_vec());
        let mu = NodalField::from_vec(x[n..].to_vec());
        self.check_finite("tumor/chemical potential", state_n.t, &phi_t)?;
        self.check_finite("tumor/chemical potential", state_n.t, &mu)?;
        Ok(((phi_t, mu), report))
    }

    /// Necrotic update: mass-lumped pointwise relation with implicit decay;
    /// nonnegative and nondecreasing whenever the degradation rate is zero.
    pub fn update_necrotic(&self, state_n: &State, iter: &Iterate) -> NodalField {
        let p = &self.params;
        let dt = self.config.dt;
        let denom = 1.0 + dt * p.lambda_n_deg;
        NodalField::from_vec(
            (0..self.mesh.n_nodes())
                .map(|i| {
                    let source = p.lambda_vn
                        * sigmoid(p.sigma_vn - iter.phi_sigma[i], p.eps_sigmoid)
                        * cutoff(iter.phi_t[i] - iter.phi_n[i]);
                    (state_n.phi_n[i] + dt * source) / denom
                })
                .collect(),
        )
    }

    /// Enzyme subsolve: implicit diffusion and decay, explicit production
    /// driven by the lagged ECM density; SPD, CG.
    pub fn solve_mde(
        &self,
        state_n: &State,
        iter: &Iterate,
    ) -> Result<(NodalField, SolveReport), StepError> {
        let p = &self.params;
        let dt = self.config.dt;
        let production = assemble_weighted_rhs(self.mesh, |qp| {
            let r = reactions(
                qp.interp(&iter.phi_t),
                qp.interp(&iter.phi_n),
                qp.interp(&iter.phi_sigma),
                qp.interp(&iter.phi_m),
                p,
            );
            qp.interp(&iter.theta) * r.f4
        });
        let mut b = self.mass.spmv(state_n.phi_m.as_slice());
        for (bi, pi) in b.iter_mut().zip(&production) {
            *bi += dt * pi;
        }
        let (x, report) = cg_solve_from(
            &self.mde_matrix,
            &b,
            Some(iter.phi_m.as_slice()),
            self.config.lin_tol,
            self.config.lin_max_iter,
        );
        if !report.converged {
            return Err(StepError::LinearSolveFailed {
                system: "enzyme",
                t: state_n.t,
                iterations: report.iterations,
                residual: report.final_relative_residual,
            });
        }
        let field = NodalField::from_vec(x);
        self.check_finite("enzyme", state_n.t, &field)?;
        Ok((field, report))
    }

    /// ECM update: pointwise implicit decay, monotone and sign preserving.
    pub fn update_ecm(&self, state_n: &State, iter: &Iterate) -> NodalField {
        let p = &self.params;
        let dt = self.config.dt;
        NodalField::from_vec(
            (0..self.mesh.n_nodes())
                .map(|i| {
                    state_n.theta[i] / (1.0 + dt * p.lambda_theta_deg * cutoff(iter.phi_m[i]))
                })
                .collect(),
        )
    }

    /// One time step: sweeps the five subsolves from the previous state
    /// until the tumor increment drops below TOL or the iteration cap hits.
    pub fn gauss_seidel_step(&self, state_n: &State) -> Result<(State, StepReport), StepError> {
        let mut iter = Iterate::from_state(state_n);
        let mut increment = f64::INFINITY;
        let mut sweeps = 0usize;
        let mut converged = false;
        let mut subsolves = None;

        while sweeps < self.config.n_iter {
            let (sigma, rep_sigma) = self.solve_nutrient(state_n, &iter)?;
            iter.phi_sigma = sigma;

            let ((phi_t, mu), rep_tumor) = self.solve_tumor_chempot(state_n, &iter)?;
            increment = phi_t.max_abs_diff(&iter.phi_t);
            iter.phi_t = phi_t;
            iter.mu = mu;

            // update_necrotic reads the previous necrotic iterate inside the
            // cutoff, so it runs before the overwrite
            iter.phi_n = self.update_necrotic(state_n, &iter);

            let (phi_m, rep_mde) = self.solve_mde(state_n, &iter)?;
            iter.phi_m = phi_m;

            iter.theta = self.update_ecm(state_n, &iter);

            sweeps += 1;
            subsolves = Some(SubsolveReports {
                nutrient: rep_sigma,
                tumor_chempot: rep_tumor,
                mde: rep_mde,
            });
            if increment < self.config.tol {
                converged = true;
                break;
            }
        }

        let state = State {
            t: state_n.t + self.config.dt,
            phi_t: iter.phi_t,
            mu: iter.mu,
            phi_n: iter.phi_n,
            phi_sigma: iter.phi_sigma,
            phi_m: iter.phi_m,
            theta: iter.theta,
        };
        let report = StepReport {
            gauss_seidel_iterations: sweeps,
            final_increment: increment,
            converged,
            subsolves,
        };
        Ok((state, report))
    }

    /// Marches from `initial` until `t_end`, invoking the observer after
    /// every step (and once for the initial state with no report). Steps
    /// that exhaust the inner iteration cap abort or pass through according
    /// to the configured policy.
    pub fn run<F>(&self, initial: State, mut observer: F) -> Result<(State, RunSummary), StepError>
    where
        F: FnMut(usize, &State, Option<&StepReport>),
    {
        let t0 = initial.t;
        let t_end = self.config.t_end;
        observer(0, &initial, None);
        let mut state = initial;
        let mut summary = RunSummary::default();
        let mut step = 0usize;
        let cutoff_t = t_end - 1e-12 * t_end.abs().max(1.0);
        while state.t < cutoff_t {
            let (mut next, report) = self.gauss_seidel_step(&state)?;
            step += 1;
            // anchor time to the step count to avoid drift over long runs
            next.t = t0 + step as f64 * self.config.dt;
            summary.steps = step;
            summary.max_gauss_seidel_iterations = summary
                .max_gauss_seidel_iterations
                .max(report.gauss_seidel_iterations);
            if !report.converged {
                summary.nonconverged_steps += 1;
                if self.config.on_nonconverged == NonconvergedPolicy::Abort {
                    return Err(StepError::GaussSeidelNonConvergence {
                        t: next.t,
                        increment: report.final_increment,
                        iterations: report.gauss_seidel_iterations,
                    });
                }
            }
            state = next;
            observer(step, &state, Some(&report));
        }
        Ok((state, summary))
    }

    fn check_finite(
        &self,
        system: &'static str,
        t: f64,
        field: &NodalField,
    ) -> Result<(), StepError> {
        if field.as_slice().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(StepError::NonFinite { system, t })
        }
    }
}

/// Composes four equal-pattern N x N matrices into the 2N x 2N system
/// [[a11, a12], [a21, a22]].
fn compose_block(
    a11: &CsrMatrix,
    a12: &CsrMatrix,
    a21: &CsrMatrix,
    a22: &CsrMatrix,
) -> CsrMatrix {
    debug_assert!(a11.same_pattern(a12) && a11.same_pattern(a21) && a11.same_pattern(a22));
    let n = a11.n_rows();
    let nnz = a11.nnz();
    let offsets = a11.row_offsets();
    let cols = a11.col_indices();

    let mut row_offsets = Vec::with_capacity(2 * n + 1);
    let mut col_indices = Vec::with_capacity(4 * nnz);
    let mut values = Vec::with_capacity(4 * nnz);
    row_offsets.push(0);
    for i in 0..n {
        let (lo, hi) = (offsets[i], offsets[i + 1]);
        col_indices.extend_from_slice(&cols[lo..hi]);
        col_indices.extend(cols[lo..hi].iter().map(|&j| j + n));
        values.extend_from_slice(&a11.values()[lo..hi]);
        values.extend_from_slice(&a12.values()[lo..hi]);
        row_offsets.push(col_indices.len());
    }
    for i in 0..n {
        let (lo, hi) = (offsets[i], offsets[i + 1]);
        col_indices.extend_from_slice(&cols[lo..hi]);
        col_indices.extend(cols[lo..hi].iter().map(|&j| j + n));
        values.extend_from_slice(&a21.values()[lo..hi]);
        values.extend_from_slice(&a22.values()[lo..hi]);
        row_offsets.push(col_indices.len());
    }
    CsrMatrix::from_csr_parts(2 * n, 2 * n, row_offsets, col_indices, values)
}
