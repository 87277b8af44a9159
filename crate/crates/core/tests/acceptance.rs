//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured value (run with `--nocapture` to see them).
//!
//! The reference scenario (criteria 6 and 7) is marched once and shared.

use once_cell::sync::Lazy;
use std::time::{Duration, Instant};
use tumorfield::diagnostics::{field_mass, manufactured_convergence_study};
use tumorfield::fem::NodalField;
use tumorfield::initial::{FieldInit, InitialConditions};
use tumorfield::mesh::Mesh;
use tumorfield::model::{energy, ModelParams};
use tumorfield::nonlocal::{
    adhesion_flux, ConvolutionStencil, HaptotaxisMode, KernelSpec, OmegaMode,
};
use tumorfield::stepper::{NonconvergedPolicy, SchemeConfig, State, Stepper};

fn pass(criterion: usize, name: &str, detail: String) {
    println!("ACCEPTANCE {criterion} ({name}): PASS ({detail})");
}

fn quiet_params() -> ModelParams {
    ModelParams {
        lambda_t_pro: 0.0,
        lambda_t_apo: 0.0,
        lambda_n_deg: 0.0,
        lambda_vn: 0.0,
        lambda_sigma_sat: 0.0,
        lambda_m_dec: 0.0,
        lambda_m_pro: 0.0,
        lambda_theta_dec: 0.0,
        lambda_theta_deg: 0.0,
        chi_c: 0.0,
        chi_h: 0.0,
        sigma_dirichlet_enabled: false,
        ..ModelParams::default()
    }
}

#[test]
fn criterion_1_zero_state_fixed_point() {
    let start = Instant::now();
    let mesh = Mesh::structured(32).unwrap();
    let config = SchemeConfig {
        dt: 0.01,
        t_end: 1.0, // 100 steps
        ..SchemeConfig::default()
    };
    let stepper = Stepper::new(&mesh, quiet_params(), config, HaptotaxisMode::Local, None)
        .unwrap();
    let (state, summary) = stepper.run(State::zeros(&mesh), |_, _, _| {}).unwrap();
    assert_eq!(summary.steps, 100);
    let mut worst = 0.0f64;
    for (_, f) in state.fields() {
        worst = worst.max(f.min().abs()).max(f.max().abs());
    }
    let elapsed = start.elapsed();
    assert!(worst <= 1e-12, "max |field| = {worst:e}");
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    pass(
        1,
        "zero-state fixed point",
        format!("max |field| = {worst:.2e} after 100 steps, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_2_ecm_oracle_against_closed_form() {
    // phi_M is held at 1 by switching off its production and decay; with
    // lambda_theta_deg = 1 the ECM then decays geometrically per step
    let mesh = Mesh::structured(32).unwrap();
    let params = ModelParams {
        lambda_theta_deg: 1.0,
        ..quiet_params()
    };
    let config = SchemeConfig {
        dt: 0.01,
        t_end: 1.0, // 100 steps
        ..SchemeConfig::default()
    };
    let stepper = Stepper::new(&mesh, params.clone(), config, HaptotaxisMode::Local, None)
        .unwrap();
    let mut initial = State::zeros(&mesh);
    initial.phi_m = NodalField::constant(mesh.n_nodes(), 1.0);
    initial.phi_sigma = NodalField::constant(mesh.n_nodes(), 1.0);
    initial.theta = FieldInit::Band {
        split: 0.0,
        below: 0.5,
        above: 1.0,
    }
    .evaluate(&mesh, &params);
    let theta0 = initial.theta.clone();
    let (state, _) = stepper.run(initial, |_, _, _| {}).unwrap();
    let decay = (-1.0f64).exp();
    let mut worst = 0.0f64;
    for i in 0..mesh.n_nodes() {
        worst = worst.max((state.theta[i] - theta0[i] * decay).abs());
    }
    assert!(worst <= 5e-3, "max |theta - theta0 e^-1| = {worst:e}");
    pass(
        2,
        "ECM closed-form oracle",
        format!("max nodal gap to theta0 e^-1 = {worst:.3e} <= 5e-3"),
    );
}

#[test]
fn criterion_3_energy_dissipation() {
    let mesh = Mesh::structured(64).unwrap();
    let params = ModelParams {
        mobility_const: Some(2.0 / 16.0),
        ..quiet_params()
    };
    let config = SchemeConfig {
        dt: 0.01,
        t_end: 2.0, // 200 steps
        tol: 1e-10,
        lin_tol: 1e-12,
        n_iter: 200,
        ..SchemeConfig::default()
    };
    let stepper = Stepper::new(&mesh, params.clone(), config, HaptotaxisMode::Local, None)
        .unwrap();
    let mut initial = State::zeros(&mesh);
    initial.phi_t = FieldInit::PerturbedUniform {
        base: 0.5,
        amplitude: 0.05,
        seed: 42,
        max_mode: 4,
    }
    .evaluate(&mesh, &params);
    let mut prev_energy = energy(&mesh, &initial.phi_t, &initial.phi_sigma, &params);
    let e0 = prev_energy;
    let mut worst_rise = f64::NEG_INFINITY;
    let (final_state, summary) = stepper
        .run(initial, |step, state, _| {
            if step > 0 {
                let e = energy(&mesh, &state.phi_t, &state.phi_sigma, &params);
                worst_rise = worst_rise.max(e - prev_energy);
                assert!(
                    e <= prev_energy + 1e-10,
                    "energy rose at step {step}: {prev_energy} -> {e}"
                );
                prev_energy = e;
            }
        })
        .unwrap();
    assert_eq!(summary.steps, 200);
    let e_end = energy(&mesh, &final_state.phi_t, &final_state.phi_sigma, &params);
    pass(
        3,
        "energy dissipation",
        format!("E: {e0:.6e} -> {e_end:.6e}, worst per-step rise {worst_rise:.2e} <= 1e-10"),
    );
}

#[test]
fn criterion_4_spatial_order() {
    let start = Instant::now();
    let params = ModelParams::default();
    let diffusivity = params.d_sigma / params.delta_sigma;
    let rows = manufactured_convergence_study(&[16, 32, 64], diffusivity, 1e-4, 0.02).unwrap();
    let elapsed = start.elapsed();
    let mut orders = Vec::new();
    for row in &rows {
        if let Some(order) = row.observed_order {
            assert!(
                order >= 1.9,
                "order {order} between n={} refinements",
                row.n_per_side
            );
            orders.push(order);
        }
    }
    assert_eq!(orders.len(), 2);
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    pass(
        4,
        "manufactured spatial order",
        format!(
            "L2 errors {:.3e}/{:.3e}/{:.3e}, orders {:.3}, {:.3}, {elapsed:.2?}",
            rows[0].l2_error, rows[1].l2_error, rows[2].l2_error, orders[0], orders[1]
        ),
    );
}

#[test]
fn criterion_5_kernel_consistency() {
    let mesh = Mesh::structured(64).unwrap();
    let eps = 16.0 * mesh.spacing(); // = 0.5
    let interior: Vec<usize> = (0..mesh.n_nodes())
        .filter(|&i| mesh.boundary_distance_inf(i) >= eps)
        .collect();
    assert!(!interior.is_empty());

    // constant field: the odd kernel cancels exactly away from the boundary
    let spec = KernelSpec::new(eps, OmegaMode::PaperDot).unwrap();
    let stencil = ConvolutionStencil::build(&mesh, &spec);
    let constant = NodalField::constant(mesh.n_nodes(), 1.0);
    let conv = stencil.apply(&constant).unwrap();
    let mut worst_const = 0.0f64;
    for &i in &interior {
        worst_const = worst_const.max(conv[i][0].abs()).max(conv[i][1].abs());
    }
    assert!(worst_const <= 1e-12, "|k*1| = {worst_const:e}");

    // linear fields: the gradient comes back scaled by the mode factor
    let mut ratio_ranges = Vec::new();
    for (mode, factor) in [
        (OmegaMode::PaperDot, 0.5),
        (OmegaMode::ComponentConsistent, 1.0),
    ] {
        let spec = KernelSpec::new(eps, mode).unwrap();
        let stencil = ConvolutionStencil::build(&mesh, &spec);
        for a in [[1.0, 0.0], [0.0, 1.0], [0.6, -0.8]] {
            let theta = NodalField::from_fn(&mesh, |p| a[0] * p[0] + a[1] * p[1]);
            let conv = stencil.apply(&theta).unwrap();
            let norm_sq = a[0] * a[0] + a[1] * a[1];
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &interior {
                let ratio = (conv[i][0] * a[0] + conv[i][1] * a[1]) / norm_sq;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
            assert!(
                lo >= 0.95 * factor && hi <= 1.05 * factor,
                "mode {mode:?}, a = {a:?}: ratios in [{lo}, {hi}] vs {factor} +- 5%"
            );
            ratio_ranges.push((mode, lo, hi));
        }
    }
    pass(
        5,
        "kernel consistency",
        format!(
            "|k*1| = {worst_const:.1e}; paper ratios [{:.4}, {:.4}] ~ 0.5, consistent ratios [{:.4}, {:.4}] ~ 1.0",
            ratio_ranges[0].1, ratio_ranges[0].2, ratio_ranges[3].1, ratio_ranges[3].2
        ),
    );
}

/// Shared reference-scenario march for criteria 6 and 7.
struct Scenario {
    max_gauss_seidel: usize,
    steps: usize,
    theta_monotone: bool,
    theta_nonnegative: bool,
    necrotic_monotone: bool,
    /// (t, tumor mass, mde mass, ecm total) per step.
    masses: Vec<(f64, f64, f64, f64)>,
    elapsed: Duration,
}

static SCENARIO: Lazy<Scenario> = Lazy::new(|| {
    let start = Instant::now();
    let mesh = Mesh::structured(64).unwrap();
    let params = ModelParams::default();
    let config = SchemeConfig {
        dt: 0.01,
        t_end: 15.0,
        tol: 1e-6,
        n_iter: 50,
        on_nonconverged: NonconvergedPolicy::Abort,
        ..SchemeConfig::default()
    };
    let stepper = Stepper::new(&mesh, params.clone(), config, HaptotaxisMode::Local, None)
        .unwrap();
    let initial = InitialConditions::default().evaluate(&mesh, &params);
    let mut prev_theta = initial.theta.clone();
    let mut prev_necrotic = initial.phi_n.clone();
    let mut scenario = Scenario {
        max_gauss_seidel: 0,
        steps: 0,
        theta_monotone: true,
        theta_nonnegative: true,
        necrotic_monotone: true,
        masses: vec![(
            0.0,
            field_mass(&mesh, &initial.phi_t),
            field_mass(&mesh, &initial.phi_m),
            field_mass(&mesh, &initial.theta),
        )],
        elapsed: Duration::ZERO,
    };
    let (_, summary) = stepper
        .run(initial, |step, state, report| {
            if step == 0 {
                return;
            }
            if let Some(report) = report {
                scenario.max_gauss_seidel =
                    scenario.max_gauss_seidel.max(report.gauss_seidel_iterations);
            }
            for i in 0..mesh.n_nodes() {
                // exact-to-rounding checks of the pointwise update laws
                if state.theta[i] > prev_theta[i] {
                    scenario.theta_monotone = false;
                }
                if state.theta[i] < 0.0 {
                    scenario.theta_nonnegative = false;
                }
                if state.phi_n[i] < prev_necrotic[i] {
                    scenario.necrotic_monotone = false;
                }
            }
            prev_theta = state.theta.clone();
            prev_necrotic = state.phi_n.clone();
            scenario.masses.push((
                state.t,
                field_mass(&mesh, &state.phi_t),
                field_mass(&mesh, &state.phi_m),
                field_mass(&mesh, &state.theta),
            ));
        })
        .expect("reference scenario must march to completion");
    scenario.steps = summary.steps;
    scenario.elapsed = start.elapsed();
    scenario
});

#[test]
fn criterion_6_monotonicity() {
    let s = &*SCENARIO;
    assert!(s.theta_monotone, "theta rose at some node");
    assert!(s.theta_nonnegative, "theta went negative");
    assert!(s.necrotic_monotone, "phi_N decreased at some node");
    pass(
        6,
        "pointwise monotonicity",
        format!(
            "theta nonincreasing and >= 0, phi_N nondecreasing over {} steps (exact)",
            s.steps
        ),
    );
}

#[test]
fn criterion_7_reference_scenario() {
    let s = &*SCENARIO;
    assert_eq!(s.steps, 1500);
    assert!(
        s.max_gauss_seidel <= 50,
        "Gauss-Seidel needed {} iterations",
        s.max_gauss_seidel
    );

    // tumor mass grows over [0, 5]
    let masses_to_5: Vec<_> = s.masses.iter().filter(|(t, ..)| *t <= 5.0 + 1e-9).collect();
    for pair in masses_to_5.windows(2) {
        assert!(
            pair[1].1 >= pair[0].1 - 1e-12,
            "tumor mass dropped at t = {}",
            pair[1].0
        );
    }
    let growth = masses_to_5.last().unwrap().1 - masses_to_5[0].1;
    assert!(growth > 0.0, "no net tumor growth over [0,5]");

    // ECM strictly erodes once enzyme is present
    let mut checked = 0usize;
    for pair in s.masses.windows(2) {
        if pair[0].2 > 1e-4 {
            assert!(
                pair[1].3 < pair[0].3,
                "ECM total did not drop at t = {} with enzyme mass {}",
                pair[1].0,
                pair[0].2
            );
            checked += 1;
        }
    }
    assert!(checked > 0, "the enzyme never exceeded 1e-4");
    assert!(
        s.elapsed < Duration::from_secs(600),
        "took {:?}",
        s.elapsed
    );
    pass(
        7,
        "reference scenario end-to-end",
        format!(
            "1500 steps, max GS iterations {}, tumor mass +{growth:.4} over [0,5], ECM strictly decreasing on {checked} steps, {:.1?}",
            s.max_gauss_seidel, s.elapsed
        ),
    );
}

#[test]
fn criterion_8_local_nonlocal_coherence() {
    // relative L2 difference between the local and nonlocal fluxes over
    // interior quadrature points, component-consistent normalization,
    // at fixed eps/h
    let diff_at = |n: usize, eps: f64| -> f64 {
        let mesh = Mesh::structured(n).unwrap();
        let params = ModelParams::default();
        let theta = NodalField::from_fn(&mesh, |p| {
            1.0 + 0.5 * (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).cos()
        });
        let phi_t = NodalField::constant(mesh.n_nodes(), 1.0);
        let phi_n = NodalField::zeros(mesh.n_nodes());
        let spec = KernelSpec::new(eps, OmegaMode::ComponentConsistent).unwrap();
        let stencil = ConvolutionStencil::build(&mesh, &spec);
        let local =
            adhesion_flux(HaptotaxisMode::Local, &mesh, &theta, &params, None).unwrap();
        let nonlocal =
            adhesion_flux(HaptotaxisMode::Nonlocal, &mesh, &theta, &params, Some(&stencil))
                .unwrap();
        let margin = eps + 2.0 * mesh.spacing();
        let mut num = 0.0;
        let mut den = 0.0;
        tumorfield::fem::for_each_quad_point(&mesh, |w, qp| {
            let dist = (1.0 - qp.xy[0].abs()).min(1.0 - qp.xy[1].abs());
            if dist < margin {
                return;
            }
            let jl = local.eval(&qp, &phi_t, &phi_n);
            let jn = nonlocal.eval(&qp, &phi_t, &phi_n);
            num += w * ((jl[0] - jn[0]).powi(2) + (jl[1] - jn[1]).powi(2));
            den += w * (jl[0] * jl[0] + jl[1] * jl[1]);
        });
        (num / den).sqrt()
    };

    let d_coarse = diff_at(128, 0.055);
    let d_fine = diff_at(256, 0.0275);
    assert!(d_fine <= 0.10, "relative difference {d_fine} at eps = 0.0275");
    assert!(
        d_fine < d_coarse,
        "difference did not shrink: {d_coarse} -> {d_fine}"
    );
    pass(
        8,
        "local/nonlocal coherence",
        format!("relative L2 difference {d_coarse:.4} (eps 0.055) -> {d_fine:.4} (eps 0.0275) <= 0.10"),
    );
}
