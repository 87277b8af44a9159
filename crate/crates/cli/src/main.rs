//! Command-line front end: `simulate`, `kernel-check`, `convergence` and
//! `ecm-oracle`. Exit codes: 0 success, 1 validation/usage failure,
//! 2 solver failure.

mod config;
mod vtk;

use clap::{Parser, Subcommand, ValueEnum};
use config::{ConfigError, OutputFormat, RunConfig};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tumorfield::diagnostics::{self, ecm_closed_form, summarize};
use tumorfield::fem::NodalField;
use tumorfield::mesh::Mesh;
use tumorfield::nonlocal::{
    gradient_factor, ConvolutionStencil, HaptotaxisMode, KernelSpec, OmegaMode,
};
use tumorfield::stepper::{NonconvergedPolicy, StepError, Stepper};

/// Output directory override honored when no --output-dir flag is given.
const OUTPUT_DIR_ENV: &str = "TUMORFIELD_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "tumorfield",
    version,
    about = "Phase-field tumor growth with ECM degradation and haptotaxis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Loc,
    Nonloc,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Abort,
    Accept,
}

#[derive(Clone, Copy, ValueEnum)]
enum OmegaArg {
    /// Dot-moment normalization (gradient factor 1/2).
    Paper,
    /// Per-component normalization (gradient factor 1).
    Consistent,
}

impl From<OmegaArg> for OmegaMode {
    fn from(arg: OmegaArg) -> OmegaMode {
        match arg {
            OmegaArg::Paper => OmegaMode::PaperDot,
            OmegaArg::Consistent => OmegaMode::ComponentConsistent,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation from a configuration file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the haptotaxis mode from the configuration.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Override the policy for steps whose inner loop hits the cap.
        #[arg(long, value_enum)]
        on_nonconverged: Option<PolicyArg>,
        /// Override the output directory (takes precedence over the
        /// TUMORFIELD_OUTPUT_DIR environment variable and the config).
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Compare the discrete kernel convolution against scaled gradients.
    KernelCheck {
        #[arg(long)]
        eps: f64,
        /// Mesh cells per side.
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "paper")]
        omega: OmegaArg,
    },
    /// Manufactured-solution convergence study of the nutrient subproblem.
    Convergence {
        /// Number of dyadic refinements starting from n = 16.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Run a simulation and report the gap between the discrete ECM density
    /// and its closed-form representation.
    EcmOracle {
        #[arg(long)]
        config: PathBuf,
    },
}

enum CliError {
    Validation(String),
    Solver(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::Validation(e.to_string())
    }
}

impl From<StepError> for CliError {
    fn from(e: StepError) -> CliError {
        CliError::Solver(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Validation(format!("i/o failure: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not failures
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Simulate {
            config,
            mode,
            on_nonconverged,
            output_dir,
        } => simulate(config, mode, on_nonconverged, output_dir),
        Command::KernelCheck { eps, n, omega } => kernel_check(eps, n, omega.into()),
        Command::Convergence { levels } => convergence(levels),
        Command::EcmOracle { config } => ecm_oracle(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(
    path: &Path,
    mode: Option<ModeArg>,
    policy: Option<PolicyArg>,
    output_dir: Option<PathBuf>,
) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::from_file(path)?;
    if let Some(mode) = mode {
        config.haptotaxis.mode = match mode {
            ModeArg::Loc => HaptotaxisMode::Local,
            ModeArg::Nonloc => HaptotaxisMode::Nonlocal,
        };
    }
    if let Some(policy) = policy {
        config.scheme.on_nonconverged = match policy {
            PolicyArg::Abort => NonconvergedPolicy::Abort,
            PolicyArg::Accept => NonconvergedPolicy::Accept,
        };
    }
    if let Some(dir) = output_dir {
        config.output.directory = dir;
    } else if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            config.output.directory = PathBuf::from(dir);
        }
    }
    config.validate()?;
    Ok(config)
}

fn simulate(
    path: PathBuf,
    mode: Option<ModeArg>,
    policy: Option<PolicyArg>,
    output_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    let config = load_config(&path, mode, policy, output_dir)?;
    let out_dir = config.output.directory.clone();
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("config.resolved.toml"), config.to_toml())?;

    let mesh = Mesh::structured(config.mesh.n_per_side)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let stepper = Stepper::new(
        &mesh,
        config.model.clone(),
        config.scheme_config(),
        config.haptotaxis.mode,
        config.kernel_spec()?,
    )?;
    let initial = config.initial.evaluate(&mesh, &config.model);

    let want_vtk = config.output.formats.contains(&OutputFormat::Vtk);
    let want_csv = config.output.formats.contains(&OutputFormat::Csv);
    let every = config.output.every;
    let total_steps = (config.scheme.t_end / config.scheme.dt).round() as usize;

    let mut csv = if want_csv {
        let file = std::fs::File::create(out_dir.join("diagnostics.csv"))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "{}", diagnostics::CSV_HEADER)?;
        Some(w)
    } else {
        None
    };
    let mut io_failure: Option<std::io::Error> = None;
    let (final_state, summary) = stepper.run(initial, |step, state, report| {
        if io_failure.is_some() {
            return;
        }
        let last = step == total_steps;
        if step % every != 0 && !last {
            return;
        }
        let gs = report.map(|r| r.gauss_seidel_iterations).unwrap_or(0);
        if let Some(w) = csv.as_mut() {
            let row = summarize(state, &mesh, &config.model, gs);
            if let Err(e) = writeln!(w, "{}", row.to_csv_row()) {
                io_failure = Some(e);
                return;
            }
        }
        if want_vtk {
            let path = out_dir.join(format!("state_{step:06}.vtk"));
            if let Err(e) = vtk::write_vtk(state, &mesh, &path) {
                io_failure = Some(e);
            }
        }
    })?;
    if let Some(e) = io_failure {
        return Err(e.into());
    }
    if let Some(mut w) = csv {
        w.flush().map_err(CliError::from)?;
    }
    println!(
        "simulate: {} steps to t = {}, max Gauss-Seidel iterations {}, {} nonconverged, outputs in {}",
        summary.steps,
        final_state.t,
        summary.max_gauss_seidel_iterations,
        summary.nonconverged_steps,
        out_dir.display()
    );
    Ok(())
}

fn kernel_check(eps: f64, n: usize, omega: OmegaMode) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Validation("--n must be at least 1".into()));
    }
    let mesh = Mesh::structured(n).map_err(|e| CliError::Validation(e.to_string()))?;
    let spec = KernelSpec::new(eps, omega).map_err(|e| CliError::Validation(e.to_string()))?;
    let h = mesh.spacing();
    let factor = gradient_factor(omega);
    println!(
        "kernel check: eps = {eps}, n = {n} (h = {h:.5}, eps/h = {:.2}), omega = {:.6e} ({:?}), expected gradient factor {factor}",
        eps / h,
        spec.omega,
        omega
    );
    if eps < 4.0 * h {
        println!(
            "warning: eps < 4h; the nodal quadrature under-resolves the kernel support and the measured factor will be far from {factor}"
        );
    }
    let stencil = ConvolutionStencil::build(&mesh, &spec);
    let interior: Vec<usize> = (0..mesh.n_nodes())
        .filter(|&i| mesh.boundary_distance_inf(i) >= eps)
        .collect();
    if interior.is_empty() {
        return Err(CliError::Validation(
            "no interior nodes at distance >= eps; decrease eps or refine".into(),
        ));
    }

    println!("{:<22}{:<26}{:>14}{:>14}", "field", "metric", "value", "target");
    let constant = NodalField::constant(mesh.n_nodes(), 1.0);
    let conv = stencil
        .apply(&constant)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let worst = interior
        .iter()
        .map(|&i| conv[i][0].abs().max(conv[i][1].abs()))
        .fold(0.0f64, f64::max);
    println!("{:<22}{:<26}{:>14.3e}{:>14}", "constant", "max |k*theta|", worst, "0");

    for (name, a) in [("linear x1", [1.0, 0.0]), ("linear x2", [0.0, 1.0])] {
        let theta = NodalField::from_fn(&mesh, |p| a[0] * p[0] + a[1] * p[1]);
        let conv = stencil
            .apply(&theta)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        let ratios: Vec<f64> = interior
            .iter()
            .map(|&i| conv[i][0] * a[0] + conv[i][1] * a[1])
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let dev = ratios
            .iter()
            .map(|r| (r - factor).abs())
            .fold(0.0f64, f64::max);
        println!(
            "{:<22}{:<26}{:>14.6}{:>14}",
            name, "mean ratio conv/grad", mean, factor
        );
        println!(
            "{:<22}{:<26}{:>14.3e}{:>14}",
            name, "max |ratio - target|", dev, "0"
        );
    }

    let pi = std::f64::consts::PI;
    let theta = NodalField::from_fn(&mesh, |p| (pi * p[0]).sin() * (pi * p[1]).cos());
    let conv = stencil
        .apply(&theta)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for i in 0..mesh.n_nodes() {
        if mesh.boundary_distance_inf(i) >= 2.0 * eps {
            let [x, y] = mesh.node(i);
            let gx = pi * (pi * x).cos() * (pi * y).cos();
            let gy = -pi * (pi * x).sin() * (pi * y).sin();
            worst = worst
                .max((conv[i][0] - factor * gx).abs())
                .max((conv[i][1] - factor * gy).abs());
            count += 1;
        }
    }
    if count > 0 {
        println!(
            "{:<22}{:<26}{:>14.3e}{:>14}",
            "sin(pi x1)cos(pi x2)", "max |k*theta - c grad|", worst, "-> 0"
        );
    }
    Ok(())
}

fn convergence(levels: usize) -> Result<(), CliError> {
    if levels < 3 {
        return Err(CliError::Validation(
            "--levels must be at least 3 for two observed orders".into(),
        ));
    }
    let resolutions: Vec<usize> = (0..levels).map(|i| 16usize << i).collect();
    let params = tumorfield::model::ModelParams::default();
    let rows = diagnostics::manufactured_convergence_study(
        &resolutions,
        params.d_sigma / params.delta_sigma,
        1e-4,
        0.02,
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;
    println!("{:>6}{:>12}{:>16}{:>10}", "n", "h", "L2 error", "order");
    for row in rows {
        match row.observed_order {
            Some(order) => println!(
                "{:>6}{:>12.5}{:>16.6e}{:>10.3}",
                row.n_per_side, row.h, row.l2_error, order
            ),
            None => println!(
                "{:>6}{:>12.5}{:>16.6e}{:>10}",
                row.n_per_side, row.h, row.l2_error, "-"
            ),
        }
    }
    Ok(())
}

fn ecm_oracle(path: PathBuf) -> Result<(), CliError> {
    let config = load_config(&path, None, None, None)?;
    let mesh = Mesh::structured(config.mesh.n_per_side)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let stepper = Stepper::new(
        &mesh,
        config.model.clone(),
        config.scheme_config(),
        config.haptotaxis.mode,
        config.kernel_spec()?,
    )?;
    let initial = config.initial.evaluate(&mesh, &config.model);
    let theta0 = initial.theta.clone();
    let mut history = vec![(0.0, initial.phi_m.clone())];
    let (final_state, summary) = stepper.run(initial, |step, state, _| {
        if step > 0 {
            history.push((state.t, state.phi_m.clone()));
        }
    })?;
    let oracle = ecm_closed_form(
        &theta0,
        &history,
        config.model.lambda_theta_deg,
        final_state.t,
    )
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let gap = final_state.theta.max_abs_diff(&oracle);
    println!(
        "ecm oracle: {} steps to t = {}, max |theta_discrete - theta_closed_form| = {gap:.6e} (O(dt) bound ~ {:.1e})",
        summary.steps,
        final_state.t,
        2.0 * config.scheme.dt * config.model.lambda_theta_deg * final_state.t.max(1.0)
    );
    Ok(())
}
