//! Command-line front end: `simulate`, `oracle`, `local`, and `sobol`
//! subcommands over a model file, all emitting reproducible CSV.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cme;
use crate::csvout::{self, CsvMeta};
use crate::integrate::uniform_grid;
use crate::local;
use crate::model::{parse_model, ReactionNetwork};
use crate::moments::{build_moment_system, simulate};
use crate::sobol;

#[derive(Debug, Parser)]
#[command(
    name = "momsens",
    version,
    about = "Moment-closure simulation and sensitivity analysis for mass-action reaction networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the closed moment ODEs and write the trajectories.
    Simulate(RunArgs),
    /// Solve the truncated master equation and diff it against the closure.
    Oracle(RunArgs),
    /// Perturbation sweep plus normalized forward-difference sensitivities.
    Local(RunArgs),
    /// Time-resolved first-order and total Sobol' indices.
    Sobol(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Martinez,
    Jansen,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Model file describing species, parameters, and reactions.
    model: PathBuf,

    /// Simulation horizon in seconds.
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,

    /// Number of uniformly spaced output times (including t=0).
    #[arg(long, default_value_t = 101)]
    points: usize,

    /// Relative integration tolerance.
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,

    /// Absolute integration tolerance.
    #[arg(long, default_value_t = 1e-10)]
    abs_tol: f64,

    /// Relative factor for the one-at-a-time perturbation sweep.
    #[arg(long, default_value_t = 0.20)]
    perturb: f64,

    /// Relative step for forward-difference sensitivities.
    #[arg(long, default_value_t = 1e-8)]
    fd_step: f64,

    /// Sample count per pick-and-freeze matrix.
    #[arg(long, default_value_t = 15000)]
    n: usize,

    /// Seed for the sampling generator.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Sobol' index estimator.
    #[arg(long, value_enum, default_value_t = EstimatorArg::Martinez)]
    estimator: EstimatorArg,

    /// Per-species truncation bound for the master-equation oracle
    /// (default: 8x the total initial molecule count).
    #[arg(long)]
    bound: Option<u64>,

    /// Pin all cross-covariances to zero.
    #[arg(long)]
    diagonal_covariance: bool,

    /// Species whose mean and variance `local` and `sobol` report
    /// (default: the first declared species).
    #[arg(long)]
    species: Option<String>,

    /// Output CSV path (default: <model-stem>_<command>.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses arguments, runs the requested command, and returns the process
/// exit code. Runtime failures print a single `error: ...` line.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let args: Vec<String> = args.into_iter().collect();
    configure_threads();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let invocation = args[1..].join(" ");
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, &invocation),
        Command::Oracle(a) => cmd_oracle(&a, &invocation),
        Command::Local(a) => cmd_local(&a, &invocation),
        Command::Sobol(a) => cmd_sobol(&a, &invocation),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Caps the worker pool at MOMSENS_THREADS when set. Results never depend
/// on the worker count, only wall time does.
fn configure_threads() {
    if let Ok(v) = std::env::var("MOMSENS_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("warning: ignoring invalid MOMSENS_THREADS value '{v}'"),
        }
    }
}

struct Prepared {
    network: ReactionNetwork,
    grid: Vec<f64>,
    model_sha256: String,
    target: usize,
}

fn prepare(a: &RunArgs) -> anyhow::Result<Prepared> {
    let bytes = std::fs::read(&a.model).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            anyhow::anyhow!("file not found: {}", a.model.display())
        } else {
            anyhow::Error::new(e).context(format!("cannot read {}", a.model.display()))
        }
    })?;
    let text = String::from_utf8(bytes.clone())
        .with_context(|| format!("{} is not valid UTF-8", a.model.display()))?;
    let network = parse_model(&text)
        .with_context(|| format!("cannot parse {}", a.model.display()))?;
    if !(a.t_end > 0.0) || !a.t_end.is_finite() {
        bail!("--t-end must be positive, got {}", a.t_end);
    }
    if a.points < 2 {
        bail!("--points must be at least 2, got {}", a.points);
    }
    let target = match &a.species {
        Some(name) => network
            .species_index(name)
            .with_context(|| format!("unknown species '{name}'"))?,
        None => 0,
    };
    Ok(Prepared {
        network,
        grid: uniform_grid(0.0, a.t_end, a.points),
        model_sha256: csvout::sha256_hex(&bytes),
        target,
    })
}

fn meta(a: &RunArgs, prep: &Prepared, invocation: &str, config: Vec<(String, String)>) -> CsvMeta {
    CsvMeta {
        command: invocation.to_string(),
        model_path: a.model.display().to_string(),
        model_sha256: prep.model_sha256.clone(),
        config,
    }
}

fn base_config(a: &RunArgs) -> Vec<(String, String)> {
    vec![
        ("t_end".to_string(), a.t_end.to_string()),
        ("points".to_string(), a.points.to_string()),
        ("rel_tol".to_string(), a.rel_tol.to_string()),
        ("abs_tol".to_string(), a.abs_tol.to_string()),
        (
            "diagonal_covariance".to_string(),
            a.diagonal_covariance.to_string(),
        ),
    ]
}

fn default_out(a: &RunArgs, command: &str) -> PathBuf {
    match &a.out {
        Some(p) => p.clone(),
        None => {
            let stem = a
                .model
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".to_string());
            PathBuf::from(format!("{stem}_{command}.csv"))
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_simulate(a: &RunArgs, invocation: &str) -> anyhow::Result<()> {
    let prep = prepare(a)?;
    let traj = simulate(
        &prep.network,
        &prep.network.nominal_point(),
        &prep.grid,
        a.rel_tol,
        a.abs_tol,
        a.diagonal_covariance,
    )?;
    if traj.negative_variance {
        eprintln!("warning: a variance component went negative; values are reported as computed");
    }
    let labels = build_moment_system(&prep.network, a.diagonal_covariance).output_labels();
    let text = csvout::simulate_csv(&meta(a, &prep, invocation, base_config(a)), &labels, &traj);
    write_file(&default_out(a, "simulate"), &text)
}

fn cmd_oracle(a: &RunArgs, invocation: &str) -> anyhow::Result<()> {
    let prep = prepare(a)?;
    let bound = match a.bound {
        Some(b) => vec![b; prep.network.num_species()],
        None => cme::default_bound(&prep.network),
    };
    let point = prep.network.nominal_point();
    let closure = simulate(
        &prep.network,
        &point,
        &prep.grid,
        a.rel_tol,
        a.abs_tol,
        a.diagonal_covariance,
    )?;
    let oracle = cme::oracle_moments(&prep.network, &point, &prep.grid, &bound)?;
    if oracle.residual_mass.abs() > 1e-6 {
        eprintln!(
            "warning: truncation lost {:.3e} probability mass; consider raising --bound",
            oracle.residual_mass
        );
    }
    let mut config = base_config(a);
    config.push(("bound".to_string(), bound[0].to_string()));
    config.push(("states".to_string(), oracle.num_states.to_string()));
    config.push((
        "residual_mass".to_string(),
        csvout::format_value(oracle.residual_mass),
    ));
    let labels = build_moment_system(&prep.network, a.diagonal_covariance).output_labels();
    let text = csvout::oracle_csv(&meta(a, &prep, invocation, config), &labels, &oracle, &closure);
    write_file(&default_out(a, "oracle"), &text)
}

fn cmd_local(a: &RunArgs, invocation: &str) -> anyhow::Result<()> {
    let prep = prepare(a)?;
    if !(a.fd_step > 0.0) || !a.fd_step.is_finite() {
        bail!("--fd-step must be positive, got {}", a.fd_step);
    }
    let point = prep.network.nominal_point();
    let system = build_moment_system(&prep.network, a.diagonal_covariance);
    let selection = [
        system.mean_index(prep.target),
        system.cov_index(prep.target, prep.target),
    ];
    let report = local::local_sensitivity(
        &prep.network,
        &point,
        a.fd_step,
        &prep.grid,
        a.diagonal_covariance,
        None,
        None,
    )?;
    let sweep = local::perturbation_sweep(
        &prep.network,
        &point,
        a.perturb,
        &prep.grid,
        a.rel_tol,
        a.abs_tol,
        a.diagonal_covariance,
    )?;

    let mut config = base_config(a);
    config.push(("fd_step".to_string(), a.fd_step.to_string()));
    config.push(("perturb".to_string(), a.perturb.to_string()));
    config.push((
        "species".to_string(),
        prep.network.species()[prep.target].name.clone(),
    ));
    let m = meta(a, &prep, invocation, config);
    let out = default_out(a, "local");
    write_file(&out, &csvout::local_csv(&m, &report, &selection))?;
    let sweep_text = csvout::sweep_csv(&m, &sweep, &selection, &system.output_labels());
    write_file(&with_suffix(&out, "_sweep"), &sweep_text)
}

fn cmd_sobol(a: &RunArgs, invocation: &str) -> anyhow::Result<()> {
    let prep = prepare(a)?;
    let pbox = sobol::ParameterBox::from_network(&prep.network)?;
    let design = sobol::sample_design(&pbox, a.n, a.seed)?;
    let system = build_moment_system(&prep.network, a.diagonal_covariance);
    let selection = [
        system.mean_index(prep.target),
        system.cov_index(prep.target, prep.target),
    ];
    let eval = sobol::evaluate_design(
        &design,
        &prep.network,
        &sobol::EvalOptions {
            grid: &prep.grid,
            rel_tol: a.rel_tol,
            abs_tol: a.abs_tol,
            diagonal_covariance: a.diagonal_covariance,
            selection: Some(&selection),
        },
    )?;
    if eval.failed_rows > 0 {
        eprintln!(
            "warning: {} design rows failed and were excluded pairwise",
            eval.failed_rows
        );
    }
    let report = match a.estimator {
        EstimatorArg::Martinez => sobol::martinez_indices(&eval),
        EstimatorArg::Jansen => sobol::jansen_indices(&eval),
    };
    let mut config = base_config(a);
    config.push(("n".to_string(), a.n.to_string()));
    config.push(("seed".to_string(), a.seed.to_string()));
    config.push(("estimator".to_string(), report.estimator.to_string()));
    config.push((
        "species".to_string(),
        prep.network.species()[prep.target].name.clone(),
    ));
    let text = csvout::sobol_csv(&meta(a, &prep, invocation, config), &report);
    write_file(&default_out(a, "sobol"), &text)
}
