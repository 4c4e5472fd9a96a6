//! Command-line front end for the experiment harness. All logic lives in
//! the library; this binary only merges flags over an optional JSON config
//! and dispatches.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ampse::experiment::{self, ExperimentConfig, ExperimentKind, SolverKind};
use ampse::rbp::ScheduleKind;

#[derive(Parser)]
#[command(
    name = "ampse",
    version,
    about = "Message-passing experiments for compressed sensing with non-zero-mean matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stability eigenvalue profiles along the Nishimori line.
    EigenProfile(CommonArgs),
    /// Critical matrix-mean thresholds as a function of sparsity.
    ThresholdCurve(CommonArgs),
    /// AMP success fraction over an (N, gamma) grid.
    SuccessSweep(CommonArgs),
    /// Parallel AMP vs damped AMP vs random-sequential r-BP.
    ScheduleCompare(CommonArgs),
    /// One instance, one solver, full per-iteration trace.
    Single(CommonArgs),
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::EigenProfile(_) => ExperimentKind::EigenProfile,
            Command::ThresholdCurve(_) => ExperimentKind::ThresholdCurve,
            Command::SuccessSweep(_) => ExperimentKind::SuccessSweep,
            Command::ScheduleCompare(_) => ExperimentKind::ScheduleCompare,
            Command::Single(_) => ExperimentKind::Single,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::EigenProfile(a)
            | Command::ThresholdCurve(a)
            | Command::SuccessSweep(a)
            | Command::ScheduleCompare(a)
            | Command::Single(a) => a,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Sparsity (fraction of non-zero signal entries).
    #[arg(long)]
    rho: Option<f64>,

    /// Undersampling ratio M/N.
    #[arg(long)]
    alpha: Option<f64>,

    /// Measurement-noise variance.
    #[arg(long)]
    delta: Option<f64>,

    /// Matrix mean parameter (single runs).
    #[arg(long)]
    gamma: Option<f64>,

    /// Comma-separated gamma grid, e.g. "0,0.5,1.0".
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,

    /// Comma-separated sparsity grid (threshold curve).
    #[arg(long, value_delimiter = ',')]
    rho_grid: Option<Vec<f64>>,

    /// Signal size; a comma-separated list sweeps over sizes.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,

    /// Trials per parameter point.
    #[arg(long)]
    trials: Option<usize>,

    /// Base seed; instance seeds follow the documented rule
    /// base_seed + trial + 1000003 * param_index.
    #[arg(long)]
    seed: Option<u64>,

    /// Damping factor in [0, 1) for AMP (and the damped comparison arm).
    #[arg(long)]
    damping: Option<f64>,

    /// Iteration/sweep cap.
    #[arg(long)]
    max_iter: Option<usize>,

    /// Convergence tolerance on the mean absolute estimate change.
    #[arg(long)]
    tol: Option<f64>,

    /// Success threshold on the final MSE.
    #[arg(long)]
    success_mse: Option<f64>,

    /// Message schedule for r-BP: parallel | random-sequential.
    #[arg(long)]
    schedule: Option<String>,

    /// Solver for `single`: amp | rbp.
    #[arg(long)]
    solver: Option<String>,

    /// Gauss-Legendre order per quadrature panel (state evolution).
    #[arg(long)]
    quad_nodes: Option<usize>,

    /// Re-check evolution integrals at doubled resolution; warn on drift.
    #[arg(long)]
    refine: bool,

    /// Also emit the matching state-evolution trajectory (single runs).
    #[arg(long)]
    se_overlay: bool,

    /// Output directory for CSV/JSON artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Worker threads (overrides the AMPSE_WORKERS environment variable).
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_schedule(text: &str) -> ampse::Result<ScheduleKind> {
    match text {
        "parallel" => Ok(ScheduleKind::Parallel),
        "random-sequential" | "random_sequential" | "sequential" => {
            Ok(ScheduleKind::RandomSequential)
        }
        other => Err(ampse::Error::InvalidInput(format!(
            "unknown schedule '{other}' (expected parallel | random-sequential)"
        ))),
    }
}

fn parse_solver(text: &str) -> ampse::Result<SolverKind> {
    match text {
        "amp" => Ok(SolverKind::Amp),
        "rbp" => Ok(SolverKind::Rbp),
        other => Err(ampse::Error::InvalidInput(format!(
            "unknown solver '{other}' (expected amp | rbp)"
        ))),
    }
}

fn build_config(kind: ExperimentKind, args: &CommonArgs) -> ampse::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::for_experiment(kind),
    };
    cfg.experiment = kind;

    if let Some(v) = args.rho {
        cfg.rho = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.delta {
        cfg.delta = Some(v);
    }
    if let Some(v) = args.gamma {
        cfg.gamma = Some(v);
    }
    if let Some(v) = &args.gamma_grid {
        cfg.gamma_grid = Some(v.clone());
    }
    if let Some(v) = &args.rho_grid {
        cfg.rho_grid = Some(v.clone());
    }
    if let Some(list) = &args.n {
        if list.len() == 1 {
            cfg.n = Some(list[0]);
        }
        cfg.n_list = Some(list.clone());
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = args.damping {
        cfg.damping = v;
    }
    if let Some(v) = args.max_iter {
        cfg.max_iter = v;
    }
    if let Some(v) = args.tol {
        cfg.tol = v;
    }
    if let Some(v) = args.success_mse {
        cfg.success_mse = v;
    }
    if let Some(text) = &args.schedule {
        cfg.schedule = parse_schedule(text)?;
    }
    if let Some(text) = &args.solver {
        cfg.solver = parse_solver(text)?;
    }
    if let Some(v) = args.quad_nodes {
        cfg.quad_nodes = v;
    }
    if args.refine {
        cfg.refine = true;
    }
    if args.se_overlay {
        cfg.se_overlay = true;
    }
    if let Some(v) = &args.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = args.workers {
        cfg.workers = Some(v);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> ampse::Result<()> {
    let kind = cli.command.kind();
    let cfg = build_config(kind, cli.command.args())?;
    let out = cfg.out_dir.display().to_string();
    match kind {
        ExperimentKind::EigenProfile => {
            let reports = experiment::run_eigen_profile(&cfg)?;
            for r in &reports {
                println!(
                    "gamma = {:<5} sup|lambda_D| = {:.4}  fp|lambda_D| = {:.4}  regime = {:?}",
                    r.gamma, r.sup_abs_lambda_d, r.fixed_point_abs_lambda_d, r.regime
                );
            }
            println!("wrote eigen_profile.csv / eigen_profile.json to {out}");
        }
        ExperimentKind::ThresholdCurve => {
            let rows = experiment::run_threshold_curve(&cfg)?;
            for (rho, g1, g2) in &rows {
                println!("rho = {rho:<5} gamma_c1 = {g1:.4}  gamma_c2 = {g2:.4}");
            }
            println!("wrote threshold_curve.csv / threshold_curve.json to {out}");
        }
        ExperimentKind::SuccessSweep => {
            let result = experiment::run_success_sweep(&cfg)?;
            for r in &result.rows {
                println!(
                    "N = {:<6} gamma = {:<5} success = {}/{} ({:.2} +- {:.2})",
                    r.n, r.gamma, r.successes, r.trials, r.fraction, r.stderr
                );
            }
            println!("wrote success_sweep.csv / success_sweep.json to {out}");
        }
        ExperimentKind::ScheduleCompare => {
            let rows = experiment::run_schedule_compare(&cfg)?;
            for r in &rows {
                println!(
                    "gamma = {:<5} {:<16} {:?} in {} sweeps (final mse {:.3e})",
                    r.gamma, r.scheme, r.status, r.sweeps, r.final_mse
                );
            }
            println!("wrote schedule_compare.csv / schedule_compare.json to {out}");
        }
        ExperimentKind::Single => {
            let summary = experiment::run_single(&cfg)?;
            println!(
                "status = {:?} after {} iterations; final E = {:.3e}, Vbar = {:.3e}, D = {:+.3e}",
                summary.status,
                summary.iterations,
                summary.final_e,
                summary.final_v_bar,
                summary.final_d
            );
            println!("wrote trace.csv / run.json to {out}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
