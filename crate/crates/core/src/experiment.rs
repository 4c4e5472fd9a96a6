//! Reproducible experiment harness: parameter sweeps over the solvers and
//! the state evolution, emitting plot-ready CSV files with JSON sidecars.
//!
//! Reproducibility contract: every instance seed is derived from the
//! configured `base_seed` by the fixed rule
//!
//! `instance_seed = base_seed + trial_index + 1_000_003 * param_index`
//!
//! where `param_index` enumerates the sweep's parameter combinations in
//! row-major declaration order (e.g. `n_index * len(gamma_grid) +
//! gamma_index` for the success sweep). Trials therefore parallelize freely:
//! results are keyed by index and aggregation is order-independent.
//!
//! Worker-count resolution: explicit config/flag value, else the
//! `AMPSE_WORKERS` environment variable, else one thread per core.

use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::amp::{self, AmpConfig, AmpTrace, SolverStatus};
use crate::denoiser::Prior;
use crate::error::{Error, Result};
use crate::evolution::{
    se_run, se_step_refine_error, stability_profile, QuadratureSpec, SeParams, SeState,
    StabilityReport,
};
use crate::instance::ProblemInstance;
use crate::rbp::{self, Schedule, ScheduleKind};

/// Version tag written into every JSON sidecar and guarded by golden tests.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "AMPSE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    EigenProfile,
    ThresholdCurve,
    SuccessSweep,
    ScheduleCompare,
    Single,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::EigenProfile => "eigen-profile",
            ExperimentKind::ThresholdCurve => "threshold-curve",
            ExperimentKind::SuccessSweep => "success-sweep",
            ExperimentKind::ScheduleCompare => "schedule-compare",
            ExperimentKind::Single => "single",
        }
    }
}

/// Which solver a `single` run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Amp,
    Rbp,
}

/// One experiment specification. Unset fields fall back to per-experiment
/// defaults (see the `resolved_*` accessors); a JSON config file carries the
/// same fields, and command-line flags win over the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub rho: f64,
    pub alpha: f64,
    /// Measurement-noise variance; defaults to 1e-10, except the threshold
    /// curve which is computed at exactly zero noise.
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_grid: Option<Vec<f64>>,
    pub rho_grid: Option<Vec<f64>>,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub trials: usize,
    pub base_seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub damping: f64,
    pub success_mse: f64,
    pub solver: SolverKind,
    pub schedule: ScheduleKind,
    pub quad_nodes: usize,
    pub refine: bool,
    pub se_overlay: bool,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Single,
            rho: 0.1,
            alpha: 0.3,
            delta: None,
            gamma: None,
            gamma_grid: None,
            rho_grid: None,
            n: None,
            n_list: None,
            trials: 50,
            base_seed: 1,
            max_iter: 1000,
            tol: 1e-8,
            damping: 0.0,
            success_mse: 1e-6,
            solver: SolverKind::Amp,
            schedule: ScheduleKind::Parallel,
            quad_nodes: QuadratureSpec::default().nodes,
            refine: false,
            se_overlay: false,
            out_dir: PathBuf::from("out"),
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(kind: ExperimentKind) -> Self {
        Self {
            experiment: kind,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must lie in [0, 1]"));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(Error::invalid("alpha must be positive"));
        }
        if let Some(d) = self.delta {
            if d.is_nan() || d < 0.0 {
                return Err(Error::invalid("delta must be nonnegative"));
            }
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if let Some(grid) = &self.gamma_grid {
            if grid.is_empty() {
                return Err(Error::invalid("gamma grid must be non-empty"));
            }
        }
        if let Some(grid) = &self.rho_grid {
            if grid.is_empty() {
                return Err(Error::invalid("rho grid must be non-empty"));
            }
        }
        if let Some(list) = &self.n_list {
            if list.is_empty() || list.contains(&0) {
                return Err(Error::invalid("signal-size list must be non-empty and positive"));
            }
        }
        self.solver_config().validate()?;
        self.quad().validate()
    }

    pub fn resolved_delta(&self) -> f64 {
        self.delta.unwrap_or(match self.experiment {
            ExperimentKind::ThresholdCurve => 0.0,
            _ => 1e-10,
        })
    }

    pub fn resolved_gamma(&self) -> f64 {
        self.gamma.unwrap_or(0.0)
    }

    pub fn resolved_gamma_grid(&self) -> Vec<f64> {
        if let Some(grid) = &self.gamma_grid {
            return grid.clone();
        }
        match self.experiment {
            ExperimentKind::EigenProfile => vec![1.9, 2.5, 2.9, 3.6],
            ExperimentKind::ScheduleCompare => vec![0.0, 1.0, 2.0, 3.0, 5.0, 8.0],
            // 0.0, 0.2, ..., 4.0
            _ => (0..=20).map(|k| k as f64 / 5.0).collect(),
        }
    }

    pub fn resolved_rho_grid(&self) -> Vec<f64> {
        if let Some(grid) = &self.rho_grid {
            return grid.clone();
        }
        // 0.02, 0.06, ..., 0.90
        (0..=22).map(|k| (2 + 4 * k) as f64 / 100.0).collect()
    }

    pub fn resolved_n(&self) -> usize {
        self.n.unwrap_or(2000)
    }

    pub fn resolved_n_list(&self) -> Vec<usize> {
        if let Some(list) = &self.n_list {
            return list.clone();
        }
        if let Some(n) = self.n {
            return vec![n];
        }
        vec![500, 1000, 2000]
    }

    pub fn solver_config(&self) -> AmpConfig {
        AmpConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            damping: self.damping,
            success_mse: self.success_mse,
        }
    }

    pub fn quad(&self) -> QuadratureSpec {
        QuadratureSpec {
            nodes: self.quad_nodes,
            refine: self.refine,
        }
    }

    pub fn prior(&self) -> Result<Prior> {
        Prior::new(self.rho)
    }

    fn rows_for(&self, n: usize) -> usize {
        ((self.alpha * n as f64).round() as usize).max(1)
    }

    /// The documented seed rule.
    pub fn instance_seed(&self, param_index: usize, trial_index: usize) -> u64 {
        self.base_seed
            .wrapping_add(trial_index as u64)
            .wrapping_add(1_000_003u64.wrapping_mul(param_index as u64))
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        let workers = self
            .workers
            .or_else(|| {
                std::env::var(WORKERS_ENV)
                    .ok()
                    .and_then(|v| v.parse::<usize>().ok())
            })
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::numerical(format!("failed to build worker pool: {e}")))
    }

    fn params_json(&self) -> serde_json::Value {
        json!({
            "rho": self.rho,
            "alpha": self.alpha,
            "delta": self.resolved_delta(),
            "trials": self.trials,
            "base_seed": self.base_seed,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "damping": self.damping,
            "success_mse": self.success_mse,
            "quad_nodes": self.quad_nodes,
            "refine": self.refine,
        })
    }
}

fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn status_name(status: SolverStatus) -> &'static str {
    match status {
        SolverStatus::Converged => "converged",
        SolverStatus::MaxIter => "max_iter",
        SolverStatus::Diverged => "diverged",
    }
}

/// Eigenvalue profiles along the Nishimori line for each requested matrix
/// mean. Writes `eigen_profile.csv` (columns `gamma,v,lambda_d,lambda_k`)
/// and `eigen_profile.json`.
pub fn run_eigen_profile(cfg: &ExperimentConfig) -> Result<Vec<StabilityReport>> {
    cfg.validate()?;
    ensure_out_dir(cfg)?;
    let prior = cfg.prior()?;
    let quad = cfg.quad();
    let delta = cfg.resolved_delta();
    let grid = cfg.resolved_gamma_grid();

    let mut reports = Vec::with_capacity(grid.len());
    let mut csv = String::from("gamma,v,lambda_d,lambda_k\n");
    let mut summaries = Vec::new();
    for &gamma in &grid {
        let params = SeParams::new(cfg.alpha, delta, gamma, prior)?;
        let report = stability_profile(&params, &quad)?;
        for k in 0..report.v_grid.len() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                gamma, report.v_grid[k], report.lambda_d[k], report.lambda_k[k]
            ));
        }
        let mut warning = serde_json::Value::Null;
        if quad.refine {
            let mut worst = 0.0f64;
            for &v in &report.v_grid {
                let st = SeState { e: v, v, d: 0.0 };
                worst = worst.max(se_step_refine_error(&st, &params, &quad)?);
            }
            if worst > 1e-9 {
                warning = json!(format!(
                    "node-doubling residual {worst:.3e} exceeds 1e-9; raise quad_nodes"
                ));
            }
        }
        summaries.push(json!({
            "gamma": gamma,
            "regime": report.regime,
            "sup_abs_lambda_d": report.sup_abs_lambda_d,
            "fixed_point_abs_lambda_d": report.fixed_point_abs_lambda_d,
            "gamma_c1": report.gamma_c1,
            "gamma_c2": report.gamma_c2,
            "points": report.v_grid.len(),
            "warning": warning,
        }));
        reports.push(report);
    }

    write_text(&cfg.out_dir.join("eigen_profile.csv"), &csv)?;
    write_json(
        &cfg.out_dir.join("eigen_profile.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": cfg.experiment.name(),
            "params": cfg.params_json(),
            "gamma_grid": grid,
            "profiles": summaries,
        }),
    )?;
    Ok(reports)
}

/// Critical matrix means as a function of sparsity. Writes
/// `threshold_curve.csv` (columns `rho,gamma_c1,gamma_c2`) and a sidecar.
pub fn run_threshold_curve(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64, f64)>> {
    cfg.validate()?;
    ensure_out_dir(cfg)?;
    let quad = cfg.quad();
    let delta = cfg.resolved_delta();
    let grid = cfg.resolved_rho_grid();

    let pool = cfg.thread_pool()?;
    let rows: Result<Vec<(f64, f64, f64)>> = pool.install(|| {
        grid.par_iter()
            .map(|&rho| {
                let prior = Prior::new(rho)?;
                let params = SeParams::new(cfg.alpha, delta, 0.0, prior)?;
                let report = stability_profile(&params, &quad)?;
                Ok((rho, report.gamma_c1, report.gamma_c2))
            })
            .collect()
    });
    let rows = rows?;

    let mut csv = String::from("rho,gamma_c1,gamma_c2\n");
    for &(rho, g1, g2) in &rows {
        csv.push_str(&format!("{rho},{g1},{g2}\n"));
    }
    write_text(&cfg.out_dir.join("threshold_curve.csv"), &csv)?;
    write_json(
        &cfg.out_dir.join("threshold_curve.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": cfg.experiment.name(),
            "params": cfg.params_json(),
            "rho_grid": grid,
            "rows": rows.iter().map(|&(rho, g1, g2)| json!({
                "rho": rho, "gamma_c1": g1, "gamma_c2": g2,
            })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(rows)
}

/// One cell of a success sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SuccessRow {
    pub n: usize,
    pub gamma: f64,
    pub trials: usize,
    pub successes: usize,
    pub fraction: f64,
    pub stderr: f64,
}

/// Success fractions over an `(N, gamma)` grid with binomial standard
/// errors.
#[derive(Debug, Clone, Serialize)]
pub struct SuccessSweepResult {
    pub rows: Vec<SuccessRow>,
}

impl SuccessSweepResult {
    pub fn fraction(&self, n: usize, gamma: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && (r.gamma - gamma).abs() < 1e-12)
            .map(|r| r.fraction)
    }
}

/// AMP success rate over the `(N, gamma)` grid: `trials` fresh instances per
/// cell, success meaning convergence with final MSE below `success_mse`.
/// Diverged runs count as failures and never abort the sweep. Writes
/// `success_sweep.csv` (columns `n,gamma,trials,successes,fraction,stderr`).
pub fn run_success_sweep(cfg: &ExperimentConfig) -> Result<SuccessSweepResult> {
    cfg.validate()?;
    ensure_out_dir(cfg)?;
    let prior = cfg.prior()?;
    let delta = cfg.resolved_delta();
    let gammas = cfg.resolved_gamma_grid();
    let ns = cfg.resolved_n_list();
    let solver_cfg = cfg.solver_config();

    let mut tasks = Vec::with_capacity(ns.len() * gammas.len() * cfg.trials);
    for (ni, &n) in ns.iter().enumerate() {
        for (gi, &gamma) in gammas.iter().enumerate() {
            let param_index = ni * gammas.len() + gi;
            for trial in 0..cfg.trials {
                tasks.push((param_index, n, gamma, trial));
            }
        }
    }

    let pool = cfg.thread_pool()?;
    let outcomes: Result<Vec<(usize, bool)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(param_index, n, gamma, trial)| {
                let seed = cfg.instance_seed(param_index, trial);
                let inst =
                    ProblemInstance::generate(n, cfg.rows_for(n), gamma, delta, &prior, seed)?;
                let trace = amp::run(&inst, &prior, &solver_cfg);
                Ok((param_index, trace.is_success(solver_cfg.success_mse)))
            })
            .collect()
    });
    let outcomes = outcomes?;

    let cells = ns.len() * gammas.len();
    let mut successes = vec![0usize; cells];
    for (param_index, ok) in outcomes {
        if ok {
            successes[param_index] += 1;
        }
    }

    let mut rows = Vec::with_capacity(cells);
    for (ni, &n) in ns.iter().enumerate() {
        for (gi, &gamma) in gammas.iter().enumerate() {
            let param_index = ni * gammas.len() + gi;
            let s = successes[param_index];
            let t = cfg.trials;
            let fraction = s as f64 / t as f64;
            let stderr = (fraction * (1.0 - fraction) / t as f64).sqrt();
            rows.push(SuccessRow {
                n,
                gamma,
                trials: t,
                successes: s,
                fraction,
                stderr,
            });
        }
    }

    let mut csv = String::from("n,gamma,trials,successes,fraction,stderr\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n, r.gamma, r.trials, r.successes, r.fraction, r.stderr
        ));
    }
    write_text(&cfg.out_dir.join("success_sweep.csv"), &csv)?;
    write_json(
        &cfg.out_dir.join("success_sweep.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": cfg.experiment.name(),
            "params": cfg.params_json(),
            "n_list": ns,
            "gamma_grid": gammas,
            "rows": rows,
        }),
    )?;
    Ok(SuccessSweepResult { rows })
}

/// One arm of the schedule comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleCompareRow {
    pub gamma: f64,
    pub scheme: String,
    pub status: SolverStatus,
    pub sweeps: usize,
    pub final_mse: f64,
}

/// Compares plain parallel AMP, damped AMP, and random-sequential r-BP on
/// the same instances across the gamma grid. Writes `schedule_compare.csv`
/// (columns `gamma,scheme,status,sweeps,final_mse`).
pub fn run_schedule_compare(cfg: &ExperimentConfig) -> Result<Vec<ScheduleCompareRow>> {
    cfg.validate()?;
    ensure_out_dir(cfg)?;
    let prior = cfg.prior()?;
    let delta = cfg.resolved_delta();
    let gammas = cfg.resolved_gamma_grid();
    let n = cfg.resolved_n();
    let solver_cfg = cfg.solver_config();
    let damped_cfg = AmpConfig {
        damping: if cfg.damping > 0.0 { cfg.damping } else { 0.5 },
        ..solver_cfg
    };

    let arms = ["amp", "amp_damped", "rbp_sequential"];
    let mut tasks = Vec::with_capacity(gammas.len() * arms.len());
    for (gi, &gamma) in gammas.iter().enumerate() {
        for (ai, &arm) in arms.iter().enumerate() {
            tasks.push((gi, gamma, ai, arm));
        }
    }

    let pool = cfg.thread_pool()?;
    let rows: Result<Vec<(usize, usize, ScheduleCompareRow)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(gi, gamma, ai, arm)| {
                let seed = cfg.instance_seed(gi, 0);
                let inst = ProblemInstance::generate(n, cfg.rows_for(n), gamma, delta, &prior, seed)?;
                let trace: AmpTrace = match arm {
                    "amp" => amp::run(&inst, &prior, &solver_cfg),
                    "amp_damped" => amp::run(&inst, &prior, &damped_cfg),
                    _ => rbp::run(
                        &inst,
                        &prior,
                        &Schedule::random_sequential(seed),
                        &solver_cfg,
                    ),
                };
                Ok((
                    gi,
                    ai,
                    ScheduleCompareRow {
                        gamma,
                        scheme: arm.to_string(),
                        status: trace.status,
                        sweeps: trace.iterations(),
                        final_mse: trace.final_mse(),
                    },
                ))
            })
            .collect()
    });
    let mut rows = rows?;
    rows.sort_by_key(|&(gi, ai, _)| (gi, ai));
    let rows: Vec<ScheduleCompareRow> = rows.into_iter().map(|(_, _, r)| r).collect();

    let mut csv = String::from("gamma,scheme,status,sweeps,final_mse\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.gamma,
            r.scheme,
            status_name(r.status),
            r.sweeps,
            r.final_mse
        ));
    }
    write_text(&cfg.out_dir.join("schedule_compare.csv"), &csv)?;
    write_json(
        &cfg.out_dir.join("schedule_compare.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": cfg.experiment.name(),
            "params": cfg.params_json(),
            "n": n,
            "gamma_grid": gammas,
            "rows": rows,
        }),
    )?;
    Ok(rows)
}

/// Summary of a single debug run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: SolverStatus,
    pub iterations: usize,
    pub final_e: f64,
    pub final_v_bar: f64,
    pub final_d: f64,
    pub success: bool,
}

/// One instance, one solver, full per-iteration trace (`trace.csv`) plus a
/// JSON sidecar (`run.json`); optionally the matching state-evolution
/// trajectory (`se_trace.csv`).
pub fn run_single(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    ensure_out_dir(cfg)?;
    let prior = cfg.prior()?;
    let delta = cfg.resolved_delta();
    let gamma = cfg.resolved_gamma();
    let n = cfg.resolved_n();
    let solver_cfg = cfg.solver_config();
    let seed = cfg.instance_seed(0, 0);
    let inst = ProblemInstance::generate(n, cfg.rows_for(n), gamma, delta, &prior, seed)?;

    let (trace, schedule_field) = match cfg.solver {
        SolverKind::Amp => (amp::run(&inst, &prior, &solver_cfg), serde_json::Value::Null),
        SolverKind::Rbp => {
            let schedule = match cfg.schedule {
                ScheduleKind::Parallel => Schedule::parallel(),
                ScheduleKind::RandomSequential => Schedule::random_sequential(seed),
            };
            (
                rbp::run(&inst, &prior, &schedule, &solver_cfg),
                serde_json::to_value(cfg.schedule)?,
            )
        }
    };

    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    write_text(
        &cfg.out_dir.join("trace.csv"),
        std::str::from_utf8(&csv).expect("trace CSV is ASCII"),
    )?;

    let last = trace.final_record().copied();
    let summary = RunSummary {
        status: trace.status,
        iterations: trace.iterations(),
        final_e: last.map_or(f64::NAN, |r| r.e),
        final_v_bar: last.map_or(f64::NAN, |r| r.v_bar),
        final_d: last.map_or(f64::NAN, |r| r.d),
        success: trace.is_success(solver_cfg.success_mse),
    };

    write_json(
        &cfg.out_dir.join("run.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": cfg.experiment.name(),
            "params": cfg.params_json(),
            "n": n,
            "m": cfg.rows_for(n),
            "gamma": gamma,
            "seed": seed,
            "solver": cfg.solver,
            "schedule": schedule_field,
            "status": status_name(summary.status),
            "iterations": summary.iterations,
            "final_e": summary.final_e,
            "final_v_bar": summary.final_v_bar,
            "final_d": summary.final_d,
            "success": summary.success,
        }),
    )?;

    if cfg.se_overlay {
        let params = SeParams::new(cfg.alpha, delta, gamma, prior)?;
        let traj = se_run(
            &SeState::uninformed(&prior),
            &params,
            &cfg.quad(),
            cfg.max_iter.min(500),
            1e-14,
        )?;
        let mut csv = String::from("iter,E,V,D\n");
        for (t, st) in traj.states.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{}\n", t, st.e, st.v, st.d));
        }
        write_text(&cfg.out_dir.join("se_trace.csv"), &csv)?;
    }

    Ok(summary)
}
