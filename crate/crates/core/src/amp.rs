//! Approximate message passing with the Onsager correction: a full parallel
//! sweep per iteration, optional damping of the estimates, and per-iteration
//! order-parameter diagnostics.
//!
//! The update order within a sweep is fixed: the per-measurement variances
//! `V` first, then the Onsager-corrected residuals `omega` (whose correction
//! term uses the *previous* iteration's `omega` and `V`), then the channel
//! parameters `(Sigma^2, R)` from the fresh `omega, V`, and finally the
//! estimates `(a, v)` through the scalar posterior. Nothing in the update
//! rules refers to the matrix mean — it enters only through the instance.

use std::io::Write;

use crate::denoiser::{Posterior, Prior};
use crate::error::Result;
use crate::instance::{mean_bias_unchecked, mse_unchecked, ProblemInstance};

/// Denominators `delta + V` are floored here so noiseless instances at the
/// exact fixed point do not produce 0/0.
const DENOM_FLOOR: f64 = 1e-300;

/// Estimates diverging past `DIVERGENCE_FACTOR * rho * slab_var` are reported
/// as divergence even while still finite.
const DIVERGENCE_FACTOR: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpConfig {
    pub max_iter: usize,
    /// Convergence tolerance on the mean absolute change of the estimate.
    pub tol: f64,
    /// Damping factor in `[0, 1)`: fraction of the *old* `(a, v)` kept at
    /// each update. Zero is plain AMP.
    pub damping: f64,
    /// MSE threshold under which a converged run counts as a success.
    pub success_mse: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-8,
            damping: 0.0,
            success_mse: 1e-6,
        }
    }
}

impl AmpConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid("tol must be positive"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::invalid("damping must lie in [0, 1)"));
        }
        if self.success_mse.is_nan() || self.success_mse <= 0.0 {
            return Err(Error::invalid("success_mse must be positive"));
        }
        Ok(())
    }
}

/// Per-variable and per-measurement iterates of one AMP run.
#[derive(Debug, Clone)]
pub struct AmpState {
    /// Posterior-mean estimates, length N.
    pub a: Vec<f64>,
    /// Posterior variances, length N.
    pub v: Vec<f64>,
    /// Onsager-corrected residual means, length M.
    pub omega: Vec<f64>,
    /// Per-measurement variances, length M.
    pub big_v: Vec<f64>,
    pub iteration: usize,
}

impl AmpState {
    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.omega.iter().all(|x| x.is_finite())
            && self.big_v.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub iter: usize,
    pub e: f64,
    pub v_bar: f64,
    pub d: f64,
    pub max_change: f64,
}

/// Iteration log of a solver run plus its terminal status. Shared by AMP and
/// relaxed BP (one record per sweep there).
#[derive(Debug, Clone)]
pub struct AmpTrace {
    pub records: Vec<TraceRecord>,
    pub status: SolverStatus,
}

impl AmpTrace {
    pub fn final_mse(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.e)
    }

    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn is_success(&self, success_mse: f64) -> bool {
        self.status == SolverStatus::Converged && self.final_mse() < success_mse
    }

    /// Writes the trace as CSV with the stable column set.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "iter,E,Vbar,D,max_change")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{},{}", r.iter, r.e, r.v_bar, r.d, r.max_change)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Diagnostics {
    /// Mean squared error against the ground truth.
    pub e: f64,
    /// Mean posterior variance.
    pub v_bar: f64,
    /// Mean signed bias against the ground truth.
    pub d: f64,
}

/// Result of one sweep: either the state advanced, or the update produced
/// non-finite values and the state was left at the last finite iterate.
#[derive(Debug, Clone, Copy)]
pub enum StepOutcome {
    /// Sweep committed; carries the mean absolute change of the estimate.
    Ok { mean_change: f64 },
    /// Candidate iterate was non-finite; the state is unchanged.
    NonFinite,
}

/// Initial state: zero estimates, prior variances, residuals seeded with the
/// measurements so the first Onsager term vanishes.
pub fn init(inst: &ProblemInstance, prior: &Prior) -> AmpState {
    let n = inst.n();
    let m = inst.m();
    let v0 = prior.rho() * prior.slab_var();
    let v = vec![v0; n];
    let mut big_v = vec![0.0; m];
    inst.matrix_squared().mul_vec(&v, &mut big_v);
    AmpState {
        a: vec![0.0; n],
        v,
        omega: inst.measurements().to_vec(),
        big_v,
        iteration: 0,
    }
}

/// One full parallel AMP sweep. On a non-finite candidate the state is not
/// committed and [`StepOutcome::NonFinite`] is returned.
pub fn step(
    state: &mut AmpState,
    inst: &ProblemInstance,
    prior: &Prior,
    cfg: &AmpConfig,
) -> StepOutcome {
    let f = inst.matrix();
    let f_sq = inst.matrix_squared();
    let y = inst.measurements();
    let delta = inst.delta();
    let n = inst.n();
    let m = inst.m();

    // V^{t+1} = F^2 v^t
    let mut big_v_new = vec![0.0; m];
    f_sq.mul_vec(&state.v, &mut big_v_new);

    // omega^{t+1} = F a^t - (y - omega^t)/(delta + V^t) * V^{t+1}
    let mut omega_new = vec![0.0; m];
    f.mul_vec(&state.a, &mut omega_new);
    for mu in 0..m {
        let denom = (delta + state.big_v[mu]).max(DENOM_FLOOR);
        omega_new[mu] -= (y[mu] - state.omega[mu]) / denom * big_v_new[mu];
    }

    // Channel weights from the fresh V.
    let weights: Vec<f64> = big_v_new
        .iter()
        .map(|&vv| 1.0 / (delta + vv).max(DENOM_FLOOR))
        .collect();

    // 1/Sigma^2_i = sum_mu F^2_{mu i} / (delta + V^{t+1}_mu)
    let mut sigma2_inv = vec![0.0; n];
    f_sq.tmul_vec(&weights, &mut sigma2_inv);

    // R_i = a_i + [sum_mu F_{mu i} (y - omega^{t+1})_mu w_mu] / (1/Sigma^2_i)
    let resid: Vec<f64> = (0..m)
        .map(|mu| (y[mu] - omega_new[mu]) * weights[mu])
        .collect();
    let mut corr = vec![0.0; n];
    f.tmul_vec(&resid, &mut corr);

    let beta = cfg.damping;
    let mut a_new = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut change = 0.0;
    for i in 0..n {
        let sigma2 = 1.0 / sigma2_inv[i].max(DENOM_FLOOR);
        let r = state.a[i] + corr[i] / sigma2_inv[i].max(DENOM_FLOOR);
        let (mean, var) = Posterior::from_raw(prior, sigma2, r).mean_and_variance();
        let ai = if beta > 0.0 {
            (1.0 - beta) * mean + beta * state.a[i]
        } else {
            mean
        };
        let vi = if beta > 0.0 {
            (1.0 - beta) * var + beta * state.v[i]
        } else {
            var
        };
        change += (ai - state.a[i]).abs();
        a_new[i] = ai;
        v_new[i] = vi;
    }

    let finite = a_new.iter().all(|x| x.is_finite())
        && v_new.iter().all(|x| x.is_finite())
        && omega_new.iter().all(|x| x.is_finite())
        && big_v_new.iter().all(|x| x.is_finite());
    if !finite {
        return StepOutcome::NonFinite;
    }

    state.a = a_new;
    state.v = v_new;
    state.omega = omega_new;
    state.big_v = big_v_new;
    state.iteration += 1;
    StepOutcome::Ok {
        mean_change: change / n as f64,
    }
}

/// Order-parameter diagnostics of the current state against the ground truth.
pub fn diagnostics(state: &AmpState, inst: &ProblemInstance) -> Diagnostics {
    let s = inst.signal();
    let v_bar = state.v.iter().sum::<f64>() / state.v.len().max(1) as f64;
    Diagnostics {
        e: mse_unchecked(&state.a, s),
        v_bar,
        d: mean_bias_unchecked(&state.a, s),
    }
}

/// Runs AMP to convergence (mean absolute estimate change below `cfg.tol`),
/// the iteration cap, or divergence. Divergence is a trace status, never a
/// panic or error.
pub fn run(inst: &ProblemInstance, prior: &Prior, cfg: &AmpConfig) -> AmpTrace {
    let mut state = init(inst, prior);
    run_from(&mut state, inst, prior, cfg)
}

/// As [`run`], continuing from an existing state (records start at its
/// current iteration).
pub fn run_from(
    state: &mut AmpState,
    inst: &ProblemInstance,
    prior: &Prior,
    cfg: &AmpConfig,
) -> AmpTrace {
    let e_cap = DIVERGENCE_FACTOR * prior.rho().max(1e-3) * prior.slab_var();
    let mut records = Vec::with_capacity(cfg.max_iter.min(4096) + 1);
    let d0 = diagnostics(state, inst);
    records.push(TraceRecord {
        iter: state.iteration,
        e: d0.e,
        v_bar: d0.v_bar,
        d: d0.d,
        max_change: 0.0,
    });

    let mut status = SolverStatus::MaxIter;
    for _ in 0..cfg.max_iter {
        match step(state, inst, prior, cfg) {
            StepOutcome::NonFinite => {
                status = SolverStatus::Diverged;
                break;
            }
            StepOutcome::Ok { mean_change } => {
                let diag = diagnostics(state, inst);
                records.push(TraceRecord {
                    iter: state.iteration,
                    e: diag.e,
                    v_bar: diag.v_bar,
                    d: diag.d,
                    max_change: mean_change,
                });
                if !diag.e.is_finite() || diag.e > e_cap {
                    status = SolverStatus::Diverged;
                    break;
                }
                if mean_change < cfg.tol {
                    status = SolverStatus::Converged;
                    break;
                }
            }
        }
    }
    AmpTrace { records, status }
}
