//! State evolution of AMP for measurement matrices with mean `gamma/N`.
//!
//! For zero-mean matrices the large-system behavior of AMP is tracked by a
//! two-parameter recursion in the error `E` and the variance `V`. A non-zero
//! matrix mean couples a third order parameter into the recursion: the mean
//! signed bias `D`.
//!
//! The recursion averages posterior functionals over the signal prior and
//! the Gaussian effective noise. Every integrand involved is at most
//! quadratic in the signal once the channel output `w = s + z * A + shift`
//! is fixed, so the signal dimension integrates out exactly (the prior's
//! point mass contributes a separate Gaussian in `w`). What remains per term
//! is a one-dimensional Gaussian-weighted integral whose only sharp
//! structure is the spike/slab responsibility flip of the posterior — a
//! sigmoid whose location and width follow from a quadratic in `w`. The
//! integrator therefore lays quadrature panels on the Gaussian's natural
//! scale, inserts refined panels around each flip, and applies a
//! Gauss-Legendre rule per panel. Tensor-product Gauss-Hermite over `(s, z)`
//! cannot resolve those flips once the channel variance is small; this
//! decomposition keeps node-doubling residuals below 1e-9 along everything
//! the recursion visits.
//!
//! On the manifold `E = V`, `D = 0` (the Nishimori line, valid under
//! Bayes-optimal inference) the map closes over a single scalar; the
//! submodule [`stability`] linearizes the full map transverse to that line
//! and locates the critical matrix means where it loses stability.

mod stability;

pub use stability::{
    critical_gamma, critical_gamma_bisect, fd_jacobian, lambda_d, lambda_k, stability_profile,
    Regime, StabilityReport, ThresholdKind,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::amp::SolverStatus;
use crate::denoiser::{Posterior, Prior, SIGMA2_FLOOR};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Order-parameter triple tracked by the state evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeState {
    /// Mean squared error.
    pub e: f64,
    /// Mean posterior variance.
    pub v: f64,
    /// Mean signed bias.
    pub d: f64,
}

impl SeState {
    /// Uninformed initialization: `E = V = rho * slab_var`, `D = 0`,
    /// matching an all-zero starting estimate.
    pub fn uninformed(prior: &Prior) -> Self {
        let v0 = prior.rho() * prior.slab_var();
        Self {
            e: v0,
            v: v0,
            d: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite() && self.v.is_finite() && self.d.is_finite()
    }
}

/// Model parameters of the evolution: undersampling, noise, matrix mean, and
/// the signal prior.
#[derive(Debug, Clone, Copy)]
pub struct SeParams {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub prior: Prior,
}

impl SeParams {
    pub fn new(alpha: f64, delta: f64, gamma: f64, prior: Prior) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::invalid(format!("delta must be nonnegative, got {delta}")));
        }
        if !gamma.is_finite() {
            return Err(Error::invalid("gamma must be finite"));
        }
        Ok(Self {
            alpha,
            delta,
            gamma,
            prior,
        })
    }
}

/// Resolution of the evolution integrals: the Gauss-Legendre order applied
/// on each panel of the feature-aware decomposition. The default leaves
/// node-doubling residuals far below 1e-9 everywhere the recursion visits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes: usize,
    /// When set, runs re-evaluate steps at doubled node count and record the
    /// worst disagreement as metadata.
    pub refine: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 41,
            refine: false,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 21 {
            return Err(Error::invalid(format!(
                "quadrature needs at least 21 nodes, got {}",
                self.nodes
            )));
        }
        Ok(())
    }

    pub(crate) fn rule(&self) -> Result<Arc<GaussLegendre>> {
        self.validate()?;
        GaussLegendre::shared(self.nodes)
    }

    pub(crate) fn doubled_rule(&self) -> Result<Arc<GaussLegendre>> {
        self.validate()?;
        GaussLegendre::shared(self.nodes * 2)
    }
}

/// Locations and widths of the posterior's spike/slab responsibility flips
/// as a function of the channel output, from the quadratic log-odds.
fn responsibility_flips(prior: &Prior, sigma2: f64) -> Vec<(f64, f64)> {
    let rho = prior.rho();
    if rho <= 0.0 || rho >= 1.0 {
        return Vec::new();
    }
    let sv = prior.slab_var();
    let sm = prior.slab_mean();
    let tot = sv + sigma2;
    let a = 0.5 / sigma2 - 0.5 / tot;
    let b = sm / tot;
    let c = (rho / (1.0 - rho)).ln() - 0.5 * (tot / sigma2).ln() - sm * sm / (2.0 * tot);
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 || !disc.is_finite() {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let width = (1.0 / sq).min(10.0 * sv.sqrt());
    let r1 = (-b + sq) / (2.0 * a);
    let r2 = (-b - sq) / (2.0 * a);
    let mut flips = Vec::with_capacity(2);
    if r1.is_finite() {
        flips.push((r1, width));
    }
    if r2.is_finite() {
        flips.push((r2, width));
    }
    flips
}

/// `E_{w ~ N(mu, sd^2)}[h(w)]` by panel quadrature: panels on the Gaussian's
/// own scale over `mu ± 8.5 sd`, refined around each listed feature, with a
/// Gauss-Legendre rule per panel.
fn gauss_expect_panels<const K: usize>(
    gl: &GaussLegendre,
    mu: f64,
    sd: f64,
    features: &[(f64, f64)],
    h: impl Fn(f64) -> [f64; K],
) -> [f64; K] {
    let mut acc = [0.0; K];
    if sd == 0.0 {
        return h(mu);
    }

    let lo = mu - 8.5 * sd;
    let hi = mu + 8.5 * sd;
    let mut breaks: Vec<f64> = Vec::with_capacity(17 + features.len() * 7 + 2);
    for k in -8..=8 {
        breaks.push(mu + k as f64 * sd);
    }
    for &(center, width) in features {
        if center <= lo || center >= hi {
            continue;
        }
        for j in [-6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0] {
            let b = center + j * width;
            if b > lo && b < hi {
                breaks.push(b);
            }
        }
    }
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();

    let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
    for panel in breaks.windows(2) {
        let half = 0.5 * (panel[1] - panel[0]);
        if half <= 0.0 || half.is_nan() {
            continue;
        }
        let mid = 0.5 * (panel[0] + panel[1]);
        for (t, wt) in gl.points() {
            let w = mid + half * t;
            let u = (w - mu) / sd;
            let weight = wt * half * norm * (-0.5 * u * u).exp();
            let vals = h(w);
            for (a, v) in acc.iter_mut().zip(vals.iter()) {
                *a += weight * v;
            }
        }
    }
    acc
}

/// Expectation over the prior and the Gaussian effective noise of any
/// integrand at most quadratic in the signal `s`:
///
/// `E_{s ~ P, z ~ N(0,1)}[ g(s, w) ]`, `w = s + z * noise_sd + shift`,
///
/// where the caller receives, for each channel output `w`, the conditional
/// signal mean and variance given `w` (exact Gaussian algebra) and returns
/// the conditional expectation of its integrand. The spike contributes a
/// separate `N(shift, noise_sd^2)` branch with `s = 0`.
pub(crate) fn prior_channel_expect<const K: usize>(
    prior: &Prior,
    gl: &GaussLegendre,
    sigma2: f64,
    noise_sd: f64,
    shift: f64,
    f: impl Fn(f64, f64, f64) -> [f64; K],
) -> [f64; K] {
    let rho = prior.rho();
    let flips = responsibility_flips(prior, sigma2);
    let mut acc = [0.0; K];

    if rho < 1.0 {
        let vals = gauss_expect_panels(gl, shift, noise_sd, &flips, |w| f(0.0, 0.0, w));
        for (a, v) in acc.iter_mut().zip(vals.iter()) {
            *a += (1.0 - rho) * v;
        }
    }
    if rho > 0.0 {
        let sv = prior.slab_var();
        let sm = prior.slab_mean();
        let var_w = sv + noise_sd * noise_sd;
        let mu_w = sm + shift;
        let gain = sv / var_w;
        let cond_var = sv * noise_sd * noise_sd / var_w;
        let vals = gauss_expect_panels(gl, mu_w, var_w.sqrt(), &flips, |w| {
            let cond_mean = sm + gain * (w - mu_w);
            f(cond_mean, cond_var, w)
        });
        for (a, v) in acc.iter_mut().zip(vals.iter()) {
            *a += rho * v;
        }
    }
    acc
}

fn step_with_rule(state: &SeState, params: &SeParams, gl: &GaussLegendre) -> SeState {
    let prior = &params.prior;
    let sigma2 = (params.delta + state.v) / params.alpha;
    let g2 = params.gamma * params.gamma;
    let noise_sd = ((state.e + params.delta + g2 * state.d * state.d) / params.alpha).sqrt();
    let shift = g2 * state.d;

    let [v_new, e_new, d_new] =
        prior_channel_expect(prior, gl, sigma2, noise_sd, shift, |s_mean, s_var, w| {
            let (mean, var) = Posterior::from_raw(prior, sigma2, w).mean_and_variance();
            let ds = s_mean - mean;
            [var, ds * ds + s_var, ds]
        });
    SeState {
        e: e_new,
        v: v_new,
        d: d_new,
    }
}

/// One step of the three-parameter state evolution.
pub fn se_step(state: &SeState, params: &SeParams, quad: &QuadratureSpec) -> Result<SeState> {
    Ok(step_with_rule(state, params, quad.rule()?.as_ref()))
}

/// Worst absolute disagreement of the three step integrals between `nodes`
/// and `2 * nodes` quadrature. Values above ~1e-9 indicate the default
/// resolution is too coarse for the given state.
pub fn se_step_refine_error(
    state: &SeState,
    params: &SeParams,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let coarse = step_with_rule(state, params, quad.rule()?.as_ref());
    let fine = step_with_rule(state, params, quad.doubled_rule()?.as_ref());
    Ok((coarse.e - fine.e)
        .abs()
        .max((coarse.v - fine.v).abs())
        .max((coarse.d - fine.d).abs()))
}

/// A state-evolution run: visited states (including the initial one), the
/// terminal status, and — when `refine` was requested — the worst observed
/// node-doubling disagreement.
#[derive(Debug, Clone)]
pub struct SeTrajectory {
    pub states: Vec<SeState>,
    pub status: SolverStatus,
    pub max_refine_error: Option<f64>,
}

impl SeTrajectory {
    pub fn final_state(&self) -> SeState {
        *self.states.last().expect("trajectory has an initial state")
    }
}

/// Iterates the state evolution until the largest order-parameter change
/// drops below `tol`, the iteration cap, or divergence.
pub fn se_run(
    init: &SeState,
    params: &SeParams,
    quad: &QuadratureSpec,
    max_iter: usize,
    tol: f64,
) -> Result<SeTrajectory> {
    let rule = quad.rule()?;
    let fine = if quad.refine {
        Some(quad.doubled_rule()?)
    } else {
        None
    };
    let cap = 1e4 * params.prior.rho().max(1e-3) * params.prior.slab_var();

    let mut states = Vec::with_capacity(max_iter.min(4096) + 1);
    states.push(*init);
    let mut status = SolverStatus::MaxIter;
    let mut max_refine_error: Option<f64> = None;
    let mut cur = *init;
    for _ in 0..max_iter {
        let next = step_with_rule(&cur, params, rule.as_ref());
        if let Some(fine_rule) = &fine {
            let check = step_with_rule(&cur, params, fine_rule.as_ref());
            let err = (next.e - check.e)
                .abs()
                .max((next.v - check.v).abs())
                .max((next.d - check.d).abs());
            max_refine_error = Some(max_refine_error.map_or(err, |m: f64| m.max(err)));
        }
        states.push(next);
        if !next.is_finite() || next.e > cap || next.v > cap {
            status = SolverStatus::Diverged;
            break;
        }
        let change = (next.e - cur.e)
            .abs()
            .max((next.v - cur.v).abs())
            .max((next.d - cur.d).abs());
        cur = next;
        if change < tol {
            status = SolverStatus::Converged;
            break;
        }
    }
    Ok(SeTrajectory {
        states,
        status,
        max_refine_error,
    })
}

/// The scalar recursion on the Nishimori line: `V' = E_{s,z} f2(Sigma^2,
/// s + z * Sigma)` with `Sigma^2 = (delta + V) / alpha`.
pub(crate) fn nishimori_step(v: f64, params: &SeParams, gl: &GaussLegendre) -> f64 {
    let prior = &params.prior;
    let sigma2 = (params.delta + v) / params.alpha;
    let noise_sd = sigma2.sqrt();
    let [v_new] = prior_channel_expect(prior, gl, sigma2, noise_sd, 0.0, |_, _, w| {
        [Posterior::from_raw(prior, sigma2, w).variance()]
    });
    v_new
}

/// The sequence of `V` values visited by the Nishimori-line recursion from
/// the uninformed start down to its fixed point. This is the grid on which
/// the stability eigenvalues are profiled.
pub fn nishimori_trajectory(
    params: &SeParams,
    quad: &QuadratureSpec,
    max_iter: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let rule = quad.rule()?;
    // Keep the visited channel variances a decade above the denoiser's
    // clamp; past that point the recursion would measure the clamp, not the
    // model.
    let v_floor = (10.0 * SIGMA2_FLOOR * params.alpha - params.delta).max(0.0);
    let mut v = params.prior.rho() * params.prior.slab_var();
    let mut out = Vec::with_capacity(max_iter.min(4096) + 1);
    out.push(v);
    for _ in 0..max_iter {
        let next = nishimori_step(v, params, rule.as_ref());
        if !next.is_finite() {
            return Err(Error::numerical(format!(
                "Nishimori recursion produced a non-finite value after V = {v:.3e}"
            )));
        }
        if next <= v_floor {
            break;
        }
        out.push(next);
        let done = (next - v).abs() < tol;
        v = next;
        if done {
            break;
        }
    }
    Ok(out)
}
