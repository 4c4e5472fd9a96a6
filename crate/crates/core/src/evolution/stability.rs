//! Linear stability of the Nishimori line under the three-parameter state
//! evolution.
//!
//! With `K = V - E`, the transverse dynamics around the line close over
//! `(K, D)` and the linearized map is diagonal for the Bernoulli-Gaussian
//! prior. The two eigenvalues have closed integral forms:
//!
//! - `lambda_D = -alpha gamma^2 V' / (delta + V)`: the bias direction, where
//!   `V'` is the on-line image of `V`. It scales exactly with `gamma^2`.
//! - `lambda_K`: the variance-gap direction, a combination of the second,
//!   third and fourth posterior cumulants; independent of `gamma`.
//!
//! Both are validated against a central finite-difference Jacobian of the
//! full map ([`fd_jacobian`]).

use serde::{Deserialize, Serialize};

use super::{nishimori_step, nishimori_trajectory, prior_channel_expect, se_step};
use super::{QuadratureSpec, SeParams, SeState};
use crate::denoiser::Posterior;
use crate::error::{Error, Result};

/// Which critical matrix mean to locate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdKind {
    /// Smallest mean at which part of the line turns unstable.
    Partial,
    /// Smallest mean at which the line is unstable down to its fixed point.
    Full,
}

/// Stability classification of the line at a given matrix mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Stable,
    PartiallyUnstable,
    FullyUnstable,
}

/// Eigenvalue profiles along the Nishimori trajectory plus the critical
/// matrix means (which do not depend on the profile's own `gamma`).
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub gamma: f64,
    /// The `V` values visited by the on-line recursion, descending.
    pub v_grid: Vec<f64>,
    /// Bias-direction eigenvalue at each grid point (nonpositive).
    pub lambda_d: Vec<f64>,
    /// Variance-gap eigenvalue at each grid point.
    pub lambda_k: Vec<f64>,
    /// Supremum of `|lambda_D|` over the line (grid plus peak refinement).
    pub sup_abs_lambda_d: f64,
    /// `|lambda_D|` in the fixed-point limit.
    pub fixed_point_abs_lambda_d: f64,
    pub gamma_c1: f64,
    pub gamma_c2: f64,
    pub regime: Regime,
}

/// Bias-direction eigenvalue `lambda_D` at a point `V` of the line.
pub fn lambda_d(v: f64, params: &SeParams, quad: &QuadratureSpec) -> Result<f64> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::invalid(format!("V must be nonnegative, got {v}")));
    }
    let rule = quad.rule()?;
    let g2 = params.gamma * params.gamma;
    if g2 == 0.0 {
        return Ok(0.0);
    }
    let v_next = nishimori_step(v, params, rule.as_ref());
    Ok(-params.alpha * g2 * v_next / (params.delta + v))
}

/// Variance-gap eigenvalue `lambda_K` at a point `V` of the line.
///
/// `lambda_K = -(alpha / (2 (delta+V)^2)) E_{s,z}[ f4 - 2 f2^2 - 2 (f1 - s) f3 ]`
/// with the channel at `Sigma^2 = (delta+V)/alpha` and noise scale
/// `A = Sigma`. The value never involves the matrix mean.
pub fn lambda_k(v: f64, params: &SeParams, quad: &QuadratureSpec) -> Result<f64> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::invalid(format!("V must be nonnegative, got {v}")));
    }
    let rule = quad.rule()?;
    let prior = &params.prior;
    let sigma2 = (params.delta + v) / params.alpha;
    let noise_sd = sigma2.sqrt();
    let [integral] = prior_channel_expect(prior, rule.as_ref(), sigma2, noise_sd, 0.0, |s_mean, _, w| {
        let post = Posterior::from_raw(prior, sigma2, w);
        let [c1, c2, c3, c4] = post.cumulants();
        [c4 - 2.0 * c2 * c2 - 2.0 * (c1 - s_mean) * c3]
    });
    let dv = params.delta + v;
    Ok(-0.5 * params.alpha * integral / (dv * dv))
}

/// Central finite-difference Jacobian of the transverse map
/// `(K, D) -> (K', D')` around the line at height `V`.
///
/// Row order is `[K'; D']`, column order `[d/dK, d/dD]`, so the diagonal is
/// `(lambda_K, lambda_D)` and the off-diagonal entries vanish for the
/// Bernoulli-Gaussian prior. This is the oracle for both closed forms.
pub fn fd_jacobian(
    v: f64,
    params: &SeParams,
    quad: &QuadratureSpec,
    step: f64,
) -> Result<[[f64; 2]; 2]> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::invalid(format!(
            "finite-difference step must lie in [1e-7, 1e-3], got {step}"
        )));
    }
    if v <= step {
        return Err(Error::invalid(format!(
            "V = {v} is too small for finite-difference step {step}"
        )));
    }
    let eval = |k: f64, d: f64| -> Result<(f64, f64)> {
        let state = SeState { e: v - k, v, d };
        let out = se_step(&state, params, quad)?;
        Ok((out.v - out.e, out.d))
    };
    let (kp_k, dp_k) = eval(step, 0.0)?;
    let (km_k, dm_k) = eval(-step, 0.0)?;
    let (kp_d, dp_d) = eval(0.0, step)?;
    let (km_d, dm_d) = eval(0.0, -step)?;
    let inv = 1.0 / (2.0 * step);
    Ok([
        [(kp_k - km_k) * inv, (kp_d - km_d) * inv],
        [(dp_k - dm_k) * inv, (dp_d - dm_d) * inv],
    ])
}

/// Default trajectory controls for the stability analyses: deep enough that
/// the fixed-point extrapolation has converged corrections, with iteration
/// headroom for the critical slowdown near the recovery boundary.
const TRAJ_MAX_ITER: usize = 2000;
const TRAJ_TOL: f64 = 1e-13;

struct LineStats {
    v_grid: Vec<f64>,
    lambda: Vec<f64>,
    sup_abs: f64,
    fp_abs: f64,
}

/// Profiles `lambda_D` at `params.gamma` along the on-line trajectory,
/// refines the peak by successive parabolic interpolation in `ln V`, and
/// extrapolates the fixed-point value (Aitken acceleration when the fixed
/// point is at `V = 0`).
fn line_stats(params: &SeParams, quad: &QuadratureSpec) -> Result<LineStats> {
    let rule = quad.rule()?;
    let traj = nishimori_trajectory(params, quad, TRAJ_MAX_ITER, TRAJ_TOL)?;
    let g2 = params.gamma * params.gamma;
    let t_last = traj.len() - 1;

    let mut lambda = Vec::with_capacity(traj.len());
    for t in 0..traj.len() {
        let v_next = if t < t_last {
            traj[t + 1]
        } else {
            nishimori_step(traj[t], params, rule.as_ref())
        };
        lambda.push(-params.alpha * g2 * v_next / (params.delta + traj[t]));
    }

    // Supremum of |lambda| over the line: grid max plus parabolic peak
    // refinement between the neighbors of the argmax.
    let (mut k_max, mut sup_abs) = (0usize, 0.0f64);
    for (k, &l) in lambda.iter().enumerate() {
        if l.abs() > sup_abs {
            sup_abs = l.abs();
            k_max = k;
        }
    }
    if g2 > 0.0 && k_max > 0 && k_max < t_last {
        let eval = |ln_v: f64| -> Result<f64> {
            Ok(lambda_d(ln_v.exp(), params, quad)?.abs())
        };
        // Bracket in ln V, ascending: trajectory is descending in V.
        let (mut a, mut b, mut c) = (
            traj[k_max + 1].ln(),
            traj[k_max].ln(),
            traj[k_max - 1].ln(),
        );
        let (mut ya, mut yb, mut yc) = (
            lambda[k_max + 1].abs(),
            lambda[k_max].abs(),
            lambda[k_max - 1].abs(),
        );
        for _ in 0..4 {
            let p = (b - a) * (b - a) * (yb - yc) - (b - c) * (b - c) * (yb - ya);
            let q = (b - a) * (yb - yc) - (b - c) * (yb - ya);
            if q.abs() < 1e-300 {
                break;
            }
            let x = b - 0.5 * p / q;
            if !x.is_finite() || x <= a || x >= c || (x - b).abs() < 1e-12 * (c - a) {
                break;
            }
            let y = eval(x)?;
            sup_abs = sup_abs.max(y);
            if y > yb {
                if x < b {
                    c = b;
                    yc = yb;
                } else {
                    a = b;
                    ya = yb;
                }
                b = x;
                yb = y;
            } else if x < b {
                a = x;
                ya = y;
            } else {
                c = x;
                yc = y;
            }
        }
    }

    // Fixed-point limit. At delta = 0 the fixed point is V* = 0 where the
    // expression is a ratio of successive iterates; Aitken acceleration over
    // the last three profile values removes the leading correction. The
    // extrapolant is only trusted when the tail actually contracts
    // geometrically — near a recovery-boundary bottleneck it does not, and
    // the last computed value is the honest answer there.
    let fp = if params.delta == 0.0 && traj.len() >= 3 {
        let x0 = lambda[t_last - 2];
        let x1 = lambda[t_last - 1];
        let x2 = lambda[t_last];
        let d0 = x1 - x0;
        let d1 = x2 - x1;
        let ratio = if d0.abs() > 0.0 { d1 / d0 } else { f64::NAN };
        if ratio.is_finite() && ratio > 0.0 && ratio < 0.97 {
            x2 + d1 * ratio / (1.0 - ratio)
        } else {
            x2
        }
    } else {
        lambda[t_last]
    };

    // The fixed point closes the line, so the supremum covers it too; this
    // also keeps `gamma_c1 <= gamma_c2` exact when the profile is flat and
    // the extrapolant lands a hair above the last grid value.
    let fp_abs = fp.abs();
    let sup_abs = sup_abs.max(fp_abs);

    Ok(LineStats {
        v_grid: traj,
        lambda,
        sup_abs,
        fp_abs,
    })
}

/// Critical matrix mean from a single eigenvalue profile at `gamma = 1`,
/// using the exact `gamma^2` scaling of `lambda_D`. The `gamma` field of
/// `params` is ignored.
pub fn critical_gamma(
    params: &SeParams,
    quad: &QuadratureSpec,
    which: ThresholdKind,
) -> Result<f64> {
    let unit = SeParams {
        gamma: 1.0,
        ..*params
    };
    let stats = line_stats(&unit, quad)?;
    let base = match which {
        ThresholdKind::Partial => stats.sup_abs,
        ThresholdKind::Full => stats.fp_abs,
    };
    if base <= 0.0 {
        return Err(Error::invalid(
            "eigenvalue profile is identically zero; no finite critical mean exists",
        ));
    }
    Ok(1.0 / base.sqrt())
}

/// Critical matrix mean by direct bisection on the instability predicate,
/// recomputing the eigenvalue profile at every candidate `gamma`. Slower
/// than [`critical_gamma`]; kept as a consistency check of the scaling
/// shortcut.
pub fn critical_gamma_bisect(
    params: &SeParams,
    quad: &QuadratureSpec,
    which: ThresholdKind,
    tol: f64,
) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid("bisection tolerance must be positive"));
    }
    let measure = |gamma: f64| -> Result<f64> {
        let at = SeParams { gamma, ..*params };
        let stats = line_stats(&at, quad)?;
        Ok(match which {
            ThresholdKind::Partial => stats.sup_abs,
            ThresholdKind::Full => stats.fp_abs,
        })
    };
    if measure(1.0)? <= 0.0 {
        return Err(Error::invalid(
            "eigenvalue profile is identically zero; no finite critical mean exists",
        ));
    }
    let mut lo = 1e-3;
    let mut hi = 1.0;
    while measure(hi)? < 1.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::numerical(
                "no instability found below gamma = 1000",
            ));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if measure(mid)? >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Full stability report at `params.gamma`: eigenvalue profiles on the
/// trajectory grid, the line supremum and fixed-point limit of
/// `|lambda_D|`, the (gamma-independent) critical means, and the regime.
pub fn stability_profile(params: &SeParams, quad: &QuadratureSpec) -> Result<StabilityReport> {
    let stats = line_stats(params, quad)?;
    let mut lambda_k_profile = Vec::with_capacity(stats.v_grid.len());
    for &v in &stats.v_grid {
        lambda_k_profile.push(lambda_k(v, params, quad)?);
    }

    // The critical means follow from the gamma = 1 profile; when the report
    // itself is at gamma > 0 the exact gamma^2 scaling recovers them without
    // a second profile pass.
    let g = params.gamma.abs();
    let (gamma_c1, gamma_c2) = if g > 0.0 {
        if stats.sup_abs <= 0.0 || stats.fp_abs <= 0.0 {
            return Err(Error::invalid(
                "eigenvalue profile is identically zero; no finite critical mean exists",
            ));
        }
        (g / stats.sup_abs.sqrt(), g / stats.fp_abs.sqrt())
    } else {
        (
            critical_gamma(params, quad, ThresholdKind::Partial)?,
            critical_gamma(params, quad, ThresholdKind::Full)?,
        )
    };

    let regime = if stats.fp_abs >= 1.0 {
        Regime::FullyUnstable
    } else if stats.sup_abs >= 1.0 {
        Regime::PartiallyUnstable
    } else {
        Regime::Stable
    };

    Ok(StabilityReport {
        gamma: params.gamma,
        v_grid: stats.v_grid,
        lambda_d: stats.lambda,
        lambda_k: lambda_k_profile,
        sup_abs_lambda_d: stats.sup_abs,
        fixed_point_abs_lambda_d: stats.fp_abs,
        gamma_c1,
        gamma_c2,
        regime,
    })
}
