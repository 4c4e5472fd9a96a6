//! Bernoulli-Gaussian prior and the scalar posterior ("denoiser") it induces
//! under a Gaussian observation channel.
//!
//! The tilted measure is a two-component mixture: a point mass at zero and a
//! Gaussian slab, reweighted by the channel likelihood. All four connected
//! cumulants have closed forms in the mixture responsibility `p`, the slab
//! posterior mean `b` and variance `tau2`; those are what the solvers and the
//! state evolution consume. A brute-force quadrature oracle
//! ([`cumulant_by_quadrature`]) validates the closed forms along a completely
//! independent numerical path.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::rng::{seeded_rng, Stream};

/// Channel variances below this are clamped: the noiseless fixed point drives
/// the channel variance to `delta / alpha`, which combined with cancellation
/// can underflow for `delta = 1e-10`.
pub const SIGMA2_FLOOR: f64 = 1e-14;

/// Sparse spike-and-slab signal prior: mass `1 - rho` at zero, the rest
/// Gaussian with mean `slab_mean` and variance `slab_var`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    rho: f64,
    slab_mean: f64,
    slab_var: f64,
}

impl Prior {
    /// Standard zero-mean unit-variance slab with sparsity `rho`.
    ///
    /// `rho = 0` is accepted so that the sampler can produce all-zero
    /// signals; the solvers and the state evolution expect `rho > 0`.
    pub fn new(rho: f64) -> Result<Self> {
        Self::with_slab(rho, 0.0, 1.0)
    }

    pub fn with_slab(rho: f64, slab_mean: f64, slab_var: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) || !rho.is_finite() {
            return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
        }
        if !slab_mean.is_finite() {
            return Err(Error::invalid("slab_mean must be finite"));
        }
        if !slab_var.is_finite() || slab_var <= 0.0 {
            return Err(Error::invalid(format!(
                "slab_var must be positive and finite, got {slab_var}"
            )));
        }
        Ok(Self {
            rho,
            slab_mean,
            slab_var,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn slab_mean(&self) -> f64 {
        self.slab_mean
    }

    pub fn slab_var(&self) -> f64 {
        self.slab_var
    }

    /// Prior second moment, `rho * (slab_var + slab_mean^2)`.
    pub fn second_moment(&self) -> f64 {
        self.rho * (self.slab_var + self.slab_mean * self.slab_mean)
    }
}

/// Parameters of the Gaussian observation channel: `R` is the pseudo-data,
/// `sigma2` its variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedParams {
    sigma2: f64,
    r: f64,
}

impl TiltedParams {
    pub fn new(sigma2: f64, r: f64) -> Result<Self> {
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::invalid(format!(
                "channel variance must be positive and finite, got {sigma2}"
            )));
        }
        if !r.is_finite() {
            return Err(Error::invalid("channel mean must be finite"));
        }
        Ok(Self::clamped(sigma2, r))
    }

    /// Internal fast path: no finiteness checks, only the variance floor.
    /// Non-finite values propagate as NaN and are caught by the solvers'
    /// divergence detection.
    #[inline]
    pub(crate) fn clamped(sigma2: f64, r: f64) -> Self {
        Self {
            sigma2: sigma2.max(SIGMA2_FLOOR),
            r,
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

/// Posterior of a single signal component given one Gaussian pseudo-channel
/// observation. Construction does the shared work (mixture responsibility in
/// the log domain); the cumulants are then cheap closed forms.
#[derive(Debug, Clone, Copy)]
pub struct Posterior {
    /// Probability that the component comes from the slab.
    p: f64,
    /// Slab-conditional posterior mean.
    b: f64,
    /// Slab-conditional posterior variance.
    tau2: f64,
}

impl Posterior {
    pub fn new(prior: &Prior, params: TiltedParams) -> Self {
        let s2 = params.sigma2;
        let r = params.r;
        let sv = prior.slab_var;
        let sm = prior.slab_mean;
        let rho = prior.rho;

        let tau2 = sv * s2 / (sv + s2);
        let b = (r * sv + sm * s2) / (sv + s2);

        // Log-domain mixture weights: the spike weight involves
        // exp(-R^2 / (2 sigma2)), which underflows long before the slab
        // responsibility stops mattering.
        let log_spike = (1.0 - rho).ln() - 0.5 * r * r / s2 - 0.5 * s2.ln();
        let dm = r - sm;
        let log_slab = rho.ln() - 0.5 * dm * dm / (sv + s2) - 0.5 * (sv + s2).ln();
        let p = 1.0 / (1.0 + (log_spike - log_slab).exp());

        Self { p, b, tau2 }
    }

    #[inline]
    pub(crate) fn from_raw(prior: &Prior, sigma2: f64, r: f64) -> Self {
        Self::new(prior, TiltedParams::clamped(sigma2, r))
    }

    /// Posterior mean (first cumulant).
    #[inline]
    pub fn mean(&self) -> f64 {
        self.p * self.b
    }

    /// Posterior variance (second cumulant); nonnegative by construction.
    #[inline]
    pub fn variance(&self) -> f64 {
        self.p * self.tau2 + self.p * (1.0 - self.p) * self.b * self.b
    }

    #[inline]
    pub fn mean_and_variance(&self) -> (f64, f64) {
        (self.mean(), self.variance())
    }

    /// Third connected cumulant. Zero exactly for a pure-slab posterior and,
    /// with a symmetric prior, at `R = 0`.
    #[inline]
    pub fn third_cumulant(&self) -> f64 {
        let q = 1.0 - self.p;
        let b2 = self.b * self.b;
        self.p * q * self.b * (3.0 * self.tau2 + (q - self.p) * b2)
    }

    /// Fourth connected cumulant (excess-kurtosis numerator).
    #[inline]
    pub fn fourth_cumulant(&self) -> f64 {
        let p = self.p;
        let q = 1.0 - p;
        let pq = p * q;
        let b2 = self.b * self.b;
        let t = self.tau2;
        pq * ((1.0 - 6.0 * pq) * b2 * b2 + 6.0 * (q - p) * b2 * t + 3.0 * t * t)
    }

    /// Cumulants one through four.
    #[inline]
    pub fn cumulants(&self) -> [f64; 4] {
        [
            self.mean(),
            self.variance(),
            self.third_cumulant(),
            self.fourth_cumulant(),
        ]
    }

    /// Slab responsibility (useful in tests and diagnostics).
    pub fn slab_probability(&self) -> f64 {
        self.p
    }
}

/// Posterior mean under the tilted measure.
pub fn posterior_mean(prior: &Prior, params: TiltedParams) -> f64 {
    Posterior::new(prior, params).mean()
}

/// Posterior variance under the tilted measure.
pub fn posterior_variance(prior: &Prior, params: TiltedParams) -> f64 {
    Posterior::new(prior, params).variance()
}

/// Third connected cumulant of the tilted measure.
pub fn posterior_third_cumulant(prior: &Prior, params: TiltedParams) -> f64 {
    Posterior::new(prior, params).third_cumulant()
}

/// Fourth connected cumulant of the tilted measure.
pub fn posterior_fourth_cumulant(prior: &Prior, params: TiltedParams) -> f64 {
    Posterior::new(prior, params).fourth_cumulant()
}

/// `k`-th connected cumulant computed by direct adaptive quadrature over the
/// unnormalized tilted density, with the spike handled exactly.
///
/// This is the validation oracle for the closed forms: it never uses the
/// Gaussian-conjugacy algebra, only pointwise density evaluations. Accuracy
/// target is `1e-10` absolute or relative, whichever is looser.
pub fn cumulant_by_quadrature(prior: &Prior, params: TiltedParams, k: usize) -> Result<f64> {
    if !(1..=4).contains(&k) {
        return Err(Error::invalid(format!("cumulant order must be 1..=4, got {k}")));
    }

    let s2 = params.sigma2;
    let r = params.r;
    let sigma = s2.sqrt();
    let sv = prior.slab_var;
    let sm = prior.slab_mean;
    let s0 = sv.sqrt();
    let rho = prior.rho;

    let norm = |x: f64, mu: f64, var: f64| -> f64 {
        (-0.5 * (x - mu) * (x - mu) / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    };
    // Unnormalized slab density of the tilted measure.
    let slab = move |x: f64| rho * norm(x, sm, sv) * norm(x, r, s2);
    let spike_mass = (1.0 - rho) * norm(0.0, r, s2);

    // Panel breakpoints on both Gaussians' scales, so the adaptive rule never
    // straddles the (possibly very narrow) product peak unresolved.
    let mut cuts: Vec<f64> = Vec::with_capacity(84);
    for j in -20..=20 {
        cuts.push(sm + j as f64 * s0);
        cuts.push(r + j as f64 * sigma);
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let lo = sm.min(r) - 20.0 * s0.max(sigma);
    let hi = sm.max(r) + 20.0 * s0.max(sigma);
    let cuts: Vec<f64> = std::iter::once(lo)
        .chain(cuts.into_iter().filter(|&c| c > lo && c < hi))
        .chain(std::iter::once(hi))
        .collect();

    let integrate = |f: &mut dyn FnMut(f64) -> f64, tol: f64| -> Result<f64> {
        let mut total = 0.0;
        let per_panel = tol / cuts.len() as f64;
        for w in cuts.windows(2) {
            total += adaptive_simpson(&mut |x| f(x), w[0], w[1], per_panel, 40)?;
        }
        Ok(total)
    };

    // Coarse scale estimate for the normalization, then tight passes.
    let mut f0 = |x: f64| slab(x);
    let coarse = integrate(&mut f0, 1e-6)?;
    let scale = (coarse.abs() + spike_mass).max(1e-300);

    let z_slab = integrate(&mut |x| slab(x), 1e-13 * scale)?;
    let z = z_slab + spike_mass;
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::numerical(format!(
            "tilted measure has vanishing mass (Z = {z:.3e}); cannot normalize"
        )));
    }

    let m1_slab = integrate(&mut |x| x * slab(x), 1e-13 * scale)?;
    let mean = m1_slab / z; // spike contributes x = 0

    if k == 1 {
        return Ok(mean);
    }

    // Central moments about the mixture mean; the spike contributes
    // (0 - mean)^k exactly.
    let central = |kk: i32, tol: f64| -> Result<f64> {
        let mut f = |x: f64| (x - mean).powi(kk) * slab(x);
        let slab_part = integrate(&mut f, tol)?;
        Ok((slab_part + (-mean).powi(kk) * spike_mass) / z)
    };

    let c2 = central(2, 1e-13 * scale)?;
    match k {
        2 => Ok(c2),
        3 => central(3, 1e-13 * scale),
        4 => {
            let c4 = central(4, 1e-13 * scale)?;
            Ok(c4 - 3.0 * c2 * c2)
        }
        _ => unreachable!(),
    }
}

/// Draws `n` iid samples from the prior, deterministically in `seed`.
pub fn sample_signal(prior: &Prior, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed, Stream::Signal);
    let sd = prior.slab_var.sqrt();
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < prior.rho {
                let z: f64 = rng.sample(StandardNormal);
                prior.slab_mean + sd * z
            } else {
                0.0
            }
        })
        .collect()
}
