//! Gaussian quadrature machinery shared by the state-evolution integrals and
//! the denoiser validation oracle.
//!
//! Two independent integrators live here on purpose: the state evolution uses
//! Gauss-Hermite rules (spectrally accurate for smooth Gaussian-weighted
//! integrands), while the oracle uses adaptive Simpson panels so that its
//! numerical path shares nothing with the closed forms it validates.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// A Gauss-Hermite rule expressed against the standard normal measure:
/// `E[f(Z)] ≈ Σ prob[i] · f(node[i])` for `Z ~ N(0,1)`.
///
/// Tables are immutable after construction and shared behind `Arc`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    probs: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule. Nodes are symmetric about zero, ascending.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("Gauss-Hermite rule needs at least 2 nodes"));
        }
        let (x, w) = hermite_nodes_weights(n)?;
        let sqrt_pi = std::f64::consts::PI.sqrt();
        // Physicists' rule integrates against exp(-x^2); substituting
        // z = sqrt(2) x turns it into an expectation over N(0,1).
        let nodes = x.iter().map(|&xi| std::f64::consts::SQRT_2 * xi).collect();
        let probs = w.iter().map(|&wi| wi / sqrt_pi).collect();
        Ok(Self { nodes, probs })
    }

    /// Cached shared rule for a node count.
    pub fn shared(n: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().unwrap().get(&n) {
            return Ok(rule.clone());
        }
        let rule = Arc::new(Self::new(n)?);
        cache.lock().unwrap().insert(n, rule.clone());
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Standard-normal nodes paired with their probability weights.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.probs.iter().copied())
    }

    /// `E[f(X)]` for `X ~ N(mean, sd^2)`.
    pub fn expect(&self, mean: f64, sd: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.points().map(|(z, p)| p * f(mean + sd * z)).sum()
    }
}

/// Physicists' Gauss-Hermite nodes and weights for `∫ e^(-x²) f(x) dx`,
/// by Golub-Welsch: nodes are the eigenvalues of the symmetric tridiagonal
/// Jacobi matrix of the Hermite recurrence, weights come from the first
/// component of each eigenvector times the total measure `sqrt(pi)`.
fn hermite_nodes_weights(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut d = vec![0.0; n]; // Hermite Jacobi diagonal is zero
    let mut e: Vec<f64> = (1..n).map(|i| (i as f64 / 2.0).sqrt()).collect();
    e.push(0.0);
    let mut first_row = vec![0.0; n];
    first_row[0] = 1.0;

    symtri_eig_first_row(&mut d, &mut e, &mut first_row)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let x: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let w: Vec<f64> = order
        .iter()
        .map(|&i| sqrt_pi * first_row[i] * first_row[i])
        .collect();
    Ok((x, w))
}

/// Implicit-shift QL for a symmetric tridiagonal matrix, accumulating only
/// the first row of the eigenvector matrix (all Golub-Welsch needs).
/// `d` holds the diagonal (eigenvalues on return), `e` the subdiagonal in
/// `e[0..n-1]` with `e[n-1]` scratch.
fn symtri_eig_first_row(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Locate a negligible subdiagonal element.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::numerical(
                    "tridiagonal QL failed to converge in 50 iterations",
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Gauss-Legendre rule on `[-1, 1]`: `∫ f ≈ Σ w[i] f(x[i])`, `Σ w = 2`.
///
/// Used as the per-panel rule of the feature-aware panel integrator in the
/// state evolution.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("Gauss-Legendre rule needs at least 2 nodes"));
        }
        // Golub-Welsch on the Legendre Jacobi matrix: zero diagonal,
        // off-diagonal k / sqrt(4k^2 - 1), total measure 2.
        let mut d = vec![0.0; n];
        let mut e: Vec<f64> = (1..n)
            .map(|k| {
                let kf = k as f64;
                kf / (4.0 * kf * kf - 1.0).sqrt()
            })
            .collect();
        e.push(0.0);
        let mut first_row = vec![0.0; n];
        first_row[0] = 1.0;
        symtri_eig_first_row(&mut d, &mut e, &mut first_row)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
        Ok(Self {
            nodes: order.iter().map(|&i| d[i]).collect(),
            weights: order
                .iter()
                .map(|&i| 2.0 * first_row[i] * first_row[i])
                .collect(),
        })
    }

    /// Cached shared rule for a node count.
    pub fn shared(n: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().unwrap().get(&n) {
            return Ok(rule.clone());
        }
        let rule = Arc::new(Self::new(n)?);
        cache.lock().unwrap().insert(n, rule.clone());
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights on `[-1, 1]`.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Adaptive Simpson integration of `f` over `[a, b]`.
///
/// `tol` is an absolute tolerance for the whole interval; it is split across
/// recursive halves the standard way. Returns an error when the recursion
/// bottoms out before the local error estimate is met.
pub fn adaptive_simpson(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    let fa = f(a);
    let fb = f(b);
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let mid = 0.5 * (a + b);
    let lm = 0.5 * (a + mid);
    let rm = 0.5 * (mid + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (mid - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - mid) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Accept when the local error target is met, or when the interval has
    // reached floating-point resolution and cannot be subdivided usefully.
    let resolution = 8.0 * f64::EPSILON * (a.abs().max(b.abs()) + 1.0);
    if delta.abs() <= 15.0 * tol || (b - a).abs() <= resolution {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::numerical(format!(
            "adaptive Simpson failed to converge on [{a}, {b}] (residual {:.3e})",
            delta.abs()
        )));
    }
    let l = simpson_rec(f, a, mid, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_rec(f, mid, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}
