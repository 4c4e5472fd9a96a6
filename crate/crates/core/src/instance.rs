//! Synthetic compressed-sensing instances `y = F s + xi` with a controllable
//! measurement-matrix mean, plus the mean-removal preprocessing transform.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::denoiser::{sample_signal, Prior};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng::{seeded_rng, Stream};

/// One measurement problem. Immutable after construction; `y = F s + xi`
/// holds by construction (exactly when `delta = 0`).
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    f: Mat,
    s: Vec<f64>,
    y: Vec<f64>,
    delta: f64,
    gamma: f64,
    seed: u64,
    /// Elementwise square of `F`, built on first use; it appears in three of
    /// the message-passing update equations.
    f_sq: OnceLock<Mat>,
}

impl ProblemInstance {
    /// Generates an instance with matrix entries `gamma/N + N(0,1)/sqrt(N)`,
    /// a signal drawn from `prior`, and measurement noise of variance
    /// `delta`. Fully deterministic in `seed`; the matrix, signal, and noise
    /// come from separate sub-streams so changing `delta` never changes `F`
    /// or `s`.
    pub fn generate(
        n: usize,
        m: usize,
        gamma: f64,
        delta: f64,
        prior: &Prior,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("matrix dimensions must be at least 1"));
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::invalid(format!(
                "noise variance must be finite and nonnegative, got {delta}"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::invalid("gamma must be finite"));
        }

        let shift = gamma / n as f64;
        let scale = 1.0 / (n as f64).sqrt();
        let mut mrng = seeded_rng(seed, Stream::Matrix);
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m * n {
            let g: f64 = mrng.sample(StandardNormal);
            data.push(shift + scale * g);
        }
        let f = Mat::from_vec(m, n, data);

        let s = sample_signal(prior, n, seed);

        let mut y = vec![0.0; m];
        f.mul_vec(&s, &mut y);
        if delta > 0.0 {
            let sd = delta.sqrt();
            let mut nrng = seeded_rng(seed, Stream::Noise);
            for v in &mut y {
                let g: f64 = nrng.sample(StandardNormal);
                *v += sd * g;
            }
        }

        Ok(Self {
            f,
            s,
            y,
            delta,
            gamma,
            seed,
            f_sq: OnceLock::new(),
        })
    }

    /// Builds an instance from parts (used by the loader and in tests).
    pub fn from_parts(f: Mat, s: Vec<f64>, y: Vec<f64>, delta: f64, gamma: f64, seed: u64) -> Result<Self> {
        if s.len() != f.cols() {
            return Err(Error::LengthMismatch {
                expected: f.cols(),
                actual: s.len(),
            });
        }
        if y.len() != f.rows() {
            return Err(Error::LengthMismatch {
                expected: f.rows(),
                actual: y.len(),
            });
        }
        Ok(Self {
            f,
            s,
            y,
            delta,
            gamma,
            seed,
            f_sq: OnceLock::new(),
        })
    }

    /// Removes the empirical column means from `F` and the grand mean from
    /// `y`, mapping a non-zero-mean problem onto an equivalent zero-mean one.
    /// For a noiseless instance the identity `y' = F' s` is exact up to
    /// rounding. The ground truth is unchanged; the stored `gamma` of the
    /// result is zero since the transformed matrix is centered.
    pub fn mean_removed(&self) -> Self {
        let m = self.f.rows();
        let n = self.f.cols();
        let col_means = self.f.col_means();
        let y_mean = self.y.iter().sum::<f64>() / m as f64;

        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for (c, &v) in self.f.row(r).iter().enumerate() {
                data.push(v - col_means[c]);
            }
        }
        Self {
            f: Mat::from_vec(m, n, data),
            s: self.s.clone(),
            y: self.y.iter().map(|&v| v - y_mean).collect(),
            delta: self.delta,
            gamma: 0.0,
            seed: self.seed,
            f_sq: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &Mat {
        &self.f
    }

    /// Elementwise square of the measurement matrix, computed once and cached.
    pub fn matrix_squared(&self) -> &Mat {
        self.f_sq.get_or_init(|| self.f.map(|v| v * v))
    }

    pub fn signal(&self) -> &[f64] {
        &self.s
    }

    pub fn measurements(&self) -> &[f64] {
        &self.y
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Overrides the stored matrix-mean annotation. The solvers never read
    /// it, which a test exploits to show they have no explicit dependence on
    /// the matrix mean.
    pub fn set_gamma_annotation(&mut self, gamma: f64) {
        self.gamma = gamma;
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.f.cols()
    }

    pub fn m(&self) -> usize {
        self.f.rows()
    }

    /// Undersampling ratio `alpha = M/N`.
    pub fn alpha(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }
}

/// Mean squared error `(1/N) Σ (s_i - a_i)^2`.
pub fn mse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: estimate.len(),
        });
    }
    Ok(mse_unchecked(estimate, truth))
}

#[inline]
pub(crate) fn mse_unchecked(estimate: &[f64], truth: &[f64]) -> f64 {
    debug_assert_eq!(estimate.len(), truth.len());
    let n = truth.len().max(1);
    estimate
        .iter()
        .zip(truth.iter())
        .map(|(a, s)| (s - a) * (s - a))
        .sum::<f64>()
        / n as f64
}

/// Mean signed bias `(1/N) Σ (s_i - a_i)` — the order parameter that a
/// non-zero matrix mean couples to.
pub fn mean_bias(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: estimate.len(),
        });
    }
    Ok(mean_bias_unchecked(estimate, truth))
}

#[inline]
pub(crate) fn mean_bias_unchecked(estimate: &[f64], truth: &[f64]) -> f64 {
    debug_assert_eq!(estimate.len(), truth.len());
    let n = truth.len().max(1);
    estimate
        .iter()
        .zip(truth.iter())
        .map(|(a, s)| s - a)
        .sum::<f64>()
        / n as f64
}

/// JSON header for the instance dump format.
#[derive(Debug, Serialize, Deserialize)]
struct InstanceHeader {
    schema_version: u32,
    m: usize,
    n: usize,
    gamma: f64,
    delta: f64,
    rho: f64,
    seed: u64,
}

const INSTANCE_SCHEMA_VERSION: u32 = 1;

/// Dumps an instance for reproducibility audits: one JSON header line
/// (shape, gamma, delta, rho, seed) followed by little-endian `f64` data for
/// `F` (row-major), `s`, and `y`.
pub fn save_instance(inst: &ProblemInstance, rho: f64, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = InstanceHeader {
        schema_version: INSTANCE_SCHEMA_VERSION,
        m: inst.m(),
        n: inst.n(),
        gamma: inst.gamma,
        delta: inst.delta,
        rho,
        seed: inst.seed,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for &v in inst.f.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in &inst.s {
        w.write_all(&v.to_le_bytes())?;
    }
    for &v in &inst.y {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a dumped instance; returns it together with the recorded sparsity.
pub fn load_instance(path: &Path) -> Result<(ProblemInstance, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
        if header_line.len() > 1 << 16 {
            return Err(Error::Format("instance header exceeds 64 KiB".into()));
        }
    }
    let header: InstanceHeader = serde_json::from_slice(&header_line)?;
    if header.schema_version != INSTANCE_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported instance schema version {}",
            header.schema_version
        )));
    }

    let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let f = Mat::from_vec(header.m, header.n, read_f64s(header.m * header.n)?);
    let s = read_f64s(header.n)?;
    let y = read_f64s(header.m)?;
    let inst = ProblemInstance::from_parts(f, s, y, header.delta, header.gamma, header.seed)?;
    Ok((inst, header.rho))
}
