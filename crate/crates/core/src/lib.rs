//! Bayes-optimal approximate message passing for compressed sensing with
//! non-zero-mean measurement matrices.
//!
//! Measurement matrices whose entries have a common mean `gamma/N` make plain
//! AMP unstable even though nothing in its update equations refers to the
//! mean. This crate provides the pieces needed to study and work around that:
//!
//! - [`denoiser`]: the Bernoulli-Gaussian scalar posterior and its first four
//!   connected cumulants, with an independent quadrature oracle.
//! - [`instance`]: synthetic problem generation with a controllable matrix
//!   mean, and the mean-removal preprocessing transform.
//! - [`amp`]: the parallel AMP iteration with Onsager correction, optional
//!   damping, and order-parameter traces.
//! - [`rbp`]: relaxed belief propagation with per-edge messages, under both
//!   a parallel and a random-sequential update schedule.
//! - [`evolution`]: the three-parameter state evolution `(E, V, D)`, the
//!   Nishimori-line restriction, the stability eigenvalues of its
//!   linearization, and the critical matrix-mean thresholds.
//! - [`experiment`]: a reproducible sweep harness emitting plot-ready
//!   CSV/JSON, also exposed through the `ampse` command-line binary.
//!
//! The `examples/` directory contains one runnable program per capability;
//! start there.

pub mod amp;
pub mod denoiser;
mod error;
pub mod evolution;
pub mod experiment;
pub mod instance;
pub mod mat;
pub mod quadrature;
pub mod rbp;
mod rng;

pub use error::{Error, Result};

pub use amp::{AmpConfig, AmpState, AmpTrace, SolverStatus};
pub use denoiser::{Prior, TiltedParams};
pub use instance::ProblemInstance;
