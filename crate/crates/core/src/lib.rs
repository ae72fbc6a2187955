//! Successive Bayesian reconstruction of flexible-antenna (FAS) port channels.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] generates port channels and simulates pilot reception through a
//!   port schedule (switch matrix).
//! * [`kernels`] builds the prior covariance matrices used by the regression.
//! * [`gp`] is the complex Gaussian conditioning engine and the generic
//!   sequential max-variance regression loop.
//! * [`sbar`] splits the regression into an offline plan (port schedule plus
//!   weight matrix) and an online weighted sum.
//! * [`baselines`] holds the comparison estimators (OMP, alternating ML,
//!   equally-spaced zero-order hold).
//! * [`analysis`] contains the closed-form MSE expressions, NMSE bookkeeping and
//!   the Monte Carlo experiment engine.
//! * [`config`] and [`cli`] drive experiments from text configuration files.
//!
//! Port indices are 0-based in the Rust API. User-facing text (CLI output,
//! error messages) reports them 1-based.

pub mod analysis;
pub mod baselines;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod sbar;
pub mod seed;
pub mod special;

pub use error::{Result, SbarError};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
