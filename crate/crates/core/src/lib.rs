//! Discrete measurement-theoretic probability, built around three ideas:
//!
//! - a **state space** is a finite grid of labelled cells with positive
//!   measure weights ([`measure::StateSpace`]);
//! - an **observable** assigns to every grid cell a sub-probability weight
//!   per outcome, with unit row sums ([`observable::Observable`]);
//! - a **measurement** samples an outcome with probability given by the
//!   effect at a known cell (pure) or averaged over a mass vector (mixed)
//!   ([`measurement`]).
//!
//! On top of that substrate sit maximum-likelihood and Bayes inference
//! ([`inference`]) and two families of ready-made models: the two-envelope
//! exchange problem in its naive, pure, long-run, and Bayesian readings
//! ([`envelope`]), and the St. Petersburg two-envelope problem with
//! truncation-aware expectations ([`stpetersburg`]).
//!
//! All types are immutable after construction and safe to share across
//! threads. Sampling is reproducible: a [`measurement::RngStream`] names a
//! (seed, stream) pair and always yields the same sequence.

pub mod envelope;
pub mod error;
pub mod inference;
pub mod measure;
pub mod measurement;
pub mod observable;
pub mod report;
pub mod stats;
pub mod stpetersburg;

pub use error::Error;

/// Library version, embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default absolute tolerance for probability-mass comparisons.
pub const MASS_TOL: f64 = 1e-9;
