//! Serializable experiment records.
//!
//! Every record carries enough metadata (seed, stream, grid and density
//! parameters) to re-run the experiment to bit-identical results. Records
//! serialize to JSON via serde; running-average traces also serialize to
//! CSV with columns `n, avg_you, avg_host`.

use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};
use crate::measurement::RngStream;

/// One row of a running-average trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LlnTraceRow {
    pub n: u64,
    pub avg_you: f64,
    pub avg_host: f64,
}

/// Record of a repeated paired-envelope measurement: running averages of
/// what you and the host receive, both converging to the midpoint of the
/// two payouts.
#[derive(Debug, Clone, Serialize)]
pub struct LlnRecord {
    pub model: String,
    pub v1: f64,
    pub v2: f64,
    pub target_mean: f64,
    pub trials: u64,
    pub rng_algorithm: String,
    pub rng: RngStream,
    pub final_avg_you: f64,
    pub final_avg_host: f64,
    pub trace: Vec<LlnTraceRow>,
}

impl LlnRecord {
    /// Write the trace as CSV with header `n,avg_you,avg_host`.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "avg_you", "avg_host"])
            .map_err(|e| Error::Domain(format!("csv write failed: {e}")))?;
        for row in &self.trace {
            out.serialize((row.n, row.avg_you, row.avg_host))
                .map_err(|e| Error::Domain(format!("csv write failed: {e}")))?;
        }
        out.flush().map_err(|e| Error::Domain(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// The deliberately fallacious "expected value of the other envelope".
///
/// Computes `1.25·α` exactly as the folk argument does; the annotation
/// states why that argument is not valid reasoning.
#[derive(Debug, Clone, Serialize)]
pub struct NaiveExpectation {
    pub alpha: f64,
    pub e_other: f64,
    pub annotation: String,
}

/// Grid metadata embedded in Bayesian reports.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridInfo {
    pub min_exp: i32,
    pub max_exp: i32,
    pub points_per_octave: usize,
    pub points: usize,
}

/// Prior metadata embedded in Bayesian reports.
#[derive(Debug, Clone, Serialize)]
pub struct PriorInfo {
    pub density: String,
    pub params: Vec<f64>,
    /// Prior mass the grid actually covers (pre-normalization integral).
    pub covered_mass: f64,
    /// Mass lost to truncation, if the density is a normalized pdf.
    pub truncated_mass: f64,
    pub mean: f64,
    pub finite_mean: Option<bool>,
}

/// Two-atom posterior weights after observing `α`: the other envelope
/// holds `α/2` or `2α`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PosteriorWeights {
    pub other_half: f64,
    pub other_double: f64,
}

/// Monte Carlo cross-check of the unconditional switching gain.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McCrossCheck {
    pub trials: u64,
    pub rng: RngStream,
    pub mean_gain: f64,
    pub std_error: f64,
}

/// Full report of the Bayesian envelope analysis at a measured value.
#[derive(Debug, Clone, Serialize)]
pub struct BayesReport {
    pub model: String,
    pub grid: GridInfo,
    pub prior: PriorInfo,
    pub alpha: f64,
    /// Outcome density at `α` (atom probability over cell width).
    pub p_alpha: f64,
    /// Raw atom probability of measuring exactly `α` on the grid.
    pub alpha_probability: f64,
    pub posterior_weights: PosteriorWeights,
    /// Posterior-weighted gain of switching after observing `α`:
    /// `(-α/2)·w_half + α·w_double`. Generally nonzero.
    pub conditional_gain: f64,
    /// Gain aggregated over the measured-value law. Zero up to rounding.
    pub unconditional_gain: f64,
    pub unconditional_gain_bound: f64,
    /// Set when the prior's untruncated mean is not known to be finite,
    /// in which case the zero-gain aggregate is a truncation artifact.
    pub divergence_warning: bool,
    pub seed: u64,
    pub monte_carlo: Option<McCrossCheck>,
}

/// Per-stratum statistics of a paired St. Petersburg experiment,
/// conditioning on the observed first-envelope value.
#[derive(Debug, Clone, Serialize)]
pub struct StpStratum {
    pub m: u32,
    pub label: String,
    pub count: u64,
    pub mean_other: f64,
    pub se_other: f64,
    pub p_other_greater_empirical: f64,
    pub p_other_greater_truncated: f64,
    pub p_other_greater_exact: f64,
}

/// The two verdicts of the St. Petersburg switching question.
#[derive(Debug, Clone, Serialize)]
pub struct SwitchAdvice {
    pub expectation_criterion: String,
    pub probability_criterion: String,
    pub caveat: String,
}

/// Record of a paired St. Petersburg experiment.
#[derive(Debug, Clone, Serialize)]
pub struct StpExperimentRecord {
    pub model: String,
    pub formulation: String,
    pub labeling: String,
    pub k_max: u32,
    pub tail_mass: f64,
    pub trials: u64,
    pub rng_algorithm: String,
    pub rng: RngStream,
    pub truncated_expectation: f64,
    pub divergence_flag: bool,
    pub p_other_greater_overall: f64,
    pub p_first_greater_overall: f64,
    pub strata: Vec<StpStratum>,
    pub advice: SwitchAdvice,
}
