//! The St. Petersburg two-envelope problem, truncated at a maximum
//! coin-flip count.
//!
//! Two equivalent formulations are built from the same dyadic masses:
//!
//! - **pure**: a one-point state space whose observable carries effect
//!   `2^-k` on outcome `2^k`;
//! - **statistical**: the state space `{2^1, …, 2^k_max}` with a
//!   deterministic identity observable and prior mass `2^-m` on `2^m`.
//!
//! Untruncated masses are exact binary fractions; the truncated model
//! renormalizes over `k ≤ k_max` and records the excluded tail `2^-k_max`.
//! Expectations report the pre-normalization partial sum (which grows by
//! exactly 1 per extra level for the dollar payoff) together with a
//! divergence flag for the untruncated series.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{kahan_sum, KahanSum, MixedState, PureState, StateSpace};
use crate::measurement::{
    outcome_distribution_pure, outcome_distribution_statistical, sample_distribution,
    OutcomeDistribution, RngStream, RNG_ALGORITHM,
};
use crate::observable::{deterministic_observable, Observable, Outcome};
use crate::report::{StpExperimentRecord, StpStratum, SwitchAdvice};

/// Deepest representable truncation: beyond this the dyadic masses lose
/// exactness in binary floating point.
pub const MAX_K: u32 = 60;

/// Whether the dyadic masses sit in the observable (pure) or in the
/// prior over a deterministic observable (statistical).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StpFormulation {
    Pure,
    Statistical,
}

impl StpFormulation {
    pub fn name(&self) -> &'static str {
        match self {
            StpFormulation::Pure => "pure",
            StpFormulation::Statistical => "statistical",
        }
    }
}

/// How outcomes are labelled in reports: dollar amounts, or the pin
/// intervals `(2^-k, 2^(1-k)]` worth `2^k` each. The distribution is the
/// same either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StpLabeling {
    Dollars,
    Pins,
}

impl StpLabeling {
    pub fn name(&self) -> &'static str {
        match self {
            StpLabeling::Dollars => "dollars",
            StpLabeling::Pins => "pins",
        }
    }

    pub fn label(&self, k: u32) -> String {
        match self {
            StpLabeling::Dollars => format!("$2^{k}"),
            StpLabeling::Pins => format!("pin P{k} = (2^-{k}, 2^{}] worth $2^{k}", 1 - k as i64),
        }
    }
}

/// State preparation of the model.
#[derive(Debug, Clone)]
pub enum StpPreparation {
    Pure(PureState),
    Statistical(MixedState),
}

/// A truncated St. Petersburg model.
#[derive(Debug, Clone)]
pub struct StPetersburgModel {
    k_max: u32,
    formulation: StpFormulation,
    labeling: StpLabeling,
    observable: Observable,
    prep: StpPreparation,
    raw_masses: Vec<f64>,
    tail_mass: f64,
}

/// Exact dyadic masses `2^-k` for `k = 1..=k_max`, their renormalized
/// versions, and the normalization constant `1 - 2^-k_max`.
fn truncated_dyadic_masses(k_max: u32) -> (Vec<f64>, Vec<f64>, f64) {
    let raw: Vec<f64> = (1..=k_max).map(|k| 0.5f64.powi(k as i32)).collect();
    let norm = kahan_sum(raw.iter().copied());
    let probs = raw.iter().map(|&m| m / norm).collect();
    (raw, probs, norm)
}

/// Build the truncated model in the requested formulation.
pub fn build_stp(formulation: StpFormulation, k_max: u32) -> Result<StPetersburgModel> {
    build_stp_with_labeling(formulation, k_max, StpLabeling::Dollars)
}

pub fn build_stp_with_labeling(
    formulation: StpFormulation,
    k_max: u32,
    labeling: StpLabeling,
) -> Result<StPetersburgModel> {
    if k_max == 0 {
        return Err(Error::Domain("need k_max >= 1".into()));
    }
    if k_max > MAX_K {
        return Err(Error::Domain(format!(
            "k_max = {k_max} exceeds {MAX_K}, beyond which dyadic masses lose exactness"
        )));
    }
    let (raw, probs, _) = truncated_dyadic_masses(k_max);
    let outcomes: Vec<Outcome> = (1..=k_max)
        .map(|k| Outcome::real(2.0f64.powi(k as i32)))
        .collect();
    let tail_mass = 0.5f64.powi(k_max as i32);

    let (observable, prep) = match formulation {
        StpFormulation::Pure => {
            let space = StateSpace::new(vec![0.0], vec![1.0])?;
            let row = probs
                .iter()
                .enumerate()
                .map(|(i, &p)| (i as u32, p))
                .collect();
            let o = Observable::new(Arc::clone(&space), outcomes, vec![row])?;
            let s = PureState::new(&space, 0)?;
            (o, StpPreparation::Pure(s))
        }
        StpFormulation::Statistical => {
            let points: Vec<f64> = (1..=k_max).map(|k| 2.0f64.powi(k as i32)).collect();
            let weights = vec![1.0; k_max as usize];
            let space = StateSpace::new(points, weights)?;
            let o = deterministic_observable(&space, |w| w)?;
            let rho = MixedState::new(Arc::clone(&space), probs)?;
            (o, StpPreparation::Statistical(rho))
        }
    };
    Ok(StPetersburgModel {
        k_max,
        formulation,
        labeling,
        observable,
        prep,
        raw_masses: raw,
        tail_mass,
    })
}

impl StPetersburgModel {
    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    pub fn formulation(&self) -> StpFormulation {
        self.formulation
    }

    pub fn labeling(&self) -> StpLabeling {
        self.labeling
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    pub fn preparation(&self) -> &StpPreparation {
        &self.prep
    }

    /// Pre-normalization masses `2^-k`, exact.
    pub fn raw_masses(&self) -> &[f64] {
        &self.raw_masses
    }

    /// Probability excluded by truncation, exactly `2^-k_max`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// The measured-value law via the matching measurement route. Both
    /// formulations produce the identical table.
    pub fn distribution(&self) -> Result<OutcomeDistribution> {
        match &self.prep {
            StpPreparation::Pure(s) => outcome_distribution_pure(&self.observable, *s),
            StpPreparation::Statistical(rho) => {
                outcome_distribution_statistical(&self.observable, rho)
            }
        }
    }
}

/// A truncated expectation with its divergence verdict for the
/// untruncated series.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TruncatedExpectation {
    /// `Σ_{k<=k_max} payoff(2^k)·2^-k` over the pre-normalization masses.
    pub partial_sum: f64,
    /// The same sum over renormalized masses (what empirical means of the
    /// truncated model estimate).
    pub renormalized: f64,
    /// Whether the untruncated series diverges.
    pub diverges: bool,
    pub k_max: u32,
}

/// Truncated expectation of the dollar payoff. Each term contributes
/// `2^k·2^-k = 1`, so the partial sum equals `k_max` exactly and the
/// untruncated series diverges.
pub fn stp_truncated_expectation(model: &StPetersburgModel) -> TruncatedExpectation {
    stp_truncated_expectation_with(model, |x| x)
}

/// Truncated expectation of an arbitrary payoff of the dollar amount.
///
/// The divergence flag is decided by a ratio probe on terms beyond the
/// truncation: the tail of `payoff(2^k)·2^-k` is summable when the term
/// ratios settle below 1, and divergent when they do not (the dollar
/// payoff gives constant terms, ratio exactly 1).
pub fn stp_truncated_expectation_with<F>(
    model: &StPetersburgModel,
    payoff: F,
) -> TruncatedExpectation
where
    F: Fn(f64) -> f64,
{
    let term = |k: u32| payoff(2.0f64.powi(k as i32)) * 0.5f64.powi(k as i32);
    let mut partial = KahanSum::default();
    for k in 1..=model.k_max {
        partial.add(term(k));
    }
    let norm = kahan_sum(model.raw_masses.iter().copied());

    let probe_end = model.k_max.max(8) + 8;
    let mut diverges = false;
    for k in (probe_end - 4)..probe_end {
        let a = term(k).abs();
        let b = term(k + 1).abs();
        let ratio = if a == 0.0 {
            if b == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            b / a
        };
        if ratio >= 1.0 - 1e-9 {
            diverges = true;
        }
    }

    TruncatedExpectation {
        partial_sum: partial.value(),
        renormalized: partial.value() / norm,
        diverges,
        k_max: model.k_max,
    }
}

/// The probability that the unopened envelope beats an observed `2^m`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbOtherGreater {
    pub m: u32,
    /// Untruncated value, exactly `2^-m`.
    pub exact: f64,
    /// The same probability under the truncated model.
    pub truncated: f64,
}

/// `P(y > 2^m)` for the untruncated model (`2^-m` exactly) and for this
/// model's truncation.
pub fn stp_prob_other_greater(model: &StPetersburgModel, m: u32) -> Result<ProbOtherGreater> {
    if m == 0 {
        return Err(Error::Domain("need m >= 1".into()));
    }
    if m > 1000 {
        return Err(Error::Domain(format!("m = {m} out of range")));
    }
    let exact = 0.5f64.powi(m as i32);
    let d = model.distribution()?;
    let threshold = 2.0f64.powi(m as i32);
    let truncated = if m >= model.k_max {
        0.0
    } else {
        d.prob_where(|x| x.as_real().is_some_and(|v| v > threshold))
    };
    Ok(ProbOtherGreater { m, exact, truncated })
}

/// Both verdicts on "should you switch", side by side: the expectation
/// criterion says yes, the probability criterion says it rarely helps.
/// Neither is endorsed; the truncation caveat is always attached.
pub fn switch_advice(model: &StPetersburgModel) -> SwitchAdvice {
    let expectation = stp_truncated_expectation(model);
    SwitchAdvice {
        expectation_criterion: "switch: the untruncated expectation of the unopened envelope \
is infinite, which exceeds any observed amount"
            .into(),
        probability_criterion:
            "P(other > 2^m) = 2^-m after observing 2^m: switching rarely helps for large \
observed amounts"
                .into(),
        caveat: format!(
            "model truncated at k_max = {}: tail mass {} excluded; the truncated expectation \
is {} and grows by 1 per extra level",
            model.k_max, model.tail_mass, expectation.renormalized
        ),
    }
}

/// Paired experiment: `trials` i.i.d. draws of `(x, y)`, with per-stratum
/// statistics conditioning on the observed first value `x = 2^m`.
pub fn stp_parallel_experiment(
    model: &StPetersburgModel,
    trials: usize,
    rng: RngStream,
) -> Result<StpExperimentRecord> {
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let d = model.distribution()?;
    // A pair draw is two independent draws of the same measurement; the
    // joint law is the product, so alternating a single stream over
    // (x, y, x, y, …) realizes it.
    let draws = sample_distribution(&d, rng, 2 * trials);

    let km = model.k_max as usize;
    let mut count = vec![0u64; km];
    let mut sum_y = vec![KahanSum::default(); km];
    let mut sumsq_y = vec![KahanSum::default(); km];
    let mut y_gt = vec![0u64; km];
    let mut y_gt_x_total = 0u64;
    let mut x_gt_y_total = 0u64;

    for pair in draws.chunks_exact(2) {
        let x = pair[0].as_real().expect("scalar outcome");
        let y = pair[1].as_real().expect("scalar outcome");
        // Outcomes are sorted powers of two, so index k-1 holds 2^k.
        let m = d.outcomes().binary_search(&pair[0]).expect("in support");
        count[m] += 1;
        sum_y[m].add(y);
        sumsq_y[m].add(y * y);
        if y > x {
            y_gt[m] += 1;
            y_gt_x_total += 1;
        } else if x > y {
            x_gt_y_total += 1;
        }
    }

    let mut strata = Vec::with_capacity(km);
    for (i, &c) in count.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let m = (i + 1) as u32;
        let n = c as f64;
        let mean = sum_y[i].value() / n;
        let var = (sumsq_y[i].value() / n - mean * mean).max(0.0);
        let exact = stp_prob_other_greater(model, m)?;
        strata.push(StpStratum {
            m,
            label: model.labeling.label(m),
            count: c,
            mean_other: mean,
            se_other: (var / n).sqrt(),
            p_other_greater_empirical: y_gt[i] as f64 / n,
            p_other_greater_truncated: exact.truncated,
            p_other_greater_exact: exact.exact,
        });
    }

    let expectation = stp_truncated_expectation(model);
    let advice = switch_advice(model);

    Ok(StpExperimentRecord {
        model: "stpetersburg".into(),
        formulation: model.formulation.name().into(),
        labeling: model.labeling.name().into(),
        k_max: model.k_max,
        tail_mass: model.tail_mass,
        trials: trials as u64,
        rng_algorithm: RNG_ALGORITHM.into(),
        rng,
        truncated_expectation: expectation.renormalized,
        divergence_flag: expectation.diverges,
        p_other_greater_overall: y_gt_x_total as f64 / trials as f64,
        p_first_greater_overall: x_gt_y_total as f64 / trials as f64,
        strata,
        advice,
    })
}
