//! State inference from a measured value: maximum-likelihood over the
//! grid, Bayes posterior updating, and the posterior-weighted switching
//! gain of the envelope models.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::{KahanSum, MixedState, PureState};
use crate::observable::{Observable, Outcome};

/// Normalized likelihood of a measured value over the grid.
///
/// `likelihood[i] = e[i][x] / sup_j e[j][x]`, so it attains 1 exactly on
/// the maximizer set. Cells with likelihood 0 are excluded: the observed
/// value cannot have come from them.
#[derive(Debug, Clone)]
pub struct MleResult {
    likelihood: Vec<f64>,
    maximizers: Vec<usize>,
}

impl MleResult {
    pub fn likelihood(&self) -> &[f64] {
        &self.likelihood
    }

    /// All cells where the normalized likelihood attains 1. Ties are
    /// returned as a set, never broken: a genuinely ambiguous measured
    /// value has several equally likely source states.
    pub fn maximizers(&self) -> &[usize] {
        &self.maximizers
    }

    pub fn maximizer_states(&self) -> Vec<PureState> {
        // Indices came from the observable's own space, so they are in range.
        self.maximizers
            .iter()
            .map(|&i| PureState::from_index_unchecked(i))
            .collect()
    }

    /// Cells the measured value rules out entirely.
    pub fn excluded(&self) -> Vec<usize> {
        self.likelihood
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Maximum-likelihood inference of the source state of a measured value.
///
/// With a finite outcome alphabet the likelihood of outcome `x` at cell
/// `i` is just the singleton effect `e[i][x]`, normalized by its supremum
/// over the grid.
pub fn fisher_mle(o: &Observable, x: &Outcome) -> Result<MleResult> {
    let xi = o.outcome_index(x).ok_or_else(|| Error::UnknownOutcome {
        outcome: x.to_string(),
        context: "not in the observable's alphabet".into(),
    })?;
    let col = o.column(xi);
    let sup = col.iter().copied().fold(0.0_f64, f64::max);
    if sup <= 0.0 {
        return Err(Error::UnknownOutcome {
            outcome: x.to_string(),
            context: "no state produces this outcome".into(),
        });
    }
    let likelihood: Vec<f64> = col.iter().map(|&e| e / sup).collect();
    let maximizers = likelihood
        .iter()
        .enumerate()
        .filter(|(_, &f)| f == 1.0)
        .map(|(i, _)| i)
        .collect();
    Ok(MleResult { likelihood, maximizers })
}

/// Posterior mass after observing `x` under a prior:
/// `post_i = prior_i·e[i][x] / Σ_j prior_j·e[j][x]`.
///
/// A measured value of zero evidence (impossible under the prior) is a
/// hard error, not a fallback: it signals a model/grid mismatch.
pub fn bayes_posterior(o: &Observable, prior: &MixedState, x: &Outcome) -> Result<MixedState> {
    if prior.space() != o.space() {
        return Err(Error::SpaceMismatch(
            "prior and observable live on different spaces".into(),
        ));
    }
    let xi = o.outcome_index(x).ok_or_else(|| Error::UnknownOutcome {
        outcome: x.to_string(),
        context: "not in the observable's alphabet".into(),
    })?;
    let mut joint = vec![0.0; prior.mass().len()];
    let mut evidence = KahanSum::default();
    for (i, &m) in prior.mass().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let e = o.effect(i, xi);
        if e > 0.0 {
            joint[i] = m * e;
            evidence.add(m * e);
        }
    }
    let z = evidence.value();
    if z <= 0.0 {
        return Err(Error::ZeroEvidence(x.to_string()));
    }
    for j in &mut joint {
        *j /= z;
    }
    MixedState::new(Arc::clone(prior.space_arc()), joint)
}

/// Posterior-aggregated expected switching gain of an envelope observable.
#[derive(Debug, Clone, Copy)]
pub struct SwitchGain {
    /// `Σ_α P(α)·g(α)` where `g(α)` is the posterior-weighted conditional
    /// gain at measured value `α`. Mathematically zero; on the grid it is
    /// zero up to accumulated rounding.
    pub gain: f64,
    /// Rounding bound on `gain` from the accumulation.
    pub abs_error_bound: f64,
    /// Prior mean of the state label, for divergence checks by callers
    /// that know their density family.
    pub prior_mean: f64,
}

/// Expected switching gain aggregated over the measured-value law.
///
/// The envelope observable must be a two-branch pair observable: each cell
/// `ω` carries effect ½ on its own payout `v1(ω)` and ½ on the partner
/// payout `v2(ω)` (collapsed rows where the payouts coincide count as both
/// branches at gain 0). Observing the `v1` branch means the other envelope
/// holds `v2`, so the gain is `v2 - v1`, and symmetrically.
///
/// For every measured value `α` the joint contributions `mass_i·e[i][α]`
/// are grouped into the outcome probability `P(α)` and the posterior-
/// weighted conditional gain `g(α)`; the result is `Σ_α P(α)·g(α)`. The
/// conditional weights agree with [`bayes_posterior`] at each `α`.
pub fn posterior_switch_gain(
    o: &Observable,
    prior: &MixedState,
    v1: &[f64],
    v2: &[f64],
) -> Result<SwitchGain> {
    if prior.space() != o.space() {
        return Err(Error::SpaceMismatch(
            "prior and observable live on different spaces".into(),
        ));
    }
    if v1.len() != o.space().len() || v2.len() != o.space().len() {
        return Err(Error::Domain("payout tables must cover the grid".into()));
    }
    let n_out = o.outcomes().len();
    let mut prob = vec![KahanSum::default(); n_out];
    let mut numer = vec![KahanSum::default(); n_out];
    for (i, &m) in prior.mass().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for &(x, e) in o.row(i) {
            let val = o.outcomes()[x as usize].as_real().ok_or_else(|| {
                Error::Domain("envelope observable must have scalar outcomes".into())
            })?;
            let gain = if val == v1[i] && val == v2[i] {
                0.0
            } else if val == v1[i] {
                v2[i] - v1[i]
            } else if val == v2[i] {
                v1[i] - v2[i]
            } else {
                return Err(Error::Domain(format!(
                    "outcome {val} at cell {i} matches neither payout ({}, {})",
                    v1[i], v2[i]
                )));
            };
            prob[x as usize].add(m * e);
            numer[x as usize].add(m * e * gain);
        }
    }
    let mut gain = KahanSum::default();
    let mut abs = KahanSum::default();
    for (p, q) in prob.iter().zip(&numer) {
        let p = p.value();
        if p > 0.0 {
            let conditional = q.value() / p;
            gain.add(p * conditional);
            abs.add((p * conditional).abs());
        }
    }
    let bound = 64.0 * f64::EPSILON * abs.value().max(1.0);
    Ok(SwitchGain {
        gain: gain.value(),
        abs_error_bound: bound,
        prior_mean: prior.mean(),
    })
}
