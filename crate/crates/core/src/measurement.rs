//! Executing measurements: exact outcome laws, expectations, and seeded
//! sampling.
//!
//! The law of the measured value is `probs[x] = e[i][x]` at a pure state
//! and `probs[x] = Σ_i mass_i·e[i][x]` at a mixed state. Sampling at a
//! mixed state is two-stage — draw the cell, then the outcome from the
//! cell's effect row — which matches the one-stage law by construction.
//!
//! Randomness comes from [`RngStream`], a (seed, stream) pair over a
//! counter-based generator. Trial `t` of a parallel experiment always uses
//! stream `t`, so results are independent of execution order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measure::{kahan_sum, KahanSum, MixedState, PureState};
use crate::observable::{Observable, Outcome, Parallel};
use crate::MASS_TOL;

/// Name of the generator recorded in run metadata.
pub const RNG_ALGORITHM: &str = "chacha8";

/// A named position in seed/stream space. Identical (seed, stream) pairs
/// always reproduce the same sample sequence, bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    /// Stream `t` under the same seed, for per-trial independence.
    pub fn substream(&self, t: u64) -> Self {
        RngStream { seed: self.seed, stream: self.stream.wrapping_add(t) }
    }

    /// Materialize the generator at this position.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// The exact law of a measured value: outcomes with their probabilities.
#[derive(Debug, Clone)]
pub struct OutcomeDistribution {
    outcomes: Vec<Outcome>,
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn new(outcomes: Vec<Outcome>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.len() != probs.len() {
            return Err(Error::InvalidMass(format!(
                "{} outcomes with {} probabilities",
                outcomes.len(),
                probs.len()
            )));
        }
        if outcomes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMass(
                "outcomes must be sorted and distinct".into(),
            ));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidMass("probabilities must be non-negative".into()));
        }
        let total = kahan_sum(probs.iter().copied());
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMass(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(OutcomeDistribution { outcomes, probs })
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn prob_of(&self, x: &Outcome) -> f64 {
        match self.outcomes.binary_search(x) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    /// Total probability of outcomes satisfying `pred`.
    pub fn prob_where<F: Fn(&Outcome) -> bool>(&self, pred: F) -> f64 {
        kahan_sum(
            self.outcomes
                .iter()
                .zip(&self.probs)
                .filter(|(x, _)| pred(x))
                .map(|(_, p)| *p),
        )
    }
}

/// Law of the measured value at a known cell: `probs[x] = e[i][x]`.
pub fn outcome_distribution_pure(o: &Observable, s: PureState) -> Result<OutcomeDistribution> {
    if s.index() >= o.space().len() {
        return Err(Error::Domain(format!(
            "state index {} out of range for the observable's space",
            s.index()
        )));
    }
    let row = o.row(s.index());
    let outcomes = row.iter().map(|&(x, _)| o.outcomes()[x as usize].clone()).collect();
    let probs = row.iter().map(|&(_, e)| e).collect();
    OutcomeDistribution::new(outcomes, probs)
}

/// Law of the measured value under a mass vector:
/// `probs[x] = Σ_i mass_i·e[i][x]`.
pub fn outcome_distribution_statistical(
    o: &Observable,
    rho: &MixedState,
) -> Result<OutcomeDistribution> {
    if rho.space() != o.space() {
        return Err(Error::SpaceMismatch(
            "mixed state and observable live on different spaces".into(),
        ));
    }
    let mut acc = vec![KahanSum::default(); o.outcomes().len()];
    for (i, &m) in rho.mass().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        for &(x, e) in o.row(i) {
            acc[x as usize].add(m * e);
        }
    }
    let mut outcomes = Vec::new();
    let mut probs = Vec::new();
    for (x, a) in acc.into_iter().enumerate() {
        let p = a.value();
        if p > 0.0 {
            outcomes.push(o.outcomes()[x].clone());
            probs.push(p);
        }
    }
    OutcomeDistribution::new(outcomes, probs)
}

/// `Σ_x payoff(x)·probs[x]`. Errors if the payoff is NaN or infinite at
/// any outcome of positive probability; use [`expectation_extended`] when
/// infinite payoffs are meaningful.
pub fn expectation<F>(d: &OutcomeDistribution, payoff: F) -> Result<f64>
where
    F: Fn(&Outcome) -> f64,
{
    let mut acc = KahanSum::default();
    for (x, &p) in d.outcomes().iter().zip(d.probs()) {
        if p == 0.0 {
            continue;
        }
        let v = payoff(x);
        if v.is_nan() {
            return Err(Error::Domain(format!("payoff({x}) is NaN")));
        }
        if v.is_infinite() {
            return Err(Error::Domain(format!(
                "payoff({x}) is infinite; use extended-real mode"
            )));
        }
        acc.add(v * p);
    }
    Ok(acc.value())
}

/// An expectation in extended-real mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PlusInfinity,
    MinusInfinity,
}

/// Like [`expectation`], but an infinite payoff at positive probability is
/// reported as the matching infinity flag instead of an error. NaN payoffs
/// are still domain errors.
pub fn expectation_extended<F>(d: &OutcomeDistribution, payoff: F) -> Result<ExtendedReal>
where
    F: Fn(&Outcome) -> f64,
{
    let mut acc = KahanSum::default();
    let mut plus = false;
    let mut minus = false;
    for (x, &p) in d.outcomes().iter().zip(d.probs()) {
        if p == 0.0 {
            continue;
        }
        let v = payoff(x);
        if v.is_nan() {
            return Err(Error::Domain(format!("payoff({x}) is NaN")));
        }
        if v == f64::INFINITY {
            plus = true;
        } else if v == f64::NEG_INFINITY {
            minus = true;
        } else {
            acc.add(v * p);
        }
    }
    match (plus, minus) {
        (true, true) => Err(Error::Domain(
            "payoff is +inf and -inf on positive-probability outcomes".into(),
        )),
        (true, false) => Ok(ExtendedReal::PlusInfinity),
        (false, true) => Ok(ExtendedReal::MinusInfinity),
        (false, false) => Ok(ExtendedReal::Finite(acc.value())),
    }
}

/// Cumulative-weight index for repeated categorical draws.
struct Cdf {
    cum: Vec<f64>,
}

impl Cdf {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut cum = Vec::new();
        let mut acc = KahanSum::default();
        for w in weights {
            acc.add(w);
            cum.push(acc.value());
        }
        Cdf { cum }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cum.last().expect("non-empty cdf");
        let u = rng.random::<f64>() * total;
        // First cell whose cumulative weight exceeds u; skips zero-weight
        // cells even when u lands exactly on a boundary.
        let i = self.cum.partition_point(|&c| c <= u);
        i.min(self.cum.len() - 1)
    }
}

/// `n` i.i.d. draws from the observable at a known cell.
pub fn sample_pure(
    o: &Observable,
    s: PureState,
    stream: RngStream,
    n: usize,
) -> Result<Vec<Outcome>> {
    if n == 0 {
        return Err(Error::Domain("need at least one draw".into()));
    }
    let d = outcome_distribution_pure(o, s)?;
    Ok(sample_distribution(&d, stream, n))
}

/// `n` i.i.d. draws at a mixed state, two-stage: cell `i ~ mass`, then
/// outcome `x ~ e[i][·]`.
pub fn sample_mixed(
    o: &Observable,
    rho: &MixedState,
    stream: RngStream,
    n: usize,
) -> Result<Vec<Outcome>> {
    if n == 0 {
        return Err(Error::Domain("need at least one draw".into()));
    }
    if rho.space() != o.space() {
        return Err(Error::SpaceMismatch(
            "mixed state and observable live on different spaces".into(),
        ));
    }
    let cell_cdf = Cdf::new(rho.mass().iter().copied());
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let i = cell_cdf.draw(&mut rng);
        let row = o.row(i);
        let u = rng.random::<f64>();
        let mut acc = 0.0;
        let mut pick = None;
        for (k, &(_, e)) in row.iter().enumerate() {
            if e <= 0.0 {
                continue;
            }
            acc += e;
            pick = Some(k);
            if u < acc {
                break;
            }
        }
        let pick = pick.expect("unit row sum implies a positive entry");
        out.push(o.outcomes()[row[pick].0 as usize].clone());
    }
    Ok(out)
}

/// `n` i.i.d. draws directly from an exact distribution (one-stage).
pub fn sample_distribution(d: &OutcomeDistribution, stream: RngStream, n: usize) -> Vec<Outcome> {
    let cdf = Cdf::new(d.probs().iter().copied());
    let mut rng = stream.rng();
    (0..n)
        .map(|_| d.outcomes()[cdf.draw(&mut rng)].clone())
        .collect()
}

/// Draws from an i.i.d. repetition at a pure state without materializing
/// the tuple table: each draw is `arity` independent base draws collected
/// into a tuple.
pub fn sample_parallel_pure(
    par: &Parallel,
    s: PureState,
    stream: RngStream,
    n: usize,
) -> Result<Vec<Outcome>> {
    match par {
        Parallel::Table(o) => sample_pure(o, s, stream, n),
        Parallel::Lazy { base, n: arity } => {
            let d = outcome_distribution_pure(base, s)?;
            let cdf = Cdf::new(d.probs().iter().copied());
            let mut rng = stream.rng();
            Ok((0..n)
                .map(|_| {
                    Outcome::Tuple(
                        (0..*arity)
                            .map(|_| d.outcomes()[cdf.draw(&mut rng)].clone())
                            .collect(),
                    )
                })
                .collect())
        }
    }
}

/// Prefix means of a sample path, compensated so drift stays below 1e-9
/// relative even over 10^7 samples.
pub fn lln_running_average(samples: &[f64]) -> Vec<f64> {
    let mut acc = KahanSum::default();
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            acc.add(x);
            acc.value() / (i + 1) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{make_uniform_grid, MixedState, StateSpace};
    use crate::observable::{deterministic_observable, mix_observables};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn envelope_pair_observable() -> (Arc<StateSpace>, Observable) {
        // Identified space: cell ω stands for the pair (ω, 2ω).
        let s = StateSpace::new(vec![10.0], vec![1.0]).unwrap();
        let o1 = deterministic_observable(&s, |w| w).unwrap();
        let o2 = deterministic_observable(&s, |w| 2.0 * w).unwrap();
        let m = mix_observables(&[&o1, &o2], &[0.5, 0.5]).unwrap();
        (s, m)
    }

    #[test]
    fn pure_law_of_envelope_observable_is_half_half() {
        let (s, m) = envelope_pair_observable();
        let d = outcome_distribution_pure(&m, PureState::new(&s, 0).unwrap()).unwrap();
        assert_eq!(d.prob_of(&Outcome::real(10.0)), 0.5);
        assert_eq!(d.prob_of(&Outcome::real(20.0)), 0.5);
    }

    #[test]
    fn deterministic_law_is_a_point_mass() {
        let s = make_uniform_grid(0.0, 1.0, 4).unwrap();
        let o = deterministic_observable(&s, |w| 3.0 * w).unwrap();
        let st = PureState::new(&s, 2).unwrap();
        let d = outcome_distribution_pure(&o, st).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.probs(), &[1.0]);
    }

    #[test]
    fn statistical_law_at_point_mass_matches_pure() {
        let s = make_uniform_grid(0.0, 1.0, 8).unwrap();
        let o1 = deterministic_observable(&s, |w| w).unwrap();
        let o2 = deterministic_observable(&s, |w| 2.0 * w).unwrap();
        let m = mix_observables(&[&o1, &o2], &[0.5, 0.5]).unwrap();
        let st = PureState::new(&s, 3).unwrap();
        let rho = MixedState::point_mass(Arc::clone(&s), st).unwrap();
        let dp = outcome_distribution_pure(&m, st).unwrap();
        let ds = outcome_distribution_statistical(&m, &rho).unwrap();
        for (x, p) in dp.outcomes().iter().zip(dp.probs()) {
            assert_eq!(ds.prob_of(x), *p);
        }
    }

    #[test]
    fn expectation_constant_payoff() {
        let (s, m) = envelope_pair_observable();
        let d = outcome_distribution_pure(&m, PureState::new(&s, 0).unwrap()).unwrap();
        assert_eq!(expectation(&d, |_| 4.5).unwrap(), 4.5);
    }

    #[test]
    fn expectation_is_linear_in_payoff() {
        let (s, m) = envelope_pair_observable();
        let d = outcome_distribution_pure(&m, PureState::new(&s, 0).unwrap()).unwrap();
        let f = |x: &Outcome| x.as_real().unwrap();
        let g = |x: &Outcome| x.as_real().unwrap().powi(2);
        let lhs = expectation(&d, |x| 2.0 * f(x) + 3.0 * g(x)).unwrap();
        let rhs = 2.0 * expectation(&d, f).unwrap() + 3.0 * expectation(&d, g).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12 * rhs.abs());
    }

    #[test]
    fn expectation_rejects_nan_payoff() {
        let (s, m) = envelope_pair_observable();
        let d = outcome_distribution_pure(&m, PureState::new(&s, 0).unwrap()).unwrap();
        assert!(expectation(&d, |_| f64::NAN).is_err());
        assert!(expectation(&d, |_| f64::INFINITY).is_err());
    }

    #[test]
    fn extended_expectation_flags_divergence() {
        let (s, m) = envelope_pair_observable();
        let d = outcome_distribution_pure(&m, PureState::new(&s, 0).unwrap()).unwrap();
        let e = expectation_extended(&d, |x| {
            if x.as_real().unwrap() > 15.0 {
                f64::INFINITY
            } else {
                1.0
            }
        })
        .unwrap();
        assert_eq!(e, ExtendedReal::PlusInfinity);
    }

    #[test]
    fn sampling_frequencies_near_half() {
        let (s, m) = envelope_pair_observable();
        let st = PureState::new(&s, 0).unwrap();
        let xs = sample_pure(&m, st, RngStream::new(42, 0), 100_000).unwrap();
        let tens = xs.iter().filter(|x| x.as_real() == Some(10.0)).count();
        let freq = tens as f64 / 100_000.0;
        // Binomial 3σ at n = 1e5 is about 0.0047.
        assert!((freq - 0.5).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn deterministic_sampling_is_constant() {
        let s = make_uniform_grid(0.0, 1.0, 4).unwrap();
        let o = deterministic_observable(&s, |w| 3.0 * w).unwrap();
        let st = PureState::new(&s, 1).unwrap();
        let xs = sample_pure(&o, st, RngStream::new(7, 3), 100).unwrap();
        assert!(xs.iter().all(|x| x == &xs[0]));
    }

    #[test]
    fn fixed_seed_replays_identically() {
        let (s, m) = envelope_pair_observable();
        let st = PureState::new(&s, 0).unwrap();
        let a = sample_pure(&m, st, RngStream::new(123, 5), 1000).unwrap();
        let b = sample_pure(&m, st, RngStream::new(123, 5), 1000).unwrap();
        assert_eq!(a, b);
        let c = sample_pure(&m, st, RngStream::new(123, 6), 1000).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn running_average_prefix_means() {
        let avg = lln_running_average(&[10.0, 20.0, 10.0, 20.0]);
        assert_eq!(avg[0], 10.0);
        assert_eq!(avg[1], 15.0);
        assert_abs_diff_eq!(avg[2], 40.0 / 3.0, epsilon = 1e-12);
        assert_eq!(avg[3], 15.0);

        let avg = lln_running_average(&[3.25; 50]);
        assert!(avg.iter().all(|&a| a == 3.25));
    }
}
