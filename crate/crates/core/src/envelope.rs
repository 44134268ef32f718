//! The two-envelope exchange problem: the naive argument, the pure-state
//! answer, the long-run experiment, and the Bayesian analysis under a
//! prior density on the smaller amount.
//!
//! The model identifies the pair `(ω, 2ω)` with the smaller amount `ω`,
//! so the state space is a grid over `ω`. Opening a random envelope is
//! the mixture observable with effect ½ on `v1(ω)` and ½ on `v2(ω)`; the
//! joint view of both envelopes is the correlated quasi-product.
//!
//! # The dyadic grid
//!
//! The Bayesian analysis needs, for an observed amount `α`, both candidate
//! states `α/2` and `α` on the grid, and the posterior must weight them
//! like the continuum does. Both fall out of a dyadic-geometric grid:
//! points `u_j·2^m` with `u_j = 2^(j/k)`, weights equal to cell widths.
//! Halving a grid point is an exact shift by one octave (`k` indices), and
//! the cell width at `α/2` is exactly half the width at `α`, which is the
//! Jacobian of `x = 2ω`. With those weights the discrete posterior at `α`
//! reproduces the density ratio `h(α/2)/2 : h(α)` exactly, rather than the
//! `h(α/2) : h(α)` a uniform grid would give.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{bayes_posterior, posterior_switch_gain};
use crate::measure::{mixed_from_density, KahanSum, MixedState, PureState, StateSpace};
use crate::measurement::{lln_running_average, sample_pure, RngStream, RNG_ALGORITHM};
use crate::observable::{
    deterministic_observable, mix_observables, quasi_product_envelope, Observable, Outcome,
};
use crate::report::{
    BayesReport, GridInfo, LlnRecord, LlnTraceRow, McCrossCheck, NaiveExpectation,
    PosteriorWeights, PriorInfo,
};

/// Dyadic-geometric grid: `points_per_octave` cells per octave, octaves
/// `min_exp` (inclusive) to `max_exp` (exclusive), covering
/// `[2^min_exp, 2^max_exp)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicGridParams {
    pub min_exp: i32,
    pub max_exp: i32,
    pub points_per_octave: usize,
}

impl DyadicGridParams {
    pub fn octaves(&self) -> usize {
        (self.max_exp - self.min_exp) as usize
    }

    pub fn len(&self) -> usize {
        self.octaves() * self.points_per_octave
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameters covering `(0, hi]` with roughly `n` points, spanning
    /// [`DEFAULT_OCTAVES`] octaves below the top.
    pub fn for_range(hi: f64, n: usize) -> Result<Self> {
        if !hi.is_finite() || hi <= 0.0 {
            return Err(Error::InvalidGrid(format!("need hi > 0, got {hi}")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need n >= 2 points, got {n}")));
        }
        let max_exp = hi.log2().ceil() as i32;
        let octaves = DEFAULT_OCTAVES.min(n / 2).max(1);
        let points_per_octave = (n / octaves).max(1);
        Ok(DyadicGridParams {
            min_exp: max_exp - octaves as i32,
            max_exp,
            points_per_octave,
        })
    }
}

/// Default octave span for [`DyadicGridParams::for_range`].
pub const DEFAULT_OCTAVES: usize = 25;

/// Build the dyadic-geometric grid.
///
/// Point `(m, j)` is `2^(j/k)·2^m`, its weight the width of the cell
/// `[2^(j/k), 2^((j+1)/k))·2^m`. Scaling by `2^m` is exact in binary
/// floating point, so halving any grid point lands bit-exactly on the
/// point one octave down, and cell widths halve with it.
pub fn dyadic_grid(params: &DyadicGridParams) -> Result<Arc<StateSpace>> {
    if params.min_exp >= params.max_exp {
        return Err(Error::InvalidGrid(format!(
            "need min_exp < max_exp, got {} and {}",
            params.min_exp, params.max_exp
        )));
    }
    if params.points_per_octave == 0 {
        return Err(Error::InvalidGrid("need at least one point per octave".into()));
    }
    if params.max_exp > 500 || params.min_exp < -500 {
        return Err(Error::InvalidGrid("octave exponents limited to ±500".into()));
    }
    let k = params.points_per_octave;
    let base: Vec<f64> = (0..=k).map(|j| (j as f64 / k as f64).exp2()).collect();
    let mut points = Vec::with_capacity(params.len());
    let mut weights = Vec::with_capacity(params.len());
    for m in params.min_exp..params.max_exp {
        let scale = (m as f64).exp2();
        for j in 0..k {
            points.push(base[j] * scale);
            weights.push((base[j + 1] - base[j]) * scale);
        }
    }
    StateSpace::new(points, weights)
}

/// A named prior density family over the smaller amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DensitySpec {
    /// `λ·e^{-λω}`.
    Exp { rate: f64 },
    /// Constant on `[lo, hi]`, zero elsewhere.
    Uniform { lo: f64, hi: f64 },
    /// `β^k·ω^{k-1}·e^{-βω} / Γ(k)`.
    Gamma { shape: f64, rate: f64 },
    /// `(a-1)/(1+ω)^a`; mean is infinite for `a <= 2`.
    Pareto { exponent: f64 },
}

impl DensitySpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DensitySpec::Exp { rate } => rate > 0.0 && rate.is_finite(),
            DensitySpec::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi && hi > 0.0,
            DensitySpec::Gamma { shape, rate } => {
                shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()
            }
            DensitySpec::Pareto { exponent } => exponent > 1.0 && exponent.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDensity(format!("bad parameters: {self:?}")))
        }
    }

    pub fn eval(&self, w: f64) -> f64 {
        match *self {
            DensitySpec::Exp { rate } => rate * (-rate * w).exp(),
            DensitySpec::Uniform { lo, hi } => {
                if w >= lo && w <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            DensitySpec::Gamma { shape, rate } => {
                if w <= 0.0 {
                    0.0
                } else {
                    rate.powf(shape) * w.powf(shape - 1.0) * (-rate * w).exp()
                        / statrs::function::gamma::gamma(shape)
                }
            }
            DensitySpec::Pareto { exponent } => {
                if w < 0.0 {
                    0.0
                } else {
                    (exponent - 1.0) * (1.0 + w).powf(-exponent)
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DensitySpec::Exp { .. } => "exp",
            DensitySpec::Uniform { .. } => "uniform",
            DensitySpec::Gamma { .. } => "gamma",
            DensitySpec::Pareto { .. } => "pareto",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            DensitySpec::Exp { rate } => vec![rate],
            DensitySpec::Uniform { lo, hi } => vec![lo, hi],
            DensitySpec::Gamma { shape, rate } => vec![shape, rate],
            DensitySpec::Pareto { exponent } => vec![exponent],
        }
    }

    /// Whether the untruncated density has a finite mean.
    pub fn finite_mean(&self) -> bool {
        match *self {
            DensitySpec::Exp { .. } | DensitySpec::Uniform { .. } | DensitySpec::Gamma { .. } => {
                true
            }
            DensitySpec::Pareto { exponent } => exponent > 2.0,
        }
    }

    /// Mean of the untruncated density, where finite.
    pub fn analytic_mean(&self) -> Option<f64> {
        match *self {
            DensitySpec::Exp { rate } => Some(1.0 / rate),
            DensitySpec::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            DensitySpec::Gamma { shape, rate } => Some(shape / rate),
            DensitySpec::Pareto { exponent } if exponent > 2.0 => Some(1.0 / (exponent - 2.0)),
            DensitySpec::Pareto { .. } => None,
        }
    }

    /// Parse `name:p1,p2` specs, e.g. `exp:1`, `uniform:0,1`, `gamma:2,1`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, p),
            None => (s, ""),
        };
        let nums: Vec<f64> = if params.is_empty() {
            Vec::new()
        } else {
            params
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidDensity(format!("bad parameter `{t}` in `{s}`")))
                })
                .collect::<Result<_>>()?
        };
        let spec = match (name.trim(), nums.as_slice()) {
            ("exp", []) => DensitySpec::Exp { rate: 1.0 },
            ("exp", [r]) => DensitySpec::Exp { rate: *r },
            ("uniform", []) => DensitySpec::Uniform { lo: 0.0, hi: 1.0 },
            ("uniform", [lo, hi]) => DensitySpec::Uniform { lo: *lo, hi: *hi },
            ("gamma", [k, r]) => DensitySpec::Gamma { shape: *k, rate: *r },
            ("pareto", [a]) => DensitySpec::Pareto { exponent: *a },
            _ => {
                return Err(Error::InvalidDensity(format!(
                    "unknown density spec `{s}` (expected exp:RATE, uniform:LO,HI, gamma:SHAPE,RATE, or pareto:EXPONENT)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl std::fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let params = self
            .params()
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(",");
        write!(f, "{}:{params}", self.name())
    }
}

/// The envelope pair model: a state space over the smaller amount, the two
/// payout maps, the single-envelope mixture observable, and the joint
/// quasi-product observable.
#[derive(Debug, Clone)]
pub struct EnvelopePairModel {
    space: Arc<StateSpace>,
    v1: Vec<f64>,
    v2: Vec<f64>,
    observable: Observable,
    quasi: Observable,
}

impl EnvelopePairModel {
    /// General payout maps; `v2 = 2·v1` is the standard relation but any
    /// non-negative pair is accepted.
    pub fn with_payouts<F1, F2>(space: Arc<StateSpace>, v1: F1, v2: F2) -> Result<Self>
    where
        F1: Fn(f64) -> f64,
        F2: Fn(f64) -> f64,
    {
        let v1: Vec<f64> = space.points().iter().map(|&p| v1(p)).collect();
        let v2: Vec<f64> = space.points().iter().map(|&p| v2(p)).collect();
        if v1.iter().chain(&v2).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("payouts must be non-negative and finite".into()));
        }
        let o1 = deterministic_observable(&space, |w| v1[space.index_of(w).expect("grid point")])?;
        let o2 = deterministic_observable(&space, |w| v2[space.index_of(w).expect("grid point")])?;
        let observable = mix_observables(&[&o1, &o2], &[0.5, 0.5])?;
        let quasi = quasi_product_envelope(&o1, &o2)?;
        Ok(EnvelopePairModel { space, v1, v2, observable, quasi })
    }

    /// The standard model on the identified space: state `ω` holds the
    /// pair `(ω, 2ω)`.
    pub fn standard(space: Arc<StateSpace>) -> Result<Self> {
        Self::with_payouts(space, |w| w, |w| 2.0 * w)
    }

    /// A one-state model holding exactly the pair `(v1, v2)`.
    pub fn single_state(v1: f64, v2: f64) -> Result<Self> {
        let space = StateSpace::new(vec![0.0], vec![1.0])?;
        Self::with_payouts(space, |_| v1, |_| v2)
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn v1(&self) -> &[f64] {
        &self.v1
    }

    pub fn v2(&self) -> &[f64] {
        &self.v2
    }

    /// The single-envelope observable: effect ½ on each payout.
    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    /// The joint observable over ordered (you, host) payout pairs.
    pub fn quasi(&self) -> &Observable {
        &self.quasi
    }
}

/// Annotation attached to every naive-expectation result.
pub const NAIVE_ANNOTATION: &str = "invalid reasoning: treats 'the other envelope holds half or \
double with probability 1/2 each' as given, but a single measured value only identifies the two \
candidate states, not a probability over them";

/// The folk calculation `E_other(α) = ½·(α/2) + ½·(2α) = 1.25α`, shipped
/// deliberately as the fallacy it is, annotation attached.
pub fn naive_other_expectation(alpha: f64) -> Result<NaiveExpectation> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!("need alpha >= 0, got {alpha}")));
    }
    let e_other = 0.5 * (alpha / 2.0) + 0.5 * (2.0 * alpha);
    Ok(NaiveExpectation {
        alpha,
        e_other,
        annotation: NAIVE_ANNOTATION.to_string(),
    })
}

/// Expected switching gain at a known state, computed as the two-term sum
/// `(v2-v1)/2 + (v1-v2)/2` so the cancellation is exercised, not assumed.
pub fn pure_switch_gain(model: &EnvelopePairModel, s: PureState) -> Result<f64> {
    if s.index() >= model.space.len() {
        return Err(Error::Domain(format!("state index {} out of range", s.index())));
    }
    let i = s.index();
    Ok((model.v2[i] - model.v1[i]) / 2.0 + (model.v1[i] - model.v2[i]) / 2.0)
}

/// Repeated joint measurement at a known state: `trials` draws from the
/// quasi-product, with running averages of both coordinates.
pub fn lln_experiment(
    model: &EnvelopePairModel,
    s: PureState,
    trials: usize,
    rng: RngStream,
) -> Result<LlnRecord> {
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let samples = sample_pure(model.quasi(), s, rng, trials)?;
    let yours: Vec<f64> = samples
        .iter()
        .map(|x| x.component(0).expect("pair outcome"))
        .collect();
    let hosts: Vec<f64> = samples
        .iter()
        .map(|x| x.component(1).expect("pair outcome"))
        .collect();
    let avg_you = lln_running_average(&yours);
    let avg_host = lln_running_average(&hosts);
    let trace = avg_you
        .iter()
        .zip(&avg_host)
        .enumerate()
        .map(|(i, (&a, &b))| LlnTraceRow { n: (i + 1) as u64, avg_you: a, avg_host: b })
        .collect();
    let i = s.index();
    Ok(LlnRecord {
        model: "envelope-lln".into(),
        v1: model.v1[i],
        v2: model.v2[i],
        target_mean: 0.5 * (model.v1[i] + model.v2[i]),
        trials: trials as u64,
        rng_algorithm: RNG_ALGORITHM.into(),
        rng,
        final_avg_you: *avg_you.last().expect("non-empty"),
        final_avg_host: *avg_host.last().expect("non-empty"),
        trace,
    })
}

/// A built Bayesian envelope model: the pair model on a dyadic grid plus
/// the prior over the smaller amount.
#[derive(Debug, Clone)]
pub struct BayesianEnvelope {
    pub model: EnvelopePairModel,
    pub prior: MixedState,
    pub grid: DyadicGridParams,
    pub density: DensitySpec,
    /// Pre-normalization integral of the density over the grid.
    pub covered_mass: f64,
}

impl BayesianEnvelope {
    /// Prior mass lost to grid truncation, assuming a normalized density.
    pub fn truncated_mass(&self) -> f64 {
        (1.0 - self.covered_mass).max(0.0)
    }
}

/// Build the standard pair model on a dyadic grid with the prior given by
/// a density over the smaller amount.
pub fn build_bayesian_envelope(
    density: &DensitySpec,
    grid: &DyadicGridParams,
) -> Result<BayesianEnvelope> {
    density.validate()?;
    let space = dyadic_grid(grid)?;
    let model = EnvelopePairModel::standard(Arc::clone(&space))?;
    let (prior, covered_mass) = mixed_from_density(&space, |w| density.eval(w))?;
    Ok(BayesianEnvelope {
        model,
        prior,
        grid: *grid,
        density: density.clone(),
        covered_mass,
    })
}

/// Options for the Monte Carlo cross-check inside a Bayesian report.
#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub trials: usize,
    pub rng: RngStream,
}

/// Full Bayesian analysis at a measured value `α`.
///
/// `α` must be a grid point with `α/2` on-grid as well (so both candidate
/// states exist); out-of-range values are rejected rather than
/// extrapolated.
pub fn bayesian_envelope_report(
    env: &BayesianEnvelope,
    alpha: f64,
    seed: u64,
    mc: Option<McOptions>,
) -> Result<BayesReport> {
    let space = env.model.space();
    let alpha_idx = match space.index_of(alpha) {
        Some(i) => i,
        None => {
            let (below, above) = space.nearest(alpha);
            return Err(Error::OffGrid { value: alpha, below, above });
        }
    };
    let half = alpha / 2.0;
    let half_idx = space.index_of(half).ok_or_else(|| {
        let (below, above) = space.nearest(half);
        Error::Domain(format!(
            "alpha/2 = {half} falls outside the grid (nearest points {below} and {above}); \
choose alpha at least one octave above the grid floor"
        ))
    })?;

    let o = env.model.observable();
    // Atom probability of measuring exactly α: Σ_i mass_i·e[i][α].
    let xi = o
        .outcome_index(&Outcome::real(alpha))
        .ok_or_else(|| Error::UnknownOutcome {
            outcome: alpha.to_string(),
            context: "not an outcome of the envelope observable".into(),
        })?;
    let mut atom = KahanSum::default();
    for (i, &m) in env.prior.mass().iter().enumerate() {
        if m > 0.0 {
            let e = o.effect(i, xi);
            if e > 0.0 {
                atom.add(m * e);
            }
        }
    }
    let alpha_probability = atom.value();
    let p_alpha = alpha_probability / space.weight(alpha_idx);

    let post = bayes_posterior(o, &env.prior, &Outcome::real(alpha))?;
    let weights = PosteriorWeights {
        other_half: post.mass()[half_idx],
        other_double: post.mass()[alpha_idx],
    };
    let conditional_gain = (-half) * weights.other_half + alpha * weights.other_double;

    let unconditional =
        posterior_switch_gain(o, &env.prior, env.model.v1(), env.model.v2())?;

    let monte_carlo = match mc {
        Some(opts) => Some(switch_gain_monte_carlo(env, opts)?),
        None => None,
    };

    Ok(BayesReport {
        model: "envelope-bayes".into(),
        grid: GridInfo {
            min_exp: env.grid.min_exp,
            max_exp: env.grid.max_exp,
            points_per_octave: env.grid.points_per_octave,
            points: space.len(),
        },
        prior: PriorInfo {
            density: env.density.name().into(),
            params: env.density.params(),
            covered_mass: env.covered_mass,
            truncated_mass: env.truncated_mass(),
            mean: env.prior.mean(),
            finite_mean: Some(env.density.finite_mean()),
        },
        alpha,
        p_alpha,
        alpha_probability,
        posterior_weights: weights,
        conditional_gain,
        unconditional_gain: unconditional.gain,
        unconditional_gain_bound: unconditional.abs_error_bound,
        divergence_warning: !env.density.finite_mean(),
        seed,
        monte_carlo,
    })
}

/// Monte Carlo estimate of the unconditional switching gain: draw a state
/// from the prior, a branch from the effects, and score `other - observed`.
pub fn switch_gain_monte_carlo(env: &BayesianEnvelope, opts: McOptions) -> Result<McCrossCheck> {
    use rand::Rng;
    if opts.trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let mass = env.prior.mass();
    let mut cum = Vec::with_capacity(mass.len());
    let mut acc = KahanSum::default();
    for &m in mass {
        acc.add(m);
        cum.push(acc.value());
    }
    let total = *cum.last().expect("non-empty");
    let mut rng = opts.rng.rng();
    let mut sum = KahanSum::default();
    let mut sumsq = KahanSum::default();
    for _ in 0..opts.trials {
        let u = rng.random::<f64>() * total;
        let i = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        let gain = if rng.random::<f64>() < 0.5 {
            env.model.v2()[i] - env.model.v1()[i]
        } else {
            env.model.v1()[i] - env.model.v2()[i]
        };
        sum.add(gain);
        sumsq.add(gain * gain);
    }
    let n = opts.trials as f64;
    let mean = sum.value() / n;
    let var = (sumsq.value() / n - mean * mean).max(0.0);
    let std_error = (var / n).sqrt();
    Ok(McCrossCheck {
        trials: opts.trials as u64,
        rng: opts.rng,
        mean_gain: mean,
        std_error,
    })
}
