//! Oracle checks: every nontrivial inference result is reproduced by an
//! independent brute-force route before being trusted.
//!
//! The posterior oracle is a plain double loop over grid states × outcomes
//! that rebuilds the whole joint table and normalizes by its marginal —
//! no sparse access, no shortcuts.

use envelopes_core::envelope::{
    build_bayesian_envelope, bayesian_envelope_report, DensitySpec, DyadicGridParams,
};
use envelopes_core::inference::{bayes_posterior, posterior_switch_gain};
use envelopes_core::measure::{MixedState, StateSpace};
use envelopes_core::measurement::{outcome_distribution_statistical, RngStream};
use envelopes_core::observable::{product_observable, Observable, Outcome};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Brute-force posterior: scan the full (state, outcome) joint table.
fn posterior_oracle(o: &Observable, prior: &MixedState, x: &Outcome) -> Option<Vec<f64>> {
    let n = o.space().len();
    let outcomes = o.outcomes();
    let mut joint = vec![vec![0.0; outcomes.len()]; n];
    for (i, row) in joint.iter_mut().enumerate() {
        for (k, row_val) in row.iter_mut().enumerate() {
            *row_val = prior.mass()[i] * o.effect(i, k);
        }
    }
    let xi = outcomes.iter().position(|y| y == x)?;
    let evidence: f64 = joint.iter().map(|row| row[xi]).sum();
    if evidence <= 0.0 {
        return None;
    }
    Some(joint.iter().map(|row| row[xi] / evidence).collect())
}

#[test]
fn posterior_matches_oracle_on_random_cases() {
    let grid = DyadicGridParams { min_exp: -8, max_exp: 4, points_per_octave: 24 };
    let densities = [
        DensitySpec::Exp { rate: 1.0 },
        DensitySpec::Exp { rate: 0.5 },
        DensitySpec::Uniform { lo: 0.0, hi: 1.0 },
        DensitySpec::Gamma { shape: 2.0, rate: 1.0 },
        DensitySpec::Gamma { shape: 3.0, rate: 2.0 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = 0;
    while cases < 100 {
        let density = &densities[rng.random_range(0..densities.len())];
        let env = build_bayesian_envelope(density, &grid).unwrap();
        let space = env.model.space();
        // Pick α with α/2 on-grid and positive prior mass at both states.
        let k = grid.points_per_octave;
        let idx = rng.random_range(k..space.len());
        let alpha = space.point(idx);
        if env.prior.mass()[idx] == 0.0 || env.prior.mass()[idx - k] == 0.0 {
            continue;
        }
        let x = Outcome::real(alpha);
        let post = bayes_posterior(env.model.observable(), &env.prior, &x).unwrap();
        let oracle = posterior_oracle(env.model.observable(), &env.prior, &x).unwrap();
        for (a, b) in post.mass().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9, "case {cases}: {a} vs {b}");
        }
        cases += 1;
    }
}

#[test]
fn posterior_matches_eq12_style_weights() {
    // On the dyadic grid the two-atom posterior catches the doubling
    // Jacobian: the α/2 atom is weighted h(α/2)/2 against h(α).
    let grid = DyadicGridParams { min_exp: -10, max_exp: 4, points_per_octave: 32 };
    let env = build_bayesian_envelope(&DensitySpec::Exp { rate: 1.0 }, &grid).unwrap();
    let space = env.model.space();
    let k = grid.points_per_octave;
    for idx in [k, k + 7, 3 * k + 5, 6 * k] {
        let alpha = space.point(idx);
        let post =
            bayes_posterior(env.model.observable(), &env.prior, &Outcome::real(alpha)).unwrap();
        let h = |w: f64| (-w).exp();
        let expected_half = (h(alpha / 2.0) / 2.0) / (h(alpha / 2.0) / 2.0 + h(alpha));
        assert!(
            (post.mass()[idx - k] - expected_half).abs() <= 1e-9,
            "alpha = {alpha}: {} vs {expected_half}",
            post.mass()[idx - k]
        );
        assert!((post.mass()[idx] - (1.0 - expected_half)).abs() <= 1e-9);
    }
}

#[test]
fn sequential_and_joint_posteriors_agree() {
    // Product observable on a product space: conditioning on x via the
    // first marginal and then on y via the second equals conditioning on
    // (x, y) jointly.
    let s1 = StateSpace::new(vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]).unwrap();
    let s2 = StateSpace::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
    let o1 = Observable::new(
        Arc::clone(&s1),
        vec![Outcome::real(0.0), Outcome::real(1.0)],
        vec![
            vec![(0, 0.75), (1, 0.25)],
            vec![(0, 0.5), (1, 0.5)],
            vec![(0, 0.125), (1, 0.875)],
        ],
    )
    .unwrap();
    let o2 = Observable::new(
        Arc::clone(&s2),
        vec![Outcome::real(10.0), Outcome::real(20.0)],
        vec![vec![(0, 0.25), (1, 0.75)], vec![(0, 0.625), (1, 0.375)]],
    )
    .unwrap();
    let p = product_observable(&o1, &o2).unwrap();
    let prior = MixedState::new(
        Arc::clone(p.space_arc()),
        vec![0.125, 0.125, 0.25, 0.125, 0.25, 0.125],
    )
    .unwrap();

    let x = Outcome::real(1.0);
    let y = Outcome::real(20.0);

    // Marginal observables on the product space.
    let m1 = p.map_outcomes(|o| Outcome::real(o.component(0).unwrap())).unwrap();
    let m2 = p.map_outcomes(|o| Outcome::real(o.component(1).unwrap())).unwrap();

    let after_x = bayes_posterior(&m1, &prior, &x).unwrap();
    let sequential = bayes_posterior(&m2, &after_x, &y).unwrap();
    let joint = bayes_posterior(&p, &prior, &Outcome::Tuple(vec![x, y])).unwrap();

    for (a, b) in sequential.mass().iter().zip(joint.mass()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn aggregated_conditional_gains_reproduce_the_zero() {
    // Two routes to the unconditional switching gain: per-outcome Bayes
    // posteriors aggregated under the measured-value law, and the
    // all-at-once aggregation. Both must agree, and both must be zero.
    let grid = DyadicGridParams { min_exp: -10, max_exp: 4, points_per_octave: 48 };
    for density in [
        DensitySpec::Exp { rate: 1.0 },
        DensitySpec::Uniform { lo: 0.0, hi: 1.0 },
        DensitySpec::Gamma { shape: 2.0, rate: 1.0 },
    ] {
        let env = build_bayesian_envelope(&density, &grid).unwrap();
        let o = env.model.observable();
        let space = env.model.space();
        let d = outcome_distribution_statistical(o, &env.prior).unwrap();

        let mut aggregate = 0.0;
        for (x, &p) in d.outcomes().iter().zip(d.probs()) {
            if p == 0.0 {
                continue;
            }
            let alpha = x.as_real().unwrap();
            let post = bayes_posterior(o, &env.prior, x).unwrap();
            // Conditional gain: the posterior atom at state α/2 means the
            // other envelope holds α/2; the atom at state α means 2α.
            let mut conditional = 0.0;
            if let Some(i) = space.index_of(alpha / 2.0) {
                conditional += post.mass()[i] * (-alpha / 2.0);
            }
            if let Some(i) = space.index_of(alpha) {
                conditional += post.mass()[i] * alpha;
            }
            aggregate += p * conditional;
        }

        let direct =
            posterior_switch_gain(o, &env.prior, env.model.v1(), env.model.v2()).unwrap();
        assert!(
            (aggregate - direct.gain).abs() <= 1e-9,
            "{density:?}: {aggregate} vs {}",
            direct.gain
        );
        assert!(direct.gain.abs() <= direct.abs_error_bound, "{density:?}");
        assert!(aggregate.abs() <= 1e-9, "{density:?}: aggregate {aggregate}");
    }
}

#[test]
fn switch_gain_monte_carlo_cross_check() {
    let grid = DyadicGridParams { min_exp: -12, max_exp: 5, points_per_octave: 64 };
    let env = build_bayesian_envelope(&DensitySpec::Exp { rate: 1.0 }, &grid).unwrap();
    let report = bayesian_envelope_report(
        &env,
        2.0,
        7,
        Some(envelopes_core::envelope::McOptions {
            trials: 100_000,
            rng: RngStream::new(7, 0),
        }),
    )
    .unwrap();
    let mc = report.monte_carlo.unwrap();
    assert!((mc.mean_gain - report.unconditional_gain).abs() <= 3.0 * mc.std_error);
}
