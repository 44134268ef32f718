//! Goodness-of-fit testing for sampled outcome frequencies.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::measurement::OutcomeDistribution;
use crate::observable::Outcome;

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquareFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquareFit {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Chi-square test of observed counts against cell probabilities.
///
/// `counts[k]` is the number of samples that landed in cell `k`; `probs[k]`
/// the probability of that cell under the reference distribution.
pub fn chi_square_test(counts: &[u64], probs: &[f64]) -> Result<ChiSquareFit> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return Err(Error::Domain(format!(
            "need matching counts/probs with at least 2 cells, got {} and {}",
            counts.len(),
            probs.len()
        )));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Domain("no samples".into()));
    }
    let nf = n as f64;
    let mut stat = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            return Err(Error::Domain("reference cell probability must be positive".into()));
        }
        let expected = nf * p;
        let diff = c as f64 - expected;
        stat += diff * diff / expected;
    }
    let dof = counts.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    let p_value = 1.0 - chi.cdf(stat);
    Ok(ChiSquareFit { statistic: stat, dof, p_value })
}

/// Tally samples against a distribution's outcome list and run the test.
/// Samples not in the list are counted against a domain error, since the
/// reference assigns them probability zero.
pub fn chi_square_against(d: &OutcomeDistribution, samples: &[Outcome]) -> Result<ChiSquareFit> {
    let mut counts = vec![0u64; d.len()];
    for s in samples {
        match d.outcomes().binary_search(s) {
            Ok(i) => counts[i] += 1,
            Err(_) => {
                return Err(Error::UnknownOutcome {
                    outcome: s.to_string(),
                    context: "sample outside the reference distribution's support".into(),
                })
            }
        }
    }
    chi_square_test(&counts, d.probs())
}
