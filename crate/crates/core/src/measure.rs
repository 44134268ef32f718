//! Discretized state spaces, measures, and numerical integration.
//!
//! A [`StateSpace`] is a finite, strictly increasing list of real labels
//! with a positive measure weight per cell. Probability measures over a
//! space come in two flavours: a [`PureState`] is a single cell (a point
//! mass), a [`MixedState`] is a normalized mass vector whose entries
//! already include the cell weights, i.e. `mass[i] = density(point[i]) *
//! weight[i]` after normalization.
//!
//! Integration is the plain weighted sum `Σ f(ω_i)·ν_i`, accumulated with
//! compensated summation so linearity holds to near machine precision even
//! on 10^5-cell grids.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::MASS_TOL;

/// Compensated (Kahan) accumulator. Keeps long-sum drift near one ulp.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// A finite grid of state labels with positive measure weights.
///
/// Labels must be strictly increasing; weights must all be positive and of
/// finite total mass. The weight of cell `i` is the measure of that cell,
/// so `Σ weights` is the total mass of the space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl StateSpace {
    /// Build a space from explicit labels and weights.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Arc<Self>> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("need at least one point".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidGrid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid("points must be finite".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidGrid("weights must be positive and finite".into()));
        }
        let total = kahan_sum(weights.iter().copied());
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::InvalidGrid("total mass must be positive and finite".into()));
        }
        Ok(Arc::new(StateSpace { points, weights }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Total measure of the space.
    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.weights.iter().copied())
    }

    /// Index of the cell whose label equals `value` bit-exactly, if any.
    pub fn index_of(&self, value: f64) -> Option<usize> {
        self.points
            .binary_search_by(|p| p.partial_cmp(&value).expect("finite labels"))
            .ok()
    }

    /// The grid labels bracketing `value`, for error messages.
    pub fn nearest(&self, value: f64) -> (f64, f64) {
        match self
            .points
            .binary_search_by(|p| p.partial_cmp(&value).expect("finite labels"))
        {
            Ok(i) => (self.points[i], self.points[i]),
            Err(i) => {
                let below = if i == 0 { f64::NEG_INFINITY } else { self.points[i - 1] };
                let above = if i == self.points.len() { f64::INFINITY } else { self.points[i] };
                (below, above)
            }
        }
    }

    /// Product of two spaces: cell `(i, j)` becomes flat index `i·n2 + j`
    /// with weight `ν1_i·ν2_j`. Labels of product cells are synthetic (the
    /// flat index), since a pair of coordinates has no single real label;
    /// nothing downstream interprets product labels as coordinates.
    pub fn product(a: &Arc<StateSpace>, b: &Arc<StateSpace>) -> Result<Arc<StateSpace>> {
        let n = a.len().checked_mul(b.len()).ok_or_else(|| {
            Error::ResourceLimit("product grid size overflows usize".into())
        })?;
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..a.len() {
            for j in 0..b.len() {
                points.push((i * b.len() + j) as f64);
                weights.push(a.weight(i) * b.weight(j));
            }
        }
        StateSpace::new(points, weights)
    }
}

/// Uniform grid of `n` cell midpoints on `[lo, hi]`, each of weight
/// `(hi - lo) / n` (midpoint rule).
///
/// ```
/// use envelopes_core::measure::make_uniform_grid;
/// let g = make_uniform_grid(0.0, 1.0, 2).unwrap();
/// assert_eq!(g.points(), &[0.25, 0.75]);
/// assert_eq!(g.weights(), &[0.5, 0.5]);
/// ```
pub fn make_uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Arc<StateSpace>> {
    if n < 2 {
        return Err(Error::InvalidGrid(format!("need n >= 2 cells, got {n}")));
    }
    if lo >= hi || lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidGrid(format!("need lo < hi, got lo={lo}, hi={hi}")));
    }
    let step = (hi - lo) / n as f64;
    let points = (0..n).map(|i| lo + (i as f64 + 0.5) * step).collect();
    let weights = vec![step; n];
    StateSpace::new(points, weights)
}

/// A point mass at one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PureState {
    index: usize,
}

impl PureState {
    pub fn new(space: &StateSpace, index: usize) -> Result<Self> {
        if index >= space.len() {
            return Err(Error::Domain(format!(
                "state index {index} out of range for a {}-point space",
                space.len()
            )));
        }
        Ok(PureState { index })
    }

    /// The pure state at the cell labelled `value`, which must be on-grid.
    pub fn at_value(space: &StateSpace, value: f64) -> Result<Self> {
        match space.index_of(value) {
            Some(index) => Ok(PureState { index }),
            None => {
                let (below, above) = space.nearest(value);
                Err(Error::OffGrid { value, below, above })
            }
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// For indices already validated against the intended space.
    pub(crate) fn from_index_unchecked(index: usize) -> Self {
        PureState { index }
    }
}

/// A probability mass vector over a state space.
///
/// `mass[i]` is the probability of cell `i` and already includes the cell's
/// measure weight; the vector sums to 1 within [`MASS_TOL`].
#[derive(Debug, Clone)]
pub struct MixedState {
    space: Arc<StateSpace>,
    mass: Vec<f64>,
}

impl MixedState {
    pub fn new(space: Arc<StateSpace>, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != space.len() {
            return Err(Error::InvalidMass(format!(
                "{} masses for a {}-point space",
                mass.len(),
                space.len()
            )));
        }
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidMass("masses must be non-negative and finite".into()));
        }
        let total = kahan_sum(mass.iter().copied());
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMass(format!("masses sum to {total}, expected 1")));
        }
        Ok(MixedState { space, mass })
    }

    /// Point mass concentrated on one cell.
    pub fn point_mass(space: Arc<StateSpace>, s: PureState) -> Result<Self> {
        let mut mass = vec![0.0; space.len()];
        if s.index() >= space.len() {
            return Err(Error::Domain(format!("state index {} out of range", s.index())));
        }
        mass[s.index()] = 1.0;
        MixedState::new(space, mass)
    }

    /// Independent product: mass of product cell `(i, j)` is `m1_i·m2_j`.
    pub fn product(a: &MixedState, b: &MixedState) -> Result<Self> {
        let space = StateSpace::product(a.space_arc(), b.space_arc())?;
        let mut mass = Vec::with_capacity(a.mass.len() * b.mass.len());
        for &ma in &a.mass {
            for &mb in &b.mass {
                mass.push(ma * mb);
            }
        }
        // Renormalize away rounding from the products.
        let total = kahan_sum(mass.iter().copied());
        for m in &mut mass {
            *m /= total;
        }
        MixedState::new(space, mass)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn space_arc(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Mean of the state label under this distribution.
    pub fn mean(&self) -> f64 {
        kahan_sum(
            self.mass
                .iter()
                .zip(self.space.points())
                .map(|(m, p)| m * p),
        )
    }
}

/// Normalize a pointwise density against the grid measure.
///
/// Returns the mixed state with `mass_i ∝ density(ω_i)·ν_i` together with
/// the raw (pre-normalization) integral `Σ density(ω_i)·ν_i`. For a true
/// probability density the raw integral is the mass the grid actually
/// covers, so callers can detect heavy truncation by how far it falls
/// below 1.
pub fn mixed_from_density<F>(space: &Arc<StateSpace>, density: F) -> Result<(MixedState, f64)>
where
    F: Fn(f64) -> f64,
{
    let mut raw = Vec::with_capacity(space.len());
    for i in 0..space.len() {
        let d = density(space.point(i));
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidDensity(format!(
                "density({}) = {d}; must be finite and non-negative",
                space.point(i)
            )));
        }
        raw.push(d * space.weight(i));
    }
    let total = kahan_sum(raw.iter().copied());
    if total <= 0.0 {
        return Err(Error::InvalidDensity(
            "density is zero at every grid point".into(),
        ));
    }
    for m in &mut raw {
        *m /= total;
    }
    let state = MixedState::new(Arc::clone(space), raw)?;
    Ok((state, total))
}

/// Weighted-sum integral `Σ f(ω_i)·ν_i` over the grid.
pub fn integrate<F>(space: &StateSpace, f: F) -> f64
where
    F: Fn(f64) -> f64,
{
    kahan_sum(
        space
            .points()
            .iter()
            .zip(space.weights())
            .map(|(p, w)| f(*p) * w),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_grid_two_cells() {
        let g = make_uniform_grid(0.0, 1.0, 2).unwrap();
        assert_eq!(g.points(), &[0.25, 0.75]);
        assert_eq!(g.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn uniform_grid_thousand_cells() {
        let g = make_uniform_grid(0.0, 10.0, 1000).unwrap();
        assert_eq!(g.len(), 1000);
        assert!(g.weights().iter().all(|&w| (w - 0.01).abs() < 1e-15));
        assert_abs_diff_eq!(g.total_mass(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_grid_rejects_bad_params() {
        assert!(make_uniform_grid(1.0, 0.0, 5).is_err());
        assert!(make_uniform_grid(0.0, 1.0, 1).is_err());
        assert!(make_uniform_grid(2.0, 2.0, 4).is_err());
    }

    #[test]
    fn state_space_rejects_unsorted_points() {
        assert!(StateSpace::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(StateSpace::new(vec![2.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(StateSpace::new(vec![1.0, 2.0], vec![0.5, -0.5]).is_err());
        assert!(StateSpace::new(vec![], vec![]).is_err());
    }

    #[test]
    fn pure_state_bounds() {
        let g = make_uniform_grid(0.0, 1.0, 4).unwrap();
        assert!(PureState::new(&g, 3).is_ok());
        assert!(PureState::new(&g, 4).is_err());
    }

    #[test]
    fn pure_state_by_value() {
        let g = make_uniform_grid(0.0, 1.0, 4).unwrap();
        assert_eq!(PureState::at_value(&g, 0.375).unwrap().index(), 1);
        let err = PureState::at_value(&g, 0.3).unwrap_err();
        assert!(matches!(err, Error::OffGrid { .. }), "{err}");
    }

    #[test]
    fn exponential_density_mean_near_one() {
        // Analytic check: Exp(1) has mean 1; the grid integral should be
        // within midpoint-rule error.
        let g = make_uniform_grid(0.0, 30.0, 30_000).unwrap();
        let (rho, raw) = mixed_from_density(&g, |w| (-w).exp()).unwrap();
        assert_abs_diff_eq!(kahan_sum(rho.mass().iter().copied()), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.mean(), 1.0, epsilon = 1e-3);
        // Truncated tail is e^{-30}; the covered mass is essentially 1.
        assert_abs_diff_eq!(raw, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn constant_density_is_uniform() {
        let g = make_uniform_grid(0.0, 1.0, 100).unwrap();
        let (rho, _) = mixed_from_density(&g, |_| 1.0).unwrap();
        assert!(rho.mass().iter().all(|&m| (m - 0.01).abs() < 1e-12));
    }

    #[test]
    fn zero_and_negative_densities_rejected() {
        let g = make_uniform_grid(0.0, 1.0, 10).unwrap();
        assert!(mixed_from_density(&g, |_| 0.0).is_err());
        assert!(mixed_from_density(&g, |w| w - 0.5).is_err());
    }

    #[test]
    fn integrate_total_mass_and_symmetry() {
        let g = make_uniform_grid(0.0, 1.0, 100).unwrap();
        assert_abs_diff_eq!(integrate(&g, |_| 1.0), 1.0, epsilon = 1e-12);
        // Midpoint rule is exact for linear integrands.
        assert_abs_diff_eq!(integrate(&g, |w| w), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn integrate_gamma_two() {
        // Γ(2) = ∫ ω e^{-ω} dω = 1, truncated tail negligible at 30.
        let g = make_uniform_grid(0.0, 30.0, 30_000).unwrap();
        assert_abs_diff_eq!(integrate(&g, |w| w * (-w).exp()), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn product_space_weights_multiply() {
        let a = StateSpace::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let b = StateSpace::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        let p = StateSpace::product(&a, &b).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.weights().iter().all(|&w| (w - 0.5).abs() < 1e-15));
    }

    #[test]
    fn point_mass_state() {
        let g = make_uniform_grid(0.0, 1.0, 4).unwrap();
        let s = PureState::new(&g, 2).unwrap();
        let rho = MixedState::point_mass(Arc::clone(&g), s).unwrap();
        assert_eq!(rho.mass(), &[0.0, 0.0, 1.0, 0.0]);
    }
}
