//! Effect-valued observables over a state space.
//!
//! An [`Observable`] pairs a finite outcome alphabet with an effect table:
//! `effect(i, x)` is the probability of measuring outcome `x` when the
//! state is grid cell `i`. Every row sums to 1. Rows are stored sparsely
//! (outcome index, effect) because the envelope models put only one or two
//! outcomes per cell on grids of tens of thousands of cells, where a dense
//! table would not fit in memory.
//!
//! Constructors cover the shapes the exchange models need: deterministic
//! lifts of a payout map, convex mixtures, the correlated quasi-product of
//! two payout maps, independent products, and i.i.d. repetition.

use std::fmt;
use std::sync::Arc;

use ordered_float::NotNan;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::measure::{kahan_sum, StateSpace};
use crate::MASS_TOL;

/// Default cap on `grid cells × outcomes` for materialized tables.
pub const DEFAULT_TABLE_CELL_CAP: usize = 1_000_000;

/// An outcome value: a real number, or an ordered tuple of outcomes for
/// joint measurements. Equality is exact representation equality, so
/// outcome values are constructed once and reused, never recomputed via
/// lossy arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Real(NotNan<f64>),
    Tuple(Vec<Outcome>),
}

impl Outcome {
    pub fn real(v: f64) -> Self {
        Outcome::Real(NotNan::new(v).expect("outcome values must not be NaN"))
    }

    pub fn pair(a: f64, b: f64) -> Self {
        Outcome::Tuple(vec![Outcome::real(a), Outcome::real(b)])
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Outcome::Real(v) => Some(v.into_inner()),
            Outcome::Tuple(_) => None,
        }
    }

    /// Component `i` of a tuple outcome, as a real.
    pub fn component(&self, i: usize) -> Option<f64> {
        match self {
            Outcome::Real(v) if i == 0 => Some(v.into_inner()),
            Outcome::Tuple(parts) => parts.get(i).and_then(Outcome::as_real),
            _ => None,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Real(v) => write!(f, "{}", v.into_inner()),
            Outcome::Tuple(parts) => {
                write!(f, "(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Outcome::Real(v) => serializer.serialize_f64(v.into_inner()),
            Outcome::Tuple(parts) => {
                let mut seq = serializer.serialize_seq(Some(parts.len()))?;
                for p in parts {
                    seq.serialize_element(p)?;
                }
                seq.end()
            }
        }
    }
}

/// Sparse effect row: (outcome index, effect), sorted by outcome index.
type Row = Vec<(u32, f64)>;

/// A finite-alphabet observable: outcome list plus per-cell effect rows.
#[derive(Debug, Clone)]
pub struct Observable {
    space: Arc<StateSpace>,
    outcomes: Vec<Outcome>,
    rows: Vec<Row>,
}

impl Observable {
    /// Validating constructor. `rows[i]` lists the nonzero effects of cell
    /// `i` as (outcome index, effect); outcomes must be sorted and unique.
    pub fn new(space: Arc<StateSpace>, outcomes: Vec<Outcome>, rows: Vec<Row>) -> Result<Self> {
        if rows.len() != space.len() {
            return Err(Error::InvalidObservable(format!(
                "{} effect rows for a {}-point space",
                rows.len(),
                space.len()
            )));
        }
        if outcomes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidObservable(
                "outcomes must be sorted and distinct".into(),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            let mut prev: Option<u32> = None;
            for &(x, e) in row {
                if x as usize >= outcomes.len() {
                    return Err(Error::InvalidObservable(format!(
                        "row {i} references outcome index {x} out of range"
                    )));
                }
                if prev.is_some_and(|p| p >= x) {
                    return Err(Error::InvalidObservable(format!(
                        "row {i} entries must be sorted by outcome index"
                    )));
                }
                prev = Some(x);
                if !(0.0..=1.0).contains(&e) {
                    return Err(Error::InvalidObservable(format!(
                        "effect {e} at row {i} outside [0, 1]"
                    )));
                }
                sum += e;
            }
            if (sum - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidObservable(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Observable { space, outcomes, rows })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn space_arc(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn outcome_index(&self, x: &Outcome) -> Option<usize> {
        self.outcomes.binary_search(x).ok()
    }

    /// Effect of outcome index `x` at cell `i` (zero if absent).
    pub fn effect(&self, i: usize, x: usize) -> f64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&(x as u32), |&(k, _)| k) {
            Ok(pos) => row[pos].1,
            Err(_) => 0.0,
        }
    }

    /// Nonzero effects of cell `i` as (outcome index, effect).
    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    /// The whole column `e[·][x]`, densely.
    pub fn column(&self, x: usize) -> Vec<f64> {
        let mut col = vec![0.0; self.rows.len()];
        for (i, row) in self.rows.iter().enumerate() {
            if let Ok(pos) = row.binary_search_by_key(&(x as u32), |&(k, _)| k) {
                col[i] = row[pos].1;
            }
        }
        col
    }

    /// Number of logical table cells (grid × outcomes).
    pub fn table_cells(&self) -> usize {
        self.rows.len().saturating_mul(self.outcomes.len())
    }

    /// True when every row is a single unit effect.
    pub fn is_deterministic(&self) -> bool {
        self.rows.iter().all(|r| r.len() == 1 && r[0].1 == 1.0)
    }

    /// Push outcomes through `f`, merging effects of outcomes that map to
    /// the same image. Marginals of joint observables are the main use:
    /// mapping a pair outcome to one coordinate sums the pair effects over
    /// the other coordinate.
    pub fn map_outcomes<F>(&self, f: F) -> Result<Observable>
    where
        F: Fn(&Outcome) -> Outcome,
    {
        let images: Vec<Outcome> = self.outcomes.iter().map(&f).collect();
        let mut sorted: Vec<Outcome> = images.clone();
        sorted.sort();
        sorted.dedup();
        let remap: Vec<u32> = images
            .iter()
            .map(|o| sorted.binary_search(o).expect("image present") as u32)
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut merged: Row = Vec::with_capacity(row.len());
                for &(x, e) in row {
                    let nx = remap[x as usize];
                    match merged.binary_search_by_key(&nx, |&(k, _)| k) {
                        Ok(pos) => merged[pos].1 += e,
                        Err(pos) => merged.insert(pos, (nx, e)),
                    }
                }
                merged
            })
            .collect();
        Observable::new(Arc::clone(&self.space), sorted, rows)
    }
}

fn same_space(a: &Observable, b: &Observable) -> bool {
    Arc::ptr_eq(&a.space, &b.space) || a.space() == b.space()
}

/// Sort-and-index a batch of outcome values; returns the canonical outcome
/// list and, per input, the index of its value.
fn canonicalize(values: Vec<Outcome>) -> (Vec<Outcome>, Vec<u32>) {
    let mut sorted = values.clone();
    sorted.sort();
    sorted.dedup();
    let idx = values
        .iter()
        .map(|v| sorted.binary_search(v).expect("value present") as u32)
        .collect();
    (sorted, idx)
}

/// Deterministic lift of a payout map: at each cell the full unit effect
/// sits on the single outcome `V(ω_i)`.
pub fn deterministic_observable<F>(space: &Arc<StateSpace>, v: F) -> Result<Observable>
where
    F: Fn(f64) -> f64,
{
    let values: Vec<Outcome> = space.points().iter().map(|&p| Outcome::real(v(p))).collect();
    let (outcomes, idx) = canonicalize(values);
    let rows = idx.into_iter().map(|x| vec![(x, 1.0)]).collect();
    Observable::new(Arc::clone(space), outcomes, rows)
}

/// Convex mixture of observables on a common space:
/// `e[i][x] = Σ_k w_k·e_k[i][x]` over the union alphabet.
pub fn mix_observables(parts: &[&Observable], weights: &[f64]) -> Result<Observable> {
    if parts.is_empty() || parts.len() != weights.len() {
        return Err(Error::Domain(format!(
            "{} observables with {} weights",
            parts.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidMass("mixture weights must be non-negative".into()));
    }
    let total = kahan_sum(weights.iter().copied());
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidMass(format!(
            "mixture weights sum to {total}, expected 1"
        )));
    }
    for p in &parts[1..] {
        if !same_space(parts[0], p) {
            return Err(Error::SpaceMismatch(
                "mixed observables must share one state space".into(),
            ));
        }
    }

    // Zero-weight parts contribute neither effects nor outcomes, so a
    // (1, 0) mixture returns the first part exactly.
    let mut outcomes: Vec<Outcome> = parts
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .flat_map(|(p, _)| p.outcomes.iter().cloned())
        .collect();
    outcomes.sort();
    outcomes.dedup();
    let remaps: Vec<Vec<u32>> = parts
        .iter()
        .zip(weights)
        .map(|(p, &w)| {
            if w == 0.0 {
                Vec::new()
            } else {
                p.outcomes
                    .iter()
                    .map(|o| outcomes.binary_search(o).expect("union member") as u32)
                    .collect()
            }
        })
        .collect();

    let n = parts[0].space.len();
    let mut rows: Vec<Row> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Row = Vec::new();
        for (k, part) in parts.iter().enumerate() {
            let w = weights[k];
            if w == 0.0 {
                continue;
            }
            for &(x, e) in part.row(i) {
                let nx = remaps[k][x as usize];
                match row.binary_search_by_key(&nx, |&(j, _)| j) {
                    Ok(pos) => row[pos].1 += w * e,
                    Err(pos) => row.insert(pos, (nx, w * e)),
                }
            }
        }
        rows.push(row);
    }
    Observable::new(Arc::clone(&parts[0].space), outcomes, rows)
}

/// Correlated joint observable of two deterministic lifts on one space:
/// at each cell, effect ½ on the ordered pair `(V1(ω), V2(ω))` and ½ on
/// `(V2(ω), V1(ω))`, collapsing to a single unit effect when the payouts
/// coincide (swapping equal payouts changes nothing).
pub fn quasi_product_envelope(o1: &Observable, o2: &Observable) -> Result<Observable> {
    if !same_space(o1, o2) {
        return Err(Error::SpaceMismatch(
            "quasi-product factors must share one state space".into(),
        ));
    }
    if !o1.is_deterministic() || !o2.is_deterministic() {
        return Err(Error::InvalidObservable(
            "quasi-product factors must be deterministic lifts".into(),
        ));
    }
    let n = o1.space.len();
    let mut pair_values: Vec<Outcome> = Vec::with_capacity(2 * n);
    let mut per_cell: Vec<(Outcome, Outcome)> = Vec::with_capacity(n);
    for i in 0..n {
        let v1 = o1.outcomes[o1.row(i)[0].0 as usize].clone();
        let v2 = o2.outcomes[o2.row(i)[0].0 as usize].clone();
        let fwd = Outcome::Tuple(vec![v1.clone(), v2.clone()]);
        let rev = Outcome::Tuple(vec![v2, v1]);
        pair_values.push(fwd.clone());
        pair_values.push(rev.clone());
        per_cell.push((fwd, rev));
    }
    let (outcomes, _) = canonicalize(pair_values);
    let rows = per_cell
        .into_iter()
        .map(|(fwd, rev)| {
            let xf = outcomes.binary_search(&fwd).expect("present") as u32;
            let xr = outcomes.binary_search(&rev).expect("present") as u32;
            if xf == xr {
                vec![(xf, 1.0)]
            } else {
                let (lo, hi) = if xf < xr { (xf, xr) } else { (xr, xf) };
                vec![(lo, 0.5), (hi, 0.5)]
            }
        })
        .collect();
    Observable::new(Arc::clone(&o1.space), outcomes, rows)
}

/// Independent product observable on the product space:
/// `e[(i,j)][(x,y)] = e1[i][x]·e2[j][y]`.
pub fn product_observable(o1: &Observable, o2: &Observable) -> Result<Observable> {
    product_observable_capped(o1, o2, DEFAULT_TABLE_CELL_CAP)
}

/// [`product_observable`] with an explicit cap on logical table cells.
pub fn product_observable_capped(
    o1: &Observable,
    o2: &Observable,
    cap: usize,
) -> Result<Observable> {
    let cells = o1
        .space
        .len()
        .checked_mul(o2.space.len())
        .and_then(|g| g.checked_mul(o1.outcomes.len()))
        .and_then(|g| g.checked_mul(o2.outcomes.len()));
    match cells {
        Some(c) if c <= cap => {}
        _ => {
            return Err(Error::ResourceLimit(format!(
                "product table would exceed the {cap}-cell cap"
            )))
        }
    }

    let space = StateSpace::product(&o1.space, &o2.space)?;
    let mut pair_values: Vec<Outcome> = Vec::with_capacity(o1.outcomes.len() * o2.outcomes.len());
    for a in &o1.outcomes {
        for b in &o2.outcomes {
            pair_values.push(Outcome::Tuple(vec![a.clone(), b.clone()]));
        }
    }
    let (outcomes, idx) = canonicalize(pair_values);

    let n2 = o2.outcomes.len();
    let mut rows: Vec<Row> = Vec::with_capacity(o1.space.len() * o2.space.len());
    for i in 0..o1.space.len() {
        for j in 0..o2.space.len() {
            let mut row: Row = Vec::with_capacity(o1.row(i).len() * o2.row(j).len());
            for &(x, ex) in o1.row(i) {
                for &(y, ey) in o2.row(j) {
                    let k = idx[x as usize * n2 + y as usize];
                    match row.binary_search_by_key(&k, |&(q, _)| q) {
                        Ok(pos) => row[pos].1 += ex * ey,
                        Err(pos) => row.insert(pos, (k, ex * ey)),
                    }
                }
            }
            rows.push(row);
        }
    }
    Observable::new(space, outcomes, rows)
}

/// i.i.d. repetition of one observable along the diagonal state: `n`
/// independent copies measured at the same cell, outcomes collected into
/// ordered `n`-tuples.
///
/// Within the cell cap the table is materialized; above it only lazy
/// sampling is possible and [`Parallel::table`] reports a resource error.
#[derive(Debug, Clone)]
pub enum Parallel {
    Table(Observable),
    Lazy { base: Observable, n: usize },
}

impl Parallel {
    pub fn base_and_arity(&self) -> (&Observable, usize) {
        match self {
            Parallel::Table(o) => (o, 1),
            Parallel::Lazy { base, n } => (base, *n),
        }
    }

    /// The materialized table, or a resource error if the repetition was
    /// too large to materialize.
    pub fn table(&self) -> Result<&Observable> {
        match self {
            Parallel::Table(o) => Ok(o),
            Parallel::Lazy { n, .. } => Err(Error::ResourceLimit(format!(
                "{n}-fold parallel table above the materialization cap; use lazy sampling"
            ))),
        }
    }
}

/// Build the `n`-fold i.i.d. repetition of `o` with the default cell cap.
pub fn iid_parallel(o: &Observable, n: usize) -> Result<Parallel> {
    iid_parallel_capped(o, n, DEFAULT_TABLE_CELL_CAP)
}

pub fn iid_parallel_capped(o: &Observable, n: usize, cap: usize) -> Result<Parallel> {
    if n == 0 {
        return Err(Error::Domain("parallel repetition needs n >= 1".into()));
    }
    if n == 1 {
        return Ok(Parallel::Table(o.clone()));
    }
    // Cells of the materialized table: grid × |X|^n.
    let mut cells: Option<usize> = Some(o.space.len());
    for _ in 0..n {
        cells = cells.and_then(|c| c.checked_mul(o.outcomes.len()));
    }
    if !matches!(cells, Some(c) if c <= cap) {
        return Ok(Parallel::Lazy { base: o.clone(), n });
    }

    // Materialize by repeated diagonal extension: rows stay indexed by the
    // base grid, outcomes grow to n-tuples.
    let mut outcomes: Vec<Outcome> = o.outcomes.iter().map(|x| Outcome::Tuple(vec![x.clone()])).collect();
    let mut rows: Vec<Row> = o.rows.clone();
    for _ in 1..n {
        let mut next_values = Vec::with_capacity(outcomes.len() * o.outcomes.len());
        for t in &outcomes {
            for x in &o.outcomes {
                let Outcome::Tuple(parts) = t else { unreachable!() };
                let mut parts = parts.clone();
                parts.push(x.clone());
                next_values.push(Outcome::Tuple(parts));
            }
        }
        let (next_outcomes, idx) = canonicalize(next_values);
        let m = o.outcomes.len();
        rows = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut out: Row = Vec::with_capacity(row.len() * o.row(i).len());
                for &(t, et) in row {
                    for &(x, ex) in o.row(i) {
                        let k = idx[t as usize * m + x as usize];
                        match out.binary_search_by_key(&k, |&(q, _)| q) {
                            Ok(pos) => out[pos].1 += et * ex,
                            Err(pos) => out.insert(pos, (k, et * ex)),
                        }
                    }
                }
                out
            })
            .collect();
        outcomes = next_outcomes;
    }
    Ok(Parallel::Table(Observable::new(
        Arc::clone(&o.space),
        outcomes,
        rows,
    )?))
}
