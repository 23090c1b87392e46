//! Solution filtering and multi-solution quality indices.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{EdgeSet, Tour};
use crate::scalar::Scalar;

pub const DEFAULT_DELTA1: f64 = 0.1;
pub const DEFAULT_DELTA2: f64 = 0.8;

/// Denominator used by [`similarity_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SimilarityMode {
    /// Shared edges divided by the node count.
    #[default]
    Nodes,
    /// Shared edges divided by the mean edge-set size of the two solutions (routing
    /// problems whose solutions differ in edge count).
    MeanEdges,
}

pub fn similarity_with<S: Scalar>(a: &EdgeSet, b: &EdgeSet, n: usize, mode: SimilarityMode) -> S {
    let shared = S::from_count(a.shared(b));
    match mode {
        SimilarityMode::Nodes => shared / S::from_count(n),
        SimilarityMode::MeanEdges => {
            let mean = S::from_count(a.len() + b.len()) / S::lit(2.0);
            if mean == S::zero() {
                S::zero()
            } else {
                shared / mean
            }
        }
    }
}

/// Fraction of the `n` edges shared by two tours.
pub fn similarity<S: Scalar>(a: &Tour<S>, b: &Tour<S>, n: usize) -> Result<S> {
    if a.n() != n || b.n() != n {
        return Err(Error::Dimension(format!(
            "tours over {} and {} nodes compared as {n}-node tours",
            a.n(),
            b.n()
        )));
    }
    Ok(similarity_with(a.edges(), b.edges(), n, SimilarityMode::Nodes))
}

/// Diverse near-optimal tours. `tours[best_index]` has minimum length.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet<S> {
    tours: Vec<Tour<S>>,
    delta1: S,
    delta2: S,
    best_index: usize,
}

impl<S: Scalar> SolutionSet<S> {
    pub fn tours(&self) -> &[Tour<S>] {
        &self.tours
    }

    pub fn into_tours(self) -> Vec<Tour<S>> {
        self.tours
    }

    pub fn delta1(&self) -> S {
        self.delta1
    }

    pub fn delta2(&self) -> S {
        self.delta2
    }

    pub fn best_index(&self) -> usize {
        self.best_index
    }

    pub fn best(&self) -> &Tour<S> {
        &self.tours[self.best_index]
    }

    pub fn len(&self) -> usize {
        self.tours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tours.is_empty()
    }

    /// Node count of the member tours.
    pub fn n(&self) -> usize {
        self.best().n()
    }
}

fn by_length_then_canonical<S: Scalar>(a: &Tour<S>, b: &Tour<S>) -> Ordering {
    a.length()
        .partial_cmp(&b.length())
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.canonical_order().cmp(&b.canonical_order()))
}

/// Orders tours by (length, canonical order) and drops edge-set duplicates,
/// keeping the first representative.
pub fn dedup_sorted<S: Scalar>(mut tours: Vec<Tour<S>>) -> Vec<Tour<S>> {
    tours.sort_by(by_length_then_canonical);
    let mut seen = std::collections::HashSet::new();
    tours.retain(|t| seen.insert(t.edges().clone()));
    tours
}

fn check_thresholds<S: Scalar>(delta1: S, delta2: S) -> Result<()> {
    if !(delta1 > S::zero()) || !delta1.is_finite() {
        return Err(Error::InvalidArgument(format!("delta1 must be positive, got {delta1}")));
    }
    if !(delta2 > S::zero() && delta2 <= S::one()) {
        return Err(Error::InvalidArgument(format!("delta2 must lie in (0, 1], got {delta2}")));
    }
    Ok(())
}

/// Optimality filter followed by a greedy diversity filter in ascending length order.
pub fn filter_solutions<S: Scalar>(tours: Vec<Tour<S>>, delta1: S, delta2: S) -> Result<SolutionSet<S>> {
    check_thresholds(delta1, delta2)?;
    if tours.is_empty() {
        return Err(Error::InvalidArgument("no tours to filter".into()));
    }
    let n = tours[0].n();
    if tours.iter().any(|t| t.n() != n) {
        return Err(Error::Dimension("tours over different node counts".into()));
    }
    if tours.iter().any(|t| !t.length().is_finite()) {
        return Err(Error::NonFinite("tour length".into()));
    }
    let sorted = dedup_sorted(tours);
    let limit = sorted[0].length() * (S::one() + delta1);
    let mut kept: Vec<Tour<S>> = Vec::new();
    for t in sorted {
        let accept = kept.is_empty()
            || (t.length() < limit
                && kept.iter().all(|k| {
                    similarity_with::<S>(k.edges(), t.edges(), n, SimilarityMode::Nodes) < delta2
                }));
        if accept {
            kept.push(t);
        }
    }
    Ok(SolutionSet {
        tours: kept,
        delta1,
        delta2,
        best_index: 0,
    })
}

/// Piecewise diversity transform: 1 up to half the edges shared, then linear to 0.
pub fn u_value<S: Scalar>(s: S) -> Result<S> {
    if !(s >= S::zero() && s <= S::one()) {
        return Err(Error::InvalidArgument(format!("similarity {s} outside [0, 1]")));
    }
    let half = S::lit(0.5);
    Ok(if s <= half { S::one() } else { S::lit(2.0) * (S::one() - s) })
}

/// Mean of U against the other members; 0 for a singleton set.
pub fn diff_index<S: Scalar>(i: usize, set: &SolutionSet<S>) -> Result<S> {
    let tours = set.tours();
    if i >= tours.len() {
        return Err(Error::InvalidArgument(format!("index {i} outside a set of {}", tours.len())));
    }
    if tours.len() == 1 {
        return Ok(S::zero());
    }
    let n = set.n();
    let mut total = S::zero();
    for (j, t) in tours.iter().enumerate() {
        if j != i {
            total += u_value(similarity_with::<S>(tours[i].edges(), t.edges(), n, SimilarityMode::Nodes))?;
        }
    }
    Ok(total / S::from_count(tours.len() - 1))
}

/// Normalised distance of a tour's length below the optimality threshold.
pub fn opt_index<S: Scalar>(i: usize, set: &SolutionSet<S>) -> Result<S> {
    let tours = set.tours();
    if i >= tours.len() {
        return Err(Error::InvalidArgument(format!("index {i} outside a set of {}", tours.len())));
    }
    let best = set.best().length();
    let d1 = set.delta1();
    let opt = S::one() - (tours[i].length() - best) / (d1 * best);
    if !(opt > S::zero()) {
        return Err(Error::InvalidArgument(format!(
            "tour {i} of length {} is outside the optimality threshold",
            tours[i].length()
        )));
    }
    Ok(opt)
}

fn harmonic2<S: Scalar>(a: S, b: S) -> S {
    if a == S::zero() || b == S::zero() {
        S::zero()
    } else {
        S::lit(2.0) * a * b / (a + b)
    }
}

/// Set-level harmonic mean of per-tour SQI values, returned with the SQIs.
pub fn msqi<S: Scalar>(set: &SolutionSet<S>) -> Result<(S, Vec<S>)> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty solution set".into()));
    }
    let mut sqi = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        sqi.push(harmonic2(opt_index(i, set)?, diff_index(i, set)?));
    }
    let m = if sqi.iter().any(|&v| v == S::zero()) {
        S::zero()
    } else {
        S::from_count(sqi.len()) / sqi.iter().map(|&v| S::one() / v).sum::<S>()
    };
    Ok((m, sqi))
}

/// Mean over ground-truth optima of their best similarity to a found tour.
pub fn di<S: Scalar>(ground_truth: &[Tour<S>], found: &[Tour<S>]) -> Result<S> {
    if ground_truth.is_empty() {
        return Err(Error::InvalidArgument("empty ground-truth set".into()));
    }
    let n = ground_truth[0].n();
    if ground_truth.iter().chain(found).any(|t| t.n() != n) {
        return Err(Error::Dimension("ground truth and found tours differ in node count".into()));
    }
    if found.is_empty() {
        return Ok(S::zero());
    }
    let total: S = ground_truth
        .iter()
        .map(|g| {
            found
                .iter()
                .map(|p| similarity_with::<S>(g.edges(), p.edges(), n, SimilarityMode::Nodes))
                .fold(S::zero(), S::max)
        })
        .sum();
    Ok(total / S::from_count(ground_truth.len()))
}

/// Quality summary of one solution set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub size: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub best_length: f64,
    pub msqi: f64,
    pub di: Option<f64>,
    pub opt: Vec<f64>,
    pub diff: Vec<f64>,
    pub sqi: Vec<f64>,
}

impl MetricsReport {
    pub fn compute<S: Scalar>(set: &SolutionSet<S>, ground_truth: Option<&[Tour<S>]>) -> Result<Self> {
        let (m, sqi) = msqi(set)?;
        let opt = (0..set.len()).map(|i| opt_index(i, set).map(S::as_f64)).collect::<Result<_>>()?;
        let diff = (0..set.len()).map(|i| diff_index(i, set).map(S::as_f64)).collect::<Result<_>>()?;
        let di = ground_truth.map(|g| di(g, set.tours())).transpose()?;
        Ok(MetricsReport {
            size: set.len(),
            delta1: set.delta1().as_f64(),
            delta2: set.delta2().as_f64(),
            best_length: set.best().length().as_f64(),
            msqi: m.as_f64(),
            di: di.map(S::as_f64),
            opt,
            diff,
            sqi: sqi.into_iter().map(S::as_f64).collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
