//! Empirical markets built from observed `(p, c)` samples and the uniform
//! distance between win/payment curves.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::market::{MarketDistribution, Multiplier};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("sample set is empty")]
    Empty,
    #[error("sample ({p}, {c}) lies outside [0, 1]²")]
    OutOfRange { p: f64, c: f64 },
}

/// Observed `(p, c)` pairs in arrival order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    samples: Vec<(f64, f64)>,
}

impl SampleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: Vec<(f64, f64)>) -> Result<Self, EstimateError> {
        let mut s = Self::new();
        for (p, c) in pairs {
            s.push(p, c)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, p: f64, c: f64) -> Result<(), EstimateError> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&c) {
            return Err(EstimateError::OutOfRange { p, c });
        }
        self.samples.push((p, c));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.samples
    }
}

/// Occurrence counts of distinct samples, maintained incrementally so an
/// empirical market can be rebuilt without rescanning every sample.
#[derive(Debug, Clone, Default)]
pub struct SampleCounts {
    // Keyed by bit patterns, which order like the values for non-negative floats.
    counts: BTreeMap<(u64, u64), usize>,
    n: usize,
}

impl SampleCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(s: &SampleSet) -> Self {
        let mut counts = Self::new();
        for &(p, c) in s.pairs() {
            counts.add(p, c);
        }
        counts
    }

    pub fn add(&mut self, p: f64, c: f64) {
        let key = ((p + 0.0).to_bits(), (c + 0.0).to_bits());
        *self.counts.entry(key).or_insert(0) += 1;
        self.n += 1;
    }

    pub fn total(&self) -> usize {
        self.n
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    fn pairs(&self) -> impl Iterator<Item = ((f64, f64), usize)> + '_ {
        self.counts
            .iter()
            .map(|(&(p, c), &k)| ((f64::from_bits(p), f64::from_bits(c)), k))
    }

    pub fn market(&self) -> Result<MarketDistribution, EstimateError> {
        if self.n == 0 {
            return Err(EstimateError::Empty);
        }
        Ok(MarketDistribution::from_counts(self.pairs(), self.n))
    }

    /// Empirical market after rounding `p` and `c` to the nearest multiple of `1/q`.
    pub fn quantized_market(&self, q: u32) -> Result<MarketDistribution, EstimateError> {
        if self.n == 0 {
            return Err(EstimateError::Empty);
        }
        let scale = f64::from(q);
        let snap = |x: f64| ((x * scale).round() / scale).clamp(0.0, 1.0);
        Ok(MarketDistribution::from_counts(
            self.pairs().map(|((p, c), k)| ((snap(p), snap(c)), k)),
            self.n,
        ))
    }
}

/// Each distinct `(p, c)` becomes an atom with probability `count / n`.
pub fn empirical_market(s: &SampleSet) -> Result<MarketDistribution, EstimateError> {
    SampleCounts::from_samples(s).market()
}

/// `(W_n(μ), P_n(μ))` of the empirical market.
pub fn empirical_wp(s: &SampleSet, a: Multiplier) -> Result<(f64, f64), EstimateError> {
    Ok(empirical_market(s)?.win_pay(a))
}

/// `(sup_μ |W_a − W_b|, sup_μ |P_a − P_b|)` over `μ ∈ [0, ∞]`.
///
/// Both curves are step functions of `μ` that change only just above a
/// candidate multiplier, so evaluating at every candidate of either market,
/// the midpoints between them and one point beyond the largest is exact.
pub fn sup_error(a: &MarketDistribution, b: &MarketDistribution) -> (f64, f64) {
    let mut mus: Vec<f64> = a
        .candidate_multipliers()
        .into_iter()
        .chain(b.candidate_multipliers())
        .filter(|m| !m.is_skip())
        .map(Multiplier::value)
        .collect();
    mus.sort_by(|x, y| x.partial_cmp(y).expect("finite multipliers"));
    mus.dedup();
    let mut points = Vec::with_capacity(2 * mus.len() + 1);
    for (i, &mu) in mus.iter().enumerate() {
        points.push(Multiplier::Finite(mu));
        match mus.get(i + 1) {
            Some(&next) => points.push(Multiplier::Finite(0.5 * (mu + next))),
            None => points.push(Multiplier::Finite(2.0 * mu + 1.0)),
        }
    }
    points.push(Multiplier::Skip);
    points.into_iter().fold((0.0f64, 0.0f64), |(ew, ep), mu| {
        let (wa, pa) = a.win_pay(mu);
        let (wb, pb) = b.win_pay(mu);
        (ew.max((wa - wb).abs()), ep.max((pa - pb).abs()))
    })
}
