//! Finite-support joint distribution of (price, conversion rate) and the
//! multiplier-indexed win/payment curves `W(μ)`, `P(μ)`.
//!
//! A multiplier `μ` bids `min(1, c/μ)`. Atom `(p, c)` is won iff
//! `c ≥ μ·p`, evaluated as `p == 0 || μ ≤ c/p` so that candidate multipliers
//! `c/p` win their own atom exactly. The simulator uses the same predicate,
//! so ties behave identically in the LP and in simulation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("atom {index}: {what}")]
    BadAtom { index: usize, what: String },
    #[error("probabilities sum to {0}, expected 1")]
    BadMass(f64),
    #[error("market has no atoms")]
    Empty,
    #[error("grid size must be positive")]
    BadGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketAtom {
    pub p: f64,
    pub c: f64,
    pub prob: f64,
}

impl MarketAtom {
    pub fn new(p: f64, c: f64, prob: f64) -> Self {
        Self { p, c, prob }
    }

    /// `c/p`, with `+∞` for zero-price atoms (won by every finite multiplier).
    fn ratio(&self) -> f64 {
        ratio(self.p, self.c)
    }
}

fn ratio(p: f64, c: f64) -> f64 {
    if p == 0.0 {
        f64::INFINITY
    } else {
        c / p
    }
}

/// Bid rule `b(c) = min(1, c/μ)`; `Skip` never participates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Multiplier {
    /// `μ ≥ 0`; `μ = 0` bids 1.
    Finite(f64),
    /// `μ = ∞`.
    Skip,
}

impl Multiplier {
    pub const BID_ONE: Multiplier = Multiplier::Finite(0.0);

    /// `μ` as a real, with `Skip` mapped to `+∞`.
    pub fn value(self) -> f64 {
        match self {
            Multiplier::Finite(mu) => mu,
            Multiplier::Skip => f64::INFINITY,
        }
    }

    pub fn from_value(mu: f64) -> Self {
        if mu.is_infinite() {
            Multiplier::Skip
        } else {
            Multiplier::Finite(mu)
        }
    }

    pub fn is_skip(self) -> bool {
        matches!(self, Multiplier::Skip)
    }

    /// Whether this multiplier wins atom `(p, c)`: `c ≥ μ·p`, ties win.
    pub fn wins(self, p: f64, c: f64) -> bool {
        match self {
            Multiplier::Skip => false,
            Multiplier::Finite(mu) => mu == 0.0 || mu <= ratio(p, c),
        }
    }

    /// Stable key for hashing and basis remapping.
    pub fn key(self) -> u64 {
        self.value().to_bits()
    }
}

impl PartialOrd for Multiplier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

impl fmt::Display for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Multiplier::Finite(mu) => write!(f, "{mu}"),
            Multiplier::Skip => f.write_str("inf"),
        }
    }
}

/// Bid placed by a multiplier on conversion rate `c`; `None` is SKIP.
pub fn bid_for(a: Multiplier, c: f64) -> Option<f64> {
    match a {
        Multiplier::Skip => None,
        Multiplier::Finite(0.0) => Some(1.0),
        Multiplier::Finite(mu) => Some((c / mu).min(1.0)),
    }
}

/// Immutable market with merged duplicate atoms in canonical `(p, c)` order.
#[derive(Debug, Clone)]
pub struct MarketDistribution {
    atoms: Vec<MarketAtom>,
    cumulative: Vec<f64>,
    // Atoms sorted by descending ratio with running sums of prob·c and
    // prob·p; W(μ) and P(μ) are prefix sums up to the last ratio ≥ μ.
    ratios_desc: Vec<f64>,
    win_prefix: Vec<f64>,
    pay_prefix: Vec<f64>,
}

impl MarketDistribution {
    pub fn new(atoms: Vec<MarketAtom>) -> Result<Self, MarketError> {
        if atoms.is_empty() {
            return Err(MarketError::Empty);
        }
        for (index, a) in atoms.iter().enumerate() {
            let bad = |what: &str| MarketError::BadAtom {
                index,
                what: what.to_string(),
            };
            if !(0.0..=1.0).contains(&a.p) {
                return Err(bad("price outside [0, 1]"));
            }
            if !(0.0..=1.0).contains(&a.c) {
                return Err(bad("conversion rate outside [0, 1]"));
            }
            if !(a.prob > 0.0 && a.prob <= 1.0) {
                return Err(bad("probability outside (0, 1]"));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MarketError::BadMass(total));
        }
        Ok(Self::from_merged(merge(atoms.iter().map(|a| ((a.p, a.c), a.prob)))))
    }

    /// Builds from already validated, merged atoms.
    fn from_merged(atoms: Vec<MarketAtom>) -> Self {
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for a in &atoms {
            acc += a.prob;
            cumulative.push(acc);
        }
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&i, &j| {
            atoms[j]
                .ratio()
                .partial_cmp(&atoms[i].ratio())
                .expect("ratios are not NaN")
        });
        let mut ratios_desc = Vec::with_capacity(atoms.len());
        let mut win_prefix = Vec::with_capacity(atoms.len() + 1);
        let mut pay_prefix = Vec::with_capacity(atoms.len() + 1);
        let (mut w, mut p) = (0.0, 0.0);
        win_prefix.push(0.0);
        pay_prefix.push(0.0);
        for &i in &order {
            let a = atoms[i];
            ratios_desc.push(a.ratio());
            w += a.prob * a.c;
            p += a.prob * a.p;
            win_prefix.push(w);
            pay_prefix.push(p);
        }
        Self {
            atoms,
            cumulative,
            ratios_desc,
            win_prefix,
            pay_prefix,
        }
    }

    /// Empirical market from `(p, c)` pairs with occurrence counts; `n` is the
    /// total count. Exact duplicates merge.
    pub(crate) fn from_counts(counts: impl IntoIterator<Item = ((f64, f64), usize)>, n: usize) -> Self {
        let inv = 1.0 / n as f64;
        Self::from_merged(merge(
            counts.into_iter().map(|(pc, cnt)| (pc, cnt as f64 * inv)),
        ))
    }

    pub fn atoms(&self) -> &[MarketAtom] {
        &self.atoms
    }

    /// `(W(μ), P(μ))`: probability of a win with conversion and expected
    /// payment under multiplier `μ`.
    pub fn win_pay(&self, a: Multiplier) -> (f64, f64) {
        let count = match a {
            Multiplier::Skip => 0,
            Multiplier::Finite(0.0) => self.ratios_desc.len(),
            Multiplier::Finite(mu) => self.ratios_desc.partition_point(|&r| r >= mu),
        };
        (self.win_prefix[count], self.pay_prefix[count])
    }

    /// Candidate multipliers `{c/p : p > 0, c > 0} ∪ {0, ∞}`, ascending.
    ///
    /// When free converting atoms (`p = 0 < c`) coexist with priced ones,
    /// one more multiplier above every ratio is added: it wins exactly the
    /// free atoms, which no other candidate does without paying.
    pub fn candidate_multipliers(&self) -> Vec<Multiplier> {
        let mut mus: Vec<f64> = self
            .atoms
            .iter()
            .filter(|a| a.p > 0.0 && a.c > 0.0)
            .map(|a| a.c / a.p)
            .collect();
        let free = self.atoms.iter().any(|a| a.p == 0.0 && a.c > 0.0);
        if free && self.atoms.iter().any(|a| a.p > 0.0) {
            let top = mus.iter().copied().fold(0.0f64, f64::max);
            mus.push(2.0 * top + 1.0);
        }
        mus.push(0.0);
        mus.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
        mus.dedup();
        let mut out: Vec<Multiplier> = mus.into_iter().map(Multiplier::Finite).collect();
        out.push(Multiplier::Skip);
        out
    }

    /// `c̄ = E[c] = W(0)`.
    /// Clamped to 1, which summation can overshoot by an ulp.
    pub fn mean_conversion(&self) -> f64 {
        self.win_prefix[self.win_prefix.len() - 1].min(1.0)
    }

    pub fn mean_price(&self) -> f64 {
        self.pay_prefix[self.pay_prefix.len() - 1]
    }

    /// Draws `(p, c)` with one uniform: the first atom whose cumulative
    /// probability exceeds `u`, atoms in ascending `(p, c)` order.
    pub fn sample(&self, rng: &mut SimRng) -> (f64, f64) {
        let u = rng.uniform();
        let idx = self
            .cumulative
            .partition_point(|&cum| cum <= u)
            .min(self.atoms.len() - 1);
        let a = self.atoms[idx];
        (a.p, a.c)
    }
}

fn merge(items: impl Iterator<Item = ((f64, f64), f64)>) -> Vec<MarketAtom> {
    let mut map: BTreeMap<(u64, u64), (f64, f64, f64)> = BTreeMap::new();
    for ((p, c), prob) in items {
        // Non-negative floats order like their bit patterns; -0.0 folds into 0.0.
        let (p, c) = (p + 0.0, c + 0.0);
        map.entry((p.to_bits(), c.to_bits()))
            .and_modify(|e| e.2 += prob)
            .or_insert((p, c, prob));
    }
    map.into_values()
        .map(|(p, c, prob)| MarketAtom { p, c, prob })
        .collect()
}

/// Midpoint grid `p = (2i − 1)/(2K)`, `c = 1`, each with probability `1/K`.
pub fn discretize_uniform(k: usize) -> Result<MarketDistribution, MarketError> {
    if k == 0 {
        return Err(MarketError::BadGrid);
    }
    let prob = 1.0 / k as f64;
    let atoms = (1..=k)
        .map(|i| MarketAtom::new((2 * i - 1) as f64 / (2 * k) as f64, 1.0, prob))
        .collect::<Vec<_>>();
    // 1/K summed K times can miss 1 by more than the tolerance for large K.
    Ok(MarketDistribution::from_merged(merge(
        atoms.into_iter().map(|a| ((a.p, a.c), a.prob)),
    )))
}

/// Config fragment `{"type": "atoms", "atoms": [[p, c, prob], ...]}` or
/// `{"type": "uniform_grid", "K": k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarketSpec {
    Atoms { atoms: Vec<[f64; 3]> },
    UniformGrid {
        #[serde(rename = "K")]
        k: usize,
    },
}

impl MarketSpec {
    pub fn build(&self) -> Result<MarketDistribution, MarketError> {
        match self {
            MarketSpec::Atoms { atoms } => MarketDistribution::new(
                atoms
                    .iter()
                    .map(|&[p, c, prob]| MarketAtom::new(p, c, prob))
                    .collect(),
            ),
            MarketSpec::UniformGrid { k } => discretize_uniform(*k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mk(atoms: &[(f64, f64, f64)]) -> MarketDistribution {
        MarketDistribution::new(atoms.iter().map(|&(p, c, q)| MarketAtom::new(p, c, q)).collect())
            .unwrap()
    }

    #[test]
    fn win_pay_examples() {
        let m = mk(&[(0.5, 1.0, 0.5), (0.25, 1.0, 0.5)]);
        let (w, p) = m.win_pay(Multiplier::Finite(2.0));
        assert_eq!(w, 1.0);
        assert!((p - 0.375).abs() < 1e-15);
        assert_eq!(m.win_pay(Multiplier::Skip), (0.0, 0.0));

        let g = discretize_uniform(4).unwrap();
        let (w, p) = g.win_pay(Multiplier::Finite(2.0));
        assert!((w - 0.5).abs() < 1e-15);
        assert!((p - 0.125).abs() < 1e-15);
    }

    #[test]
    fn bid_one_wins_everything() {
        let m = mk(&[(0.5, 0.2, 0.5), (0.9, 0.8, 0.5)]);
        let (w, p) = m.win_pay(Multiplier::BID_ONE);
        assert!((w - m.mean_conversion()).abs() < 1e-15);
        assert!((p - 0.7).abs() < 1e-15);
    }

    #[test]
    fn candidate_examples() {
        let m = mk(&[(0.5, 1.0, 0.5), (0.25, 1.0, 0.5)]);
        assert_eq!(
            m.candidate_multipliers(),
            vec![
                Multiplier::Finite(0.0),
                Multiplier::Finite(2.0),
                Multiplier::Finite(4.0),
                Multiplier::Skip
            ]
        );
        let m = mk(&[(0.0, 1.0, 1.0)]);
        assert_eq!(m.candidate_multipliers(), vec![Multiplier::Finite(0.0), Multiplier::Skip]);
        let m = mk(&[(0.0, 0.5, 0.5), (0.5, 1.0, 0.5)]);
        let cands = m.candidate_multipliers();
        assert_eq!(
            cands,
            vec![
                Multiplier::Finite(0.0),
                Multiplier::Finite(2.0),
                Multiplier::Finite(5.0),
                Multiplier::Skip
            ]
        );
        assert_eq!(m.win_pay(cands[2]), (0.25, 0.0));
        let m = mk(&[(0.5, 1.0, 0.5), (0.25, 0.5, 0.5)]);
        assert_eq!(
            m.candidate_multipliers(),
            vec![Multiplier::Finite(0.0), Multiplier::Finite(2.0), Multiplier::Skip]
        );
    }

    #[test]
    fn mean_conversion_examples() {
        assert_eq!(mk(&[(0.3, 1.0, 1.0)]).mean_conversion(), 1.0);
        assert!((mk(&[(0.5, 0.2, 0.5), (0.5, 0.8, 0.5)]).mean_conversion() - 0.5).abs() < 1e-15);
        assert_eq!(mk(&[(0.5, 0.0, 1.0)]).mean_conversion(), 0.0);
    }

    #[test]
    fn bid_for_examples() {
        assert_eq!(bid_for(Multiplier::Finite(2.0), 1.0), Some(0.5));
        assert_eq!(bid_for(Multiplier::Finite(0.5), 1.0), Some(1.0));
        assert_eq!(bid_for(Multiplier::Skip, 0.7), None);
        assert_eq!(bid_for(Multiplier::BID_ONE, 0.0), Some(1.0));
    }

    #[test]
    fn skip_differs_from_zero_bid_on_free_atoms() {
        let m = mk(&[(0.0, 1.0, 1.0)]);
        // A large multiplier bids ~0 yet still wins the free atom.
        assert_eq!(m.win_pay(Multiplier::Finite(1e9)), (1.0, 0.0));
        assert_eq!(m.win_pay(Multiplier::Skip), (0.0, 0.0));
    }

    #[test]
    fn discretize_examples() {
        let g = discretize_uniform(1).unwrap();
        assert_eq!(g.atoms(), &[MarketAtom::new(0.5, 1.0, 1.0)]);
        let g = discretize_uniform(2).unwrap();
        assert_eq!(
            g.atoms(),
            &[MarketAtom::new(0.25, 1.0, 0.5), MarketAtom::new(0.75, 1.0, 0.5)]
        );
        assert!((g.mean_price() - 0.5).abs() < 1e-15);
        assert!((discretize_uniform(4).unwrap().mean_price() - 0.5).abs() < 1e-15);
        assert!(discretize_uniform(0).is_err());
    }

    #[test]
    fn validation_errors() {
        assert_eq!(MarketDistribution::new(vec![]).unwrap_err(), MarketError::Empty);
        assert!(matches!(
            MarketDistribution::new(vec![MarketAtom::new(1.5, 1.0, 1.0)]),
            Err(MarketError::BadAtom { index: 0, .. })
        ));
        assert!(matches!(
            MarketDistribution::new(vec![MarketAtom::new(0.5, 1.0, 0.7)]),
            Err(MarketError::BadMass(_))
        ));
    }

    #[test]
    fn duplicates_merge() {
        let m = mk(&[(0.5, 1.0, 0.25), (0.2, 0.3, 0.5), (0.5, 1.0, 0.25)]);
        assert_eq!(m.atoms().len(), 2);
        assert_eq!(m.atoms()[1], MarketAtom::new(0.5, 1.0, 0.5));
    }

    #[test]
    fn sampling_examples() {
        let single = mk(&[(0.3, 0.7, 1.0)]);
        let mut rng = SimRng::new(9);
        for _ in 0..100 {
            assert_eq!(single.sample(&mut rng), (0.3, 0.7));
        }

        let two = mk(&[(0.2, 1.0, 0.5), (0.6, 1.0, 0.5)]);
        let mut rng = SimRng::new(1);
        let n = 100_000;
        let low = (0..n).filter(|_| two.sample(&mut rng).0 == 0.2).count();
        assert!((low as f64 / n as f64 - 0.5).abs() < 0.01);

        let mut a = SimRng::new(5);
        let mut b = SimRng::new(5);
        for _ in 0..1000 {
            assert_eq!(two.sample(&mut a), two.sample(&mut b));
        }
    }

    #[test]
    fn spec_round_trip() {
        let spec: MarketSpec = serde_json::from_str(r#"{"type":"uniform_grid","K":4}"#).unwrap();
        assert_eq!(spec.build().unwrap().atoms().len(), 4);
        let spec: MarketSpec =
            serde_json::from_str(r#"{"type":"atoms","atoms":[[0.5,1,0.5],[0.25,1,0.5]]}"#).unwrap();
        assert_eq!(spec.build().unwrap().candidate_multipliers().len(), 4);
    }

    fn arb_atoms() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((0usize..5, 0usize..5, 1u32..10), 1..8).prop_map(|raw| {
            let total: u32 = raw.iter().map(|r| r.2).sum();
            raw.into_iter()
                .map(|(p, c, w)| (p as f64 / 4.0, c as f64 / 4.0, w as f64 / total as f64))
                .collect()
        })
    }

    fn direct_win_pay(atoms: &[(f64, f64, f64)], a: Multiplier) -> (f64, f64) {
        atoms
            .iter()
            .filter(|&&(p, c, _)| a.wins(p, c))
            .fold((0.0, 0.0), |(w, pay), &(p, c, q)| (w + q * c, pay + q * p))
    }

    proptest! {
        #[test]
        fn curves_monotone_bounded_and_merge_invariant(atoms in arb_atoms()) {
            let total: f64 = atoms.iter().map(|a| a.2).sum();
            prop_assume!((total - 1.0).abs() <= 1e-12);
            let m = mk(&atoms);
            let cands = m.candidate_multipliers();
            let mut probes = cands.clone();
            for w in cands.windows(2) {
                if let (Multiplier::Finite(a), Multiplier::Finite(b)) = (w[0], w[1]) {
                    probes.push(Multiplier::Finite(0.5 * (a + b)));
                }
            }
            probes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut prev = (f64::INFINITY, f64::INFINITY);
            for &mu in &probes {
                let (w, p) = m.win_pay(mu);
                prop_assert!(w <= prev.0 + 1e-15 && p <= prev.1 + 1e-15);
                prop_assert!(w <= m.mean_conversion() + 1e-15);
                prop_assert!(p <= m.mean_price() + 1e-15);
                prev = (w, p);
            }
            for &mu in &cands {
                let (w, p) = m.win_pay(mu);
                let (dw, dp) = direct_win_pay(&atoms, mu);
                prop_assert!((w - dw).abs() <= 1e-12 && (p - dp).abs() <= 1e-12);
            }
            // Between consecutive candidates the curves are flat.
            for w in cands.windows(2) {
                if let (Multiplier::Finite(a), Multiplier::Finite(b)) = (w[0], w[1]) {
                    let left = m.win_pay(Multiplier::Finite(a + (b - a) * 0.25));
                    let right = m.win_pay(Multiplier::Finite(a + (b - a) * 0.75));
                    prop_assert_eq!(left, right);
                }
            }
        }
    }
}
