//! Follow the k-delayed Optimal Response Strategy.
//!
//! The first `k` rounds skip and only observe `(p, c)`. Every later epoch
//! re-solves the occupancy LP on the empirical market of all samples seen
//! so far (reward capped at `m`, state `m` forced to bid 1), restarts the
//! fake state `ℓ̃` at 1, and plays the resulting per-state mixture until a
//! conversion or until `k` rounds pass. A bid is placed only while the
//! remaining budget is at least 1, so the budget can never be overdrawn.
//!
//! Per-round random draws follow the order documented in [`crate::rng`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{self, BenchError, OccupancyModel, PolicyVec};
use crate::estimate::SampleCounts;
use crate::market::{bid_for, MarketDistribution, Multiplier};
use crate::reward::{RewardError, RewardFn};
use crate::rng::SimRng;
use crate::simplex::BasisVar;

/// Distinct-sample count above which epoch LPs use quantized samples.
pub const QUANTIZE_ABOVE: usize = 2000;
pub const DEFAULT_QUANTIZATION: u32 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FkorsError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("epoch LP failed: {0}")]
    Lp(#[from] BenchError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// How the mean conversion rate `c̄` used for parameter defaults is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbarMode {
    Known(f64),
    LowerBound(f64),
}

impl CbarMode {
    pub fn value(self) -> f64 {
        match self {
            CbarMode::Known(v) | CbarMode::LowerBound(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkorsConfig {
    pub rho: f64,
    pub t: usize,
    pub m: usize,
    pub k: usize,
    pub bid1_at_m: bool,
    pub cbar: CbarMode,
    /// Grid `1/Q` for epoch-LP samples once more than [`QUANTIZE_ABOVE`]
    /// distinct samples exist; 0 disables quantization.
    pub quantization: u32,
    pub seed: u64,
    /// Reference per-round optimum for the `ε_R` diagnostic, if known.
    pub opt_ref: Option<f64>,
}

impl FkorsConfig {
    /// Configuration with `m` and `k` from [`default_params`], `m` capped at `T`.
    pub fn with_defaults(rho: f64, t: usize, cbar: CbarMode, seed: u64) -> Result<Self, FkorsError> {
        let (m, k) = default_params(t, rho, cbar.value())?;
        Ok(Self {
            rho,
            t,
            m: m.min(t),
            k,
            bid1_at_m: true,
            cbar,
            quantization: DEFAULT_QUANTIZATION,
            seed,
            opt_ref: None,
        })
    }

    pub fn validate(&self) -> Result<(), FkorsError> {
        let bad = |s: String| Err(FkorsError::BadParameter(s));
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho = {} outside (0, 1]", self.rho));
        }
        if self.t < 1 {
            return bad("T must be at least 1".into());
        }
        if self.m < 1 || self.m > self.t {
            return bad(format!("m = {} outside [1, T = {}]", self.m, self.t));
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        let cbar = self.cbar.value();
        if !(cbar > 0.0 && cbar <= 1.0) {
            return bad(format!("c̄ = {cbar} outside (0, 1]"));
        }
        Ok(())
    }
}

/// `m = ⌈(2/(c̄ρ))·ln T⌉`, `k = ⌈m + (1/c̄)·ln T⌉`.
pub fn default_params(t: usize, rho: f64, cbar: f64) -> Result<(usize, usize), FkorsError> {
    if t < 2 {
        return Err(FkorsError::BadParameter(format!("T = {t} must be at least 2")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(FkorsError::BadParameter(format!("rho = {rho} outside (0, 1]")));
    }
    if !(cbar > 0.0 && cbar <= 1.0) {
        return Err(FkorsError::BadParameter(format!("c̄ = {cbar} outside (0, 1]")));
    }
    let ln_t = (t as f64).ln();
    let m = ((2.0 / (cbar * rho)) * ln_t).ceil().max(1.0);
    let k = (m + ln_t / cbar).ceil();
    Ok((m as usize, k as usize))
}

/// One simulated round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundEntry {
    pub t: usize,
    pub epoch: usize,
    /// Fake state `ℓ̃`; 0 during the warm-up, which has none.
    pub state_fake: usize,
    /// Rounds since the last conversion, uncapped.
    pub state_true: usize,
    pub conv_rate: f64,
    /// `None` is SKIP.
    pub bid: Option<f64>,
    pub price: f64,
    pub win: bool,
    pub conversion: bool,
    pub payment: f64,
    pub reward_accounted: f64,
    pub reward_true: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub index: usize,
    /// Rounds completed before the epoch started.
    pub start: usize,
    pub length: usize,
    pub converted: bool,
}

/// Quality of an epoch's policy measured on the true market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochDiagnostic {
    pub epoch: usize,
    pub r: f64,
    pub c: f64,
    /// `max(0, OPT_ref − R)` when a reference optimum was supplied.
    pub eps_r: Option<f64>,
    /// `max(0, C − ρ)`.
    pub eps_c: f64,
    pub lp_pivots: usize,
    pub lp_warm: bool,
    /// The epoch LP was infeasible and the epoch skipped every round.
    pub lp_fallback: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Totals {
    pub utility_true: f64,
    pub utility_accounted: f64,
    pub spend: f64,
    pub wins: usize,
    pub conversions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: String,
    pub seed: u64,
    pub t: usize,
    pub rho: f64,
    /// `(m, k)` for FKORS runs.
    pub params: Option<(usize, usize)>,
    pub rounds: Vec<RoundEntry>,
    pub epochs: Vec<EpochRecord>,
    pub diagnostics: Vec<EpochDiagnostic>,
    pub totals: Totals,
}

impl RunRecord {
    pub fn new(algorithm: &str, seed: u64, t: usize, rho: f64) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            seed,
            t,
            rho,
            params: None,
            rounds: Vec::with_capacity(t),
            epochs: Vec::new(),
            diagnostics: Vec::new(),
            totals: Totals::default(),
        }
    }

    /// Among completed post-warm-up epochs (the horizon did not cut them
    /// short), the fraction that ran `k` rounds without a conversion.
    pub fn unconverted_epoch_fraction(&self) -> f64 {
        let Some((_, k)) = self.params else {
            return 0.0;
        };
        let complete: Vec<&EpochRecord> = self
            .epochs
            .iter()
            .filter(|e| e.index > 0 && (e.converted || e.length == k))
            .collect();
        if complete.is_empty() {
            return 0.0;
        }
        complete.iter().filter(|e| !e.converted).count() as f64 / complete.len() as f64
    }
}

/// `T·opt_per_round − true utility`.
pub fn regret(record: &RunRecord, opt_per_round: f64) -> f64 {
    record.t as f64 * opt_per_round - record.totals.utility_true
}

/// Draws an action from a mixture with one uniform: the first component
/// whose cumulative weight exceeds it.
pub(crate) fn draw_action(mixture: &[(Multiplier, f64)], rng: &mut SimRng) -> Multiplier {
    let u = rng.uniform();
    let mut acc = 0.0;
    for &(a, w) in mixture {
        acc += w;
        if u < acc {
            return a;
        }
    }
    mixture.last().map_or(Multiplier::Skip, |x| x.0)
}

/// Shared per-round mechanics: budget, conversion coin, counters, trace.
pub(crate) struct Arena<'a> {
    pub market: &'a MarketDistribution,
    pub reward: &'a RewardFn,
    pub rng: &'a mut SimRng,
    pub record: RunRecord,
    pub budget: f64,
    pub state_true: usize,
}

pub(crate) struct Played {
    pub conversion: bool,
    pub price: f64,
    pub conv_rate: f64,
}

impl<'a> Arena<'a> {
    pub fn new(
        market: &'a MarketDistribution,
        reward: &'a RewardFn,
        rng: &'a mut SimRng,
        record: RunRecord,
    ) -> Self {
        let budget = record.rho * record.t as f64;
        Self {
            market,
            reward,
            rng,
            record,
            budget,
            state_true: 1,
        }
    }

    pub fn remaining(&self) -> f64 {
        self.budget - self.record.totals.spend
    }

    /// Plays one round. `choose` sees the conversion rate and returns the
    /// action, or `None` to skip without consulting any policy; it runs only
    /// after the atom draw. `accounted` maps a conversion to its accounted
    /// reward given the true reward.
    pub fn play(
        &mut self,
        epoch: usize,
        state_fake: usize,
        choose: impl FnOnce(f64, &mut SimRng) -> Option<Multiplier>,
        accounted: impl FnOnce(f64) -> Result<f64, RewardError>,
    ) -> Result<Played, RewardError> {
        let t = self.record.rounds.len() + 1;
        let (p, c) = self.market.sample(self.rng);
        let action = choose(c, self.rng);
        let bid = action.and_then(|a| bid_for(a, c));
        let win = action.is_some_and(|a| a.wins(p, c));
        let mut conversion = false;
        let mut payment = 0.0;
        let mut reward_true = 0.0;
        let mut reward_accounted = 0.0;
        if win {
            payment = p;
            assert!(
                self.remaining() >= p,
                "budget guard violated: remaining {} < price {p}",
                self.remaining()
            );
            self.record.totals.spend += p;
            self.record.totals.wins += 1;
            conversion = self.rng.uniform() < c;
        }
        let state_true = self.state_true;
        if conversion {
            reward_true = self.reward.eval(state_true)?;
            reward_accounted = accounted(reward_true)?;
            self.record.totals.conversions += 1;
            self.record.totals.utility_true += reward_true;
            self.record.totals.utility_accounted += reward_accounted;
            self.state_true = 1;
        } else {
            self.state_true += 1;
        }
        self.record.rounds.push(RoundEntry {
            t,
            epoch,
            state_fake,
            state_true,
            conv_rate: c,
            bid,
            price: p,
            win,
            conversion,
            payment,
            reward_accounted,
            reward_true,
        });
        Ok(Played {
            conversion,
            price: p,
            conv_rate: c,
        })
    }
}

/// Runs Algorithm FKORS against `market` (the true distribution).
pub fn run_fkors(
    market: &MarketDistribution,
    r: &RewardFn,
    cfg: &FkorsConfig,
    rng: &mut SimRng,
) -> Result<RunRecord, FkorsError> {
    cfg.validate()?;
    let mut record = RunRecord::new("fkors", cfg.seed, cfg.t, cfg.rho);
    record.params = Some((cfg.m, cfg.k));
    let mut arena = Arena::new(market, r, rng, record);
    let mut counts = SampleCounts::new();

    // Warm-up: observe only.
    let warmup = cfg.k.min(cfg.t);
    for _ in 0..warmup {
        let played = arena.play(0, 0, |_, _| None, |_| Ok(0.0))?;
        counts.add(played.price, played.conv_rate);
    }
    arena.record.epochs.push(EpochRecord {
        index: 0,
        start: 0,
        length: warmup,
        converted: false,
    });

    let mut previous: Option<(OccupancyModel, Vec<BasisVar>)> = None;
    let mut epoch = 0;
    while arena.record.rounds.len() < cfg.t {
        epoch += 1;
        let start = arena.record.rounds.len();
        let empirical = if cfg.quantization > 0 && counts.distinct() > QUANTIZE_ABOVE {
            counts.quantized_market(cfg.quantization)
        } else {
            counts.market()
        }
        .expect("warm-up collected samples");
        let model = OccupancyModel::from_market(&empirical, r, cfg.m, cfg.rho, cfg.bid1_at_m)?;
        let warm = previous
            .as_ref()
            .and_then(|(prev, basis)| model.translate_basis(prev, basis));
        let (policy, pivots, lp_warm, fallback) = match model.solve(warm.as_deref()) {
            Ok(res) => {
                let info = (res.pivots, res.warm_started);
                previous = Some((model, res.basis));
                (res.policy, info.0, info.1, false)
            }
            Err(BenchError::Infeasible) => {
                previous = None;
                (PolicyVec::uniform(vec![(Multiplier::Skip, 1.0)], cfg.m), 0, false, true)
            }
            Err(e) => return Err(e.into()),
        };

        let stats = bench::cycle_stats(&policy, market, r)?;
        arena.record.diagnostics.push(EpochDiagnostic {
            epoch,
            r: stats.r,
            c: stats.c,
            eps_r: cfg.opt_ref.map(|o| (o - stats.r).max(0.0)),
            eps_c: (stats.c - cfg.rho).max(0.0),
            lp_pivots: pivots,
            lp_warm,
            lp_fallback: fallback,
        });

        let mut fake = 1;
        let mut converted = false;
        let mut length = 0;
        while length < cfg.k && arena.record.rounds.len() < cfg.t {
            length += 1;
            let can_bid = arena.remaining() >= 1.0;
            let mixture = policy.mixture(fake);
            let played = arena.play(
                epoch,
                fake,
                |_, rng| can_bid.then(|| draw_action(mixture, rng)),
                |_| r.eval_capped(fake, cfg.m),
            )?;
            counts.add(played.price, played.conv_rate);
            if played.conversion {
                converted = true;
                break;
            }
            fake = (fake + 1).min(cfg.m);
        }
        arena.record.epochs.push(EpochRecord {
            index: epoch,
            start,
            length,
            converted,
        });
    }
    Ok(arena.record)
}
