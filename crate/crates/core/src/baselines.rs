//! State-independent policies, fixed-interval bidding, and closed-form
//! analytics for geometric spacing: capped geometric reward means, the
//! reverse-Jensen comparison, the polylogarithm `Li_{−1/2}`, and the
//! warm-up competitive ratio of fixed bidding on uniform prices.

use thiserror::Error;

use crate::bench::{self, BenchError};
use crate::fkors::{draw_action, Arena, RunRecord};
use crate::market::{MarketDistribution, Multiplier};
use crate::reward::{RewardError, RewardFn};
use crate::rng::SimRng;

/// Default reward cap `m` for evaluating static policies.
pub const DEFAULT_STATIC_M: usize = 30;
/// Slack allowed on a static policy's expected payment.
pub const PAY_TOL: f64 = 1e-9;
/// Accuracy of the polylogarithm inside [`warmup_ratio`].
pub const WARMUP_POLYLOG_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("win probability {0} outside (0, 1]")]
    BadWinProbability(f64),
    #[error("invalid static mixture: {0}")]
    BadMixture(String),
    #[error("invalid distribution of Y: {0}")]
    BadDistribution(String),
    #[error("argument {name} = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("fixed-interval period must be at least 1")]
    BadPeriod,
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Per-round bid distribution that ignores the state.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticPolicy {
    /// At most two actions with positive weights summing to 1.
    pub mixture: Vec<(Multiplier, f64)>,
    /// Per-round probability of a win with conversion.
    pub w: f64,
    /// Expected per-round payment.
    pub pay: f64,
}

impl StaticPolicy {
    pub fn new(mixture: Vec<(Multiplier, f64)>, market: &MarketDistribution) -> Result<Self, BaselineError> {
        if mixture.is_empty() || mixture.len() > 2 {
            return Err(BaselineError::BadMixture(format!(
                "{} components, expected 1 or 2",
                mixture.len()
            )));
        }
        if mixture.iter().any(|&(_, wt)| !(0.0..=1.0).contains(&wt)) {
            return Err(BaselineError::BadMixture("weights must lie in [0, 1]".into()));
        }
        let total: f64 = mixture.iter().map(|x| x.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(BaselineError::BadMixture(format!("weights sum to {total}")));
        }
        let (w, pay) = mixture.iter().fold((0.0, 0.0), |(w, p), &(a, wt)| {
            let (wa, pa) = market.win_pay(a);
            (w + wt * wa, p + wt * pa)
        });
        Ok(Self { mixture, w, pay })
    }

    /// A single action played every round.
    pub fn pure(a: Multiplier, market: &MarketDistribution) -> Self {
        Self::new(vec![(a, 1.0)], market).expect("a single unit-weight action is valid")
    }
}

/// Time-average reward of winning with probability `w` and paying `pay`
/// every round, with reward capped at `m`.
fn static_value(w: f64, pay: f64, r: &RewardFn, m: usize) -> Result<f64, BaselineError> {
    Ok(bench::cycle_stats_from(&vec![w; m], &vec![pay; m], r)?.r)
}

/// Best budget-feasible static policy and its time-average reward under
/// reward capped at `m`. Candidates are the market's pure multipliers with
/// `P(μ) ≤ ρ` and, for each adjacent pair straddling the budget, the
/// mixture that spends exactly `ρ`. Ties keep the earliest candidate.
pub fn optimal_static(
    market: &MarketDistribution,
    r: &RewardFn,
    m: usize,
    rho: f64,
) -> Result<(StaticPolicy, f64), BaselineError> {
    if m == 0 {
        return Err(BenchError::BadStateCount.into());
    }
    let candidates = market.candidate_multipliers();
    let stats: Vec<(f64, f64)> = candidates.iter().map(|&a| market.win_pay(a)).collect();
    let mut best: Option<(StaticPolicy, f64)> = None;
    let mut consider = |policy: StaticPolicy| -> Result<(), BaselineError> {
        let value = static_value(policy.w, policy.pay, r, m)?;
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((policy, value));
        }
        Ok(())
    };
    for (i, &a) in candidates.iter().enumerate() {
        let (w, pay) = stats[i];
        if pay <= rho + PAY_TOL {
            consider(StaticPolicy {
                mixture: vec![(a, 1.0)],
                w,
                pay,
            })?;
        }
    }
    // Candidates ascend in μ, so payments descend along the list.
    for i in 0..candidates.len().saturating_sub(1) {
        let (w_lo, p_lo) = stats[i];
        let (w_hi, p_hi) = stats[i + 1];
        if p_lo > rho && rho >= p_hi {
            let q = (rho - p_hi) / (p_lo - p_hi);
            consider(StaticPolicy {
                mixture: vec![(candidates[i], q), (candidates[i + 1], 1.0 - q)],
                w: q * w_lo + (1.0 - q) * w_hi,
                pay: q * p_lo + (1.0 - q) * p_hi,
            })?;
        }
    }
    Ok(best.expect("SKIP is always a feasible candidate"))
}

/// `E[r_m(X)]` for `X` geometric on `{1, 2, ...}` with success probability `w`:
/// `Σ_{ℓ=1}^{m} (r(ℓ) − r(ℓ−1))·(1−w)^{ℓ−1}`.
pub fn geometric_reward_mean(r: &RewardFn, m: usize, w: f64) -> Result<f64, BaselineError> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(BaselineError::BadWinProbability(w));
    }
    let rv = r.prefix(m)?;
    let mut survive = 1.0;
    let mut total = 0.0;
    for ell in 1..=m {
        total += (rv[ell] - rv[ell - 1]) * survive;
        survive *= 1.0 - w;
    }
    Ok(total)
}

/// Both sides of the reverse-Jensen comparison for a geometric `X` with
/// the same mean as `Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseJensen {
    /// `E[r_m(X)]`
    pub lhs: f64,
    /// `(1 − 1/e)·E[r_m(Y)]`
    pub rhs: f64,
    /// `lhs ≥ rhs − 1e−12`
    pub ok: bool,
}

/// Compares `E[r_m(X)]` with `(1 − 1/e)·E[r_m(Y)]`, where `Y` is given as
/// `(value, probability)` pairs on the positive integers and `X` is
/// geometric with mean `E[Y]`.
pub fn reverse_jensen_check(
    r: &RewardFn,
    m: usize,
    y: &[(usize, f64)],
) -> Result<ReverseJensen, BaselineError> {
    if y.is_empty() {
        return Err(BaselineError::BadDistribution("empty support".into()));
    }
    if y.iter().any(|&(v, _)| v == 0) {
        return Err(BaselineError::BadDistribution("support must be positive".into()));
    }
    if y.iter().any(|&(_, p)| !(p >= 0.0 && p.is_finite())) {
        return Err(BaselineError::BadDistribution("negative or non-finite probability".into()));
    }
    let total: f64 = y.iter().map(|x| x.1).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(BaselineError::BadDistribution(format!("probabilities sum to {total}")));
    }
    let mean: f64 = y.iter().map(|&(v, p)| v as f64 * p).sum();
    let lhs = geometric_reward_mean(r, m, (1.0 / mean).min(1.0))?;
    let ey = y
        .iter()
        .map(|&(v, p)| Ok(p * r.eval_capped(v, m)?))
        .sum::<Result<f64, RewardError>>()?;
    let rhs = (1.0 - (-1.0f64).exp()) * ey;
    Ok(ReverseJensen {
        lhs,
        rhs,
        ok: lhs >= rhs - 1e-12,
    })
}

/// `Li_{−1/2}(x) = Σ_{n≥1} √n·xⁿ` by direct summation.
///
/// After term `n` the remainder is at most
/// `√n·xⁿ·x/(1−x)·(1 + 1/(2n(1−x)))`, using `√(n+j) ≤ √n·(1 + j/(2n))`;
/// summation stops once that bound falls below `tol`.
pub fn polylog_half_neg(x: f64, tol: f64) -> Result<f64, BaselineError> {
    if !(0.0..1.0).contains(&x) {
        return Err(BaselineError::OutOfRange {
            name: "x",
            value: x,
            range: "[0, 1)",
        });
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(BaselineError::OutOfRange {
            name: "tol",
            value: tol,
            range: "(0, ∞)",
        });
    }
    let mut sum = 0.0;
    let mut power = 1.0;
    let mut n = 0u64;
    loop {
        n += 1;
        power *= x;
        let term = (n as f64).sqrt() * power;
        sum += term;
        let nf = n as f64;
        let bound = term * x / (1.0 - x) * (1.0 + 1.0 / (2.0 * nf * (1.0 - x)));
        if bound < tol {
            return Ok(sum);
        }
    }
}

fn check_rho(rho: f64, upper: f64, range: &'static str) -> Result<(), BaselineError> {
    if rho > 0.0 && rho <= upper {
        Ok(())
    } else {
        Err(BaselineError::OutOfRange {
            name: "rho",
            value: rho,
            range,
        })
    }
}

/// Per-round utility of bidding `√(2ρ)` forever against uniform prices
/// with `r = √ℓ`: `2ρ/(1 − √(2ρ))·Li_{−1/2}(1 − √(2ρ))`.
pub fn warmup_fixed_bid_value(rho: f64) -> Result<f64, BaselineError> {
    check_rho(rho, 0.25, "(0, 1/4]")?;
    let b = (2.0 * rho).sqrt();
    Ok(2.0 * rho / (1.0 - b) * polylog_half_neg(1.0 - b, WARMUP_POLYLOG_TOL)?)
}

/// Ratio of [`warmup_fixed_bid_value`] to the perfectly spaced upper
/// bound `(2ρ)^{1/4}`.
pub fn warmup_ratio(rho: f64) -> Result<f64, BaselineError> {
    Ok(warmup_fixed_bid_value(rho)? / (2.0 * rho).powf(0.25))
}

/// Budget, horizon and seed of a simulated run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    pub rho: f64,
    pub t: usize,
    pub seed: u64,
}

/// Plays `policy` every round while the remaining budget is at least 1.
pub fn static_run(
    market: &MarketDistribution,
    r: &RewardFn,
    policy: &StaticPolicy,
    spec: SimSpec,
    rng: &mut SimRng,
) -> Result<RunRecord, BaselineError> {
    let record = RunRecord::new("static_opt", spec.seed, spec.t, spec.rho);
    let mut arena = Arena::new(market, r, rng, record);
    for _ in 0..spec.t {
        let can_bid = arena.remaining() >= 1.0;
        arena.play(
            0,
            0,
            |_, rng| can_bid.then(|| draw_action(&policy.mixture, rng)),
            Ok,
        )?;
    }
    Ok(arena.record)
}

fn periodic_run(
    name: &str,
    market: &MarketDistribution,
    r: &RewardFn,
    period: usize,
    spec: SimSpec,
    rng: &mut SimRng,
) -> Result<RunRecord, BaselineError> {
    if period == 0 {
        return Err(BaselineError::BadPeriod);
    }
    let record = RunRecord::new(name, spec.seed, spec.t, spec.rho);
    let mut arena = Arena::new(market, r, rng, record);
    for t in 1..=spec.t {
        let bid = (t - 1) % period == 0 && arena.remaining() >= 1.0;
        arena.play(0, 0, |_, _| bid.then_some(Multiplier::BID_ONE), Ok)?;
    }
    Ok(arena.record)
}

/// Bids 1 on rounds `t ≡ 1 (mod period)` while budget allows, skips otherwise.
pub fn fixed_interval_run(
    market: &MarketDistribution,
    r: &RewardFn,
    period: usize,
    spec: SimSpec,
    rng: &mut SimRng,
) -> Result<RunRecord, BaselineError> {
    periodic_run("fixed_interval", market, r, period, spec, rng)
}

/// Bids 1 every round while budget allows.
pub fn always_one_run(
    market: &MarketDistribution,
    r: &RewardFn,
    spec: SimSpec,
    rng: &mut SimRng,
) -> Result<RunRecord, BaselineError> {
    periodic_run("always_one", market, r, 1, spec, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{discretize_uniform, MarketAtom};
    use proptest::prelude::*;

    fn cap(c: usize) -> RewardFn {
        RewardFn::CapLinear { cap: c }
    }

    fn single(p: f64, c: f64) -> MarketDistribution {
        MarketDistribution::new(vec![MarketAtom::new(p, c, 1.0)]).unwrap()
    }

    #[test]
    fn optimal_static_single_atom() {
        let (policy, value) = optimal_static(&single(1.0, 1.0), &cap(2), 30, 0.5).unwrap();
        // w(2 − w) at w = 0.5.
        assert!((value - 0.75).abs() < 1e-12, "{value}");
        assert!((policy.w - 0.5).abs() < 1e-12);
        assert!(policy.pay <= 0.5 + PAY_TOL);
        let bench = bench::solve_benchmark(&single(1.0, 1.0), &cap(2), 30, 0.5, false).unwrap();
        assert!(value < bench.opt_value - 0.2);
    }

    #[test]
    fn optimal_static_always_bids_one_with_slack() {
        let (policy, value) = optimal_static(&single(0.3, 1.0), &cap(1), 30, 0.5).unwrap();
        assert!((value - 1.0).abs() < 1e-12);
        assert_eq!(policy.mixture, vec![(Multiplier::BID_ONE, 1.0)]);
    }

    #[test]
    fn optimal_static_uniform_grid_gap_instance() {
        let market = discretize_uniform(1000).unwrap();
        let rho = 3f64.sqrt() - 1.5;
        let (policy, value) = optimal_static(&market, &cap(2), 30, rho).unwrap();
        let s = (2.0 * rho).sqrt();
        assert!((value - (2.0 - s) * s).abs() < 0.01, "{value}");
        assert!(policy.pay <= rho + PAY_TOL);
        assert!(policy.mixture.len() <= 2);
    }

    #[test]
    fn skip_only_market_is_zero() {
        let (policy, value) = optimal_static(&single(1.0, 1.0), &RewardFn::Sqrt, 30, 0.0).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(policy.w, 0.0);
    }

    #[test]
    fn static_policy_validation() {
        let m = single(0.5, 1.0);
        assert!(StaticPolicy::new(vec![], &m).is_err());
        assert!(StaticPolicy::new(vec![(Multiplier::Skip, 0.5)], &m).is_err());
        let three = vec![(Multiplier::Skip, 0.2), (Multiplier::BID_ONE, 0.4), (Multiplier::Finite(2.0), 0.4)];
        assert!(StaticPolicy::new(three, &m).is_err());
        let p = StaticPolicy::new(vec![(Multiplier::Skip, 0.25), (Multiplier::BID_ONE, 0.75)], &m).unwrap();
        assert!((p.w - 0.75).abs() < 1e-15);
        assert!((p.pay - 0.375).abs() < 1e-15);
    }

    #[test]
    fn geometric_mean_examples() {
        assert!((geometric_reward_mean(&cap(2), 2, 0.5).unwrap() - 1.5).abs() < 1e-15);
        assert!((geometric_reward_mean(&RewardFn::Sqrt, 40, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(geometric_reward_mean(&RewardFn::Sqrt, 5, 0.0).is_err());
        assert!(geometric_reward_mean(&RewardFn::Sqrt, 5, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn geometric_mean_matches_closed_form(w in 0.001f64..=1.0, m in 1usize..200) {
            let got = geometric_reward_mean(&cap(m), m, w).unwrap();
            let want = (1.0 - (1.0 - w).powi(m as i32)) / w;
            prop_assert!((got - want).abs() < 1e-12 * want.max(1.0), "{} vs {}", got, want);
        }
    }

    fn arb_market() -> impl Strategy<Value = MarketDistribution> {
        prop::collection::vec((0.0f64..=1.0, 0.05f64..=1.0, 0.1f64..1.0), 1..6).prop_map(|raw| {
            let total: f64 = raw.iter().map(|x| x.2).sum();
            MarketDistribution::new(raw.into_iter().map(|(p, c, w)| MarketAtom::new(p, c, w / total)).collect())
                .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn static_is_sandwiched_by_benchmark(
            market in arb_market(),
            rho in 0.05f64..0.5,
            sqrt in any::<bool>(),
        ) {
            let r = if sqrt { RewardFn::Sqrt } else { cap(3) };
            let m = 30;
            let (policy, value) = optimal_static(&market, &r, m, rho).unwrap();
            prop_assert!(policy.pay <= rho + PAY_TOL);
            let opt = bench::solve_benchmark(&market, &r, m, rho, false).unwrap().opt_value;
            prop_assert!(value <= opt + 1e-9, "static {} above benchmark {}", value, opt);
            let floor = (1.0 - (-1.0f64).exp()) * opt - 2e-2;
            prop_assert!(value >= floor, "static {} below floor {}", value, floor);
        }
    }

    #[test]
    fn geometric_mean_matches_truncated_expectation() {
        // Direct Σ_x Pr{X = x}·r_m(x) with the tail beyond m lumped at r(m).
        let (r, m, w) = (RewardFn::Sqrt, 12, 0.3f64);
        let mut direct = 0.0;
        for x in 1..m {
            direct += w * (1.0 - w).powi(x as i32 - 1) * (x as f64).sqrt();
        }
        direct += (1.0 - w).powi(m as i32 - 1) * (m as f64).sqrt();
        let got = geometric_reward_mean(&r, m, w).unwrap();
        assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
    }

    #[test]
    fn reverse_jensen_examples() {
        for mu in [2usize, 3, 7, 20] {
            let rj = reverse_jensen_check(&cap(mu), mu, &[(mu, 1.0)]).unwrap();
            let p = 1.0 - 1.0 / mu as f64;
            let want = (1.0 - p.powi(mu as i32)) * mu as f64;
            assert!((rj.lhs - want).abs() < 1e-12);
            assert!((rj.rhs - (1.0 - (-1.0f64).exp()) * mu as f64).abs() < 1e-12);
            assert!(rj.lhs > rj.rhs && rj.ok);
        }
        let rj = reverse_jensen_check(&RewardFn::Sqrt, 10, &[(1, 1.0)]).unwrap();
        assert!((rj.lhs - 1.0).abs() < 1e-15);
        assert!((rj.lhs * (1.0 - (-1.0f64).exp()) - rj.rhs).abs() < 1e-15);
        assert!(rj.ok);
    }

    #[test]
    fn reverse_jensen_rejects_bad_distributions() {
        let r = RewardFn::Sqrt;
        assert!(reverse_jensen_check(&r, 5, &[]).is_err());
        assert!(reverse_jensen_check(&r, 5, &[(0, 1.0)]).is_err());
        assert!(reverse_jensen_check(&r, 5, &[(1, 0.5)]).is_err());
        assert!(reverse_jensen_check(&r, 5, &[(1, -0.5), (2, 1.5)]).is_err());
    }

    #[test]
    fn polylog_examples() {
        assert_eq!(polylog_half_neg(0.0, 1e-12).unwrap(), 0.0);
        // Brute-force oracle: enough terms that the remainder is below 1e−15.
        let oracle: f64 = (1..=200).map(|n| (n as f64).sqrt() * 0.5f64.powi(n)).sum();
        let got = polylog_half_neg(0.5, 1e-12).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        assert!((got - 1.3474).abs() < 5e-4);
        assert!(polylog_half_neg(0.6, 1e-12).unwrap() > got);
        assert!(polylog_half_neg(1.0, 1e-12).is_err());
        assert!(polylog_half_neg(-0.1, 1e-12).is_err());
        assert!(polylog_half_neg(0.5, 0.0).is_err());
    }

    #[test]
    fn polylog_near_one_meets_tolerance() {
        let x = 0.999;
        let tol = 1e-9;
        let got = polylog_half_neg(x, tol).unwrap();
        let oracle: f64 = (1..=100_000).map(|n| (n as f64).sqrt() * x.powi(n)).sum();
        assert!((got - oracle).abs() < tol, "{got} vs {oracle}");
    }

    #[test]
    fn warmup_ratio_examples() {
        assert!((warmup_ratio(1e-4).unwrap() - 0.8862).abs() < 0.005);
        assert!((warmup_ratio(0.25).unwrap() - 0.973).abs() < 0.005);
        let grid: Vec<f64> = (1..=50).map(|i| warmup_ratio(0.25 * i as f64 / 50.0).unwrap()).collect();
        assert!(grid.windows(2).all(|p| p[1] > p[0]));
        assert!(warmup_ratio(0.0).is_err());
        assert!(warmup_ratio(0.3).is_err());
    }

    fn spec(rho: f64, t: usize, seed: u64) -> SimSpec {
        SimSpec { rho, t, seed }
    }

    #[test]
    fn static_run_skip_policy_earns_nothing() {
        let market = discretize_uniform(10).unwrap();
        let policy = StaticPolicy::pure(Multiplier::Skip, &market);
        let rec = static_run(&market, &RewardFn::Sqrt, &policy, spec(0.2, 500, 1), &mut SimRng::new(1)).unwrap();
        assert_eq!(rec.totals.utility_true, 0.0);
        assert_eq!(rec.totals.spend, 0.0);
        assert_eq!(rec.rounds.len(), 500);
    }

    #[test]
    fn static_run_is_deterministic_and_within_budget() {
        let market = discretize_uniform(100).unwrap();
        let (policy, _) = optimal_static(&market, &RewardFn::Sqrt, 30, 0.15).unwrap();
        let run = |seed| static_run(&market, &RewardFn::Sqrt, &policy, spec(0.15, 3000, seed), &mut SimRng::new(seed)).unwrap();
        let a = run(9);
        assert_eq!(a, run(9));
        assert_ne!(a.totals, run(10).totals);
        assert!(a.totals.spend <= 0.15 * 3000.0);
        assert_eq!(a.totals.utility_true, a.totals.utility_accounted);
    }

    #[test]
    fn static_run_tracks_warmup_value() {
        let market = discretize_uniform(1000).unwrap();
        let rho = 0.1f64;
        let b = (2.0 * rho).sqrt();
        let policy = StaticPolicy::pure(Multiplier::Finite(1.0 / b), &market);
        let t = 200_000;
        let rec = static_run(&market, &RewardFn::Sqrt, &policy, spec(rho, t, 3), &mut SimRng::new(3)).unwrap();
        let want = warmup_fixed_bid_value(rho).unwrap();
        let got = rec.totals.utility_true / t as f64;
        assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");
    }

    #[test]
    fn fixed_interval_examples() {
        let free = single(0.0, 1.0);
        let rec = fixed_interval_run(&free, &RewardFn::Sqrt, 1, spec(0.5, 50, 0), &mut SimRng::new(0)).unwrap();
        assert_eq!(rec.totals.wins, 50);
        assert_eq!(rec.totals.utility_true, 50.0);

        let rec = fixed_interval_run(&free, &RewardFn::Sqrt, 100, spec(0.5, 50, 0), &mut SimRng::new(0)).unwrap();
        assert_eq!(rec.totals.wins, 1);

        assert_eq!(
            fixed_interval_run(&free, &RewardFn::Sqrt, 0, spec(0.5, 50, 0), &mut SimRng::new(0)),
            Err(BaselineError::BadPeriod)
        );
    }

    #[test]
    fn fixed_interval_uniform_win_count() {
        let market = discretize_uniform(100).unwrap();
        let rho = 0.125f64;
        let period = (1.0 / (2.0 * rho)).ceil() as usize;
        let t = 40_000;
        let rec = fixed_interval_run(&market, &RewardFn::Sqrt, period, spec(rho, t, 5), &mut SimRng::new(5)).unwrap();
        let want = 2.0 * rho * t as f64;
        assert!((rec.totals.wins as f64 / want - 1.0).abs() < 0.02, "{}", rec.totals.wins);
        assert!(rec.totals.spend <= rho * t as f64);
        assert!(rec.rounds.iter().filter(|e| e.bid.is_some()).all(|e| (e.t - 1) % period == 0));
    }

    #[test]
    fn always_one_spends_until_guard() {
        let market = single(0.5, 1.0);
        let rec = always_one_run(&market, &RewardFn::Sqrt, spec(0.1, 100, 2), &mut SimRng::new(2)).unwrap();
        // Bids continue while at least 1 remains of the budget of 10: 19 wins at 0.5.
        assert_eq!(rec.totals.wins, 19);
        assert_eq!(rec.algorithm, "always_one");
    }
}
