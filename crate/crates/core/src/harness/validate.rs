//! Property suite behind the `validate` command. Each check draws its own
//! random instances from a fixed seed and reports pass/fail with a detail
//! line; `quick` uses small instance counts, `full` the complete ones.

use std::fmt;
use std::time::Instant;

use crate::baselines::{self, reverse_jensen_check};
use crate::bench::{self, check_monotone, check_win_floor, DP_HORIZON_CAP};
use crate::estimate::{empirical_market, sup_error, SampleSet};
use crate::market::{MarketAtom, MarketDistribution};
use crate::reward::{perturb_strictly_concave, validate_reward, RewardFn, RewardReport};
use crate::rng::SimRng;
use crate::simplex::{solve_lp, LinearProgram, LpStatus};

/// Seed of every validation instance stream.
pub const VALIDATE_SEED: u64 = 0x5EED_CAFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Level {
    Quick,
    Full,
}

impl Level {
    fn pick(self, quick: usize, full: usize) -> usize {
        match self {
            Level::Quick => quick,
            Level::Full => full,
        }
    }
}

/// One row of the validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// All rows of a validation run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        writeln!(f, "{:<width$}  {:<6}  {:>8}  detail", "check", "result", "seconds")?;
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{:<width$}  {:<6}  {:>8.2}  {}", c.name, verdict, c.seconds, c.detail)?;
        }
        Ok(())
    }
}

/// Random draws for instance generation.
struct Gen(SimRng);

impl Gen {
    fn new(stream: u64) -> Self {
        Gen(SimRng::for_replication(VALIDATE_SEED, stream))
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.uniform()
    }

    /// Integer in `lo..=hi`.
    fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    fn market(&mut self, max_atoms: usize, c_lo: f64) -> MarketDistribution {
        let n = self.int(1, max_atoms);
        let raw: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| (self.uniform(0.0, 1.0), self.uniform(c_lo, 1.0), self.uniform(0.1, 1.0)))
            .collect();
        let total: f64 = raw.iter().map(|x| x.2).sum();
        MarketDistribution::new(raw.into_iter().map(|(p, c, w)| MarketAtom::new(p, c, w / total)).collect())
            .expect("generated atoms are valid")
    }

    fn base_reward(&mut self) -> RewardFn {
        match self.int(0, 2) {
            0 => RewardFn::Sqrt,
            1 => RewardFn::Power {
                alpha: self.uniform(0.2, 1.0),
            },
            _ => RewardFn::CapLinear { cap: self.int(1, 8) },
        }
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Validates one reward up to `horizon` (tables: over their length).
pub fn check_reward(name: &'static str, r: &RewardFn, horizon: usize) -> CheckResult {
    let horizon = r.max_index().map_or(horizon, |h| h.max(2));
    timed(name, || match validate_reward(r, horizon) {
        RewardReport::Ok => (true, format!("ok up to ℓ = {horizon}")),
        RewardReport::Violation { ell, reason } => (false, format!("violation at ℓ = {ell}: {reason}")),
    })
}

fn builtin_rewards(level: Level) -> CheckResult {
    let horizon = level.pick(1000, 10_000);
    timed("reward_builtins", || {
        let kinds = [
            RewardFn::Sqrt,
            RewardFn::CapLinear { cap: 1 },
            RewardFn::CapLinear { cap: 2 },
            RewardFn::CapLinear { cap: 7 },
            RewardFn::Power { alpha: 0.3 },
            RewardFn::Power { alpha: 0.5 },
            RewardFn::Power { alpha: 1.0 },
        ];
        for r in &kinds {
            if let RewardReport::Violation { ell, reason } = validate_reward(r, horizon) {
                return (false, format!("{r:?} violates at ℓ = {ell}: {reason}"));
            }
        }
        (true, format!("{} kinds ok up to ℓ = {horizon}", kinds.len()))
    })
}

/// Best objective over all basic feasible points of
/// `max c·x, A_eq x = b_eq, A_le x ≤ b_le, x ≥ 0`; `None` if infeasible.
fn vertex_enumeration(c: &[f64], eq: &[(Vec<f64>, f64)], le: &[(Vec<f64>, f64)]) -> Option<f64> {
    let n = c.len();
    // Candidate active constraints: inequalities, then x_j = 0.
    let mut pool: Vec<(Vec<f64>, f64)> = le.to_vec();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        pool.push((e, 0.0));
    }
    let need = n - eq.len().min(n);
    let mut best: Option<f64> = None;
    let mut chosen = Vec::with_capacity(need);
    fn recurse(
        start: usize,
        need: usize,
        pool: &[(Vec<f64>, f64)],
        chosen: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if chosen.len() == need {
            visit(chosen);
            return;
        }
        for i in start..pool.len() {
            chosen.push(i);
            recurse(i + 1, need, pool, chosen, visit);
            chosen.pop();
        }
    }
    let mut visit = |idx: &[usize]| {
        let rows: Vec<(Vec<f64>, f64)> = eq.iter().cloned().chain(idx.iter().map(|&i| pool[i].clone())).collect();
        if let Some(x) = solve_square(rows) {
            let feasible = x.iter().all(|&v| v >= -1e-9)
                && eq.iter().all(|(a, b)| (dot(a, &x) - b).abs() <= 1e-9)
                && le.iter().all(|(a, b)| dot(a, &x) <= b + 1e-9);
            if feasible {
                let obj = dot(c, &x);
                if best.is_none_or(|b| obj > b) {
                    best = Some(obj);
                }
            }
        }
    };
    recurse(0, need, &pool, &mut chosen, &mut visit);
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves a square system by Gaussian elimination with partial pivoting.
fn solve_square(rows: Vec<(Vec<f64>, f64)>) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|(mut r, b)| {
            r.push(b);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        for i in 0..n {
            if i != col {
                let f = a[i][col] / a[col][col];
                for k in col..=n {
                    a[i][k] -= f * a[col][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

fn simplex_oracle(level: Level) -> CheckResult {
    let count = level.pick(100, 500);
    timed("simplex_oracle", || {
        let mut g = Gen::new(1);
        for case in 0..count {
            let n = g.int(1, 6);
            let c: Vec<f64> = (0..n).map(|_| g.uniform(-1.0, 2.0)).collect();
            let mut lp = LinearProgram::new(c.clone());
            let mut eq = Vec::new();
            let mut le = Vec::new();
            if g.uniform(0.0, 1.0) < 0.3 {
                let row: Vec<f64> = (0..n).map(|_| g.uniform(0.0, 1.0)).collect();
                let b = g.uniform(0.2, 2.0);
                eq.push((row, b));
            }
            for _ in 0..g.int(1, 4) {
                let row: Vec<f64> = (0..n).map(|_| g.uniform(-1.0, 1.0)).collect();
                le.push((row, g.uniform(-0.3, 2.0)));
            }
            for j in 0..n {
                let mut row = vec![0.0; n];
                row[j] = 1.0;
                le.push((row, g.uniform(0.5, 3.0)));
            }
            for (row, b) in &eq {
                lp.add_eq(row.clone(), *b).expect("finite row");
            }
            for (row, b) in &le {
                lp.add_le(row.clone(), *b).expect("finite row");
            }
            let want = vertex_enumeration(&c, &eq, &le);
            let got = match solve_lp(&lp, 1e-9) {
                Ok(s) => s,
                Err(e) => return (false, format!("case {case}: solver error {e}")),
            };
            match (want, got.status) {
                (None, LpStatus::Infeasible) => {}
                (Some(v), LpStatus::Optimal) if (v - got.objective).abs() <= 1e-7 * v.abs().max(1.0) => {}
                (w, s) => {
                    return (false, format!("case {case}: oracle {w:?}, solver {s:?} {}", got.objective))
                }
            }
            let again = solve_lp(&lp, 1e-9).expect("solved once already");
            if again.x != got.x || again.objective.to_bits() != got.objective.to_bits() {
                return (false, format!("case {case}: re-solve differs"));
            }
        }
        (true, format!("{count} LPs match vertex enumeration"))
    })
}

fn monotone_and_win_floor(level: Level) -> CheckResult {
    let count = level.pick(40, 200);
    timed("monotone_win_floor", || {
        let mut g = Gen::new(2);
        let m = 25;
        let mut binding = 0;
        for case in 0..count {
            let market = g.market(8, 0.05);
            let base = g.base_reward();
            let r = perturb_strictly_concave(&base, 0.01, m + 1).expect("valid epsilon");
            let rho = g.uniform(0.05, 0.5);
            let res = match bench::solve_benchmark(&market, &r, m, rho, false) {
                Ok(res) => res,
                Err(e) => return (false, format!("case {case}: {e}")),
            };
            if let Some(ell) = check_monotone(&res.win, 1e-6).first_violation() {
                return (false, format!("case {case}: W not monotone at ℓ = {ell}"));
            }
            if (res.pay - rho).abs() <= 1e-7 {
                binding += 1;
                let cbar = market.mean_conversion();
                if let Some(ell) = check_win_floor(&res.win, cbar, rho, 1e-6).first_violation() {
                    return (false, format!("case {case}: win floor violated at ℓ = {ell}"));
                }
            }
        }
        (true, format!("{count} instances monotone; win floor holds on {binding} binding"))
    })
}

fn dp_versus_lp(level: Level) -> CheckResult {
    let count = level.pick(20, 100);
    let t_max = level.pick(8, 12).min(DP_HORIZON_CAP);
    timed("dp_vs_lp", || {
        let mut g = Gen::new(3);
        let mut worst = f64::NEG_INFINITY;
        for case in 0..count {
            let k = g.int(1, 4);
            let levels = g.int(1, k + 1);
            let raw: Vec<(f64, f64, f64)> = (0..levels)
                .map(|_| (g.int(0, k) as f64 / k as f64, g.uniform(0.1, 1.0), g.uniform(0.1, 1.0)))
                .collect();
            let total: f64 = raw.iter().map(|x| x.2).sum();
            let market =
                MarketDistribution::new(raw.into_iter().map(|(p, c, w)| MarketAtom::new(p, c, w / total)).collect())
                    .expect("valid atoms");
            let t = g.int(1, t_max);
            let units = g.int(0, k * t);
            let budget = units as f64 / k as f64;
            let rho = budget / t as f64;
            let r = g.base_reward();
            let dp = match bench::finite_horizon_dp(&market, &r, t, budget, k, DP_HORIZON_CAP) {
                Ok(v) => v,
                Err(e) => return (false, format!("case {case}: {e}")),
            };
            let lp = match bench::solve_benchmark(&market, &r, t, rho, false) {
                Ok(res) => res.opt_value,
                Err(e) => return (false, format!("case {case}: {e}")),
            };
            let gap = dp / t as f64 - lp;
            worst = worst.max(gap);
            if gap > 1e-9 {
                return (
                    false,
                    format!(
                        "case {case}: DP/T exceeds LP by {gap:e} (atoms {:?}, r {r:?}, T {t}, B {budget}, K {k})",
                        market.atoms()
                    ),
                );
            }
        }
        (true, format!("{count} instances, max DP/T − LP = {worst:.3e}"))
    })
}

fn state_reduction(level: Level) -> CheckResult {
    let count = level.pick(10, 50);
    timed("state_reduction", || {
        let mut g = Gen::new(4);
        let big = 200;
        let mut worst = f64::NEG_INFINITY;
        for case in 0..count {
            let market = g.market(6, 0.3);
            let r = g.base_reward();
            let rho = g.uniform(0.1, 0.5);
            let cbar = market.mean_conversion();
            let m = ((2.0 / (cbar * rho)) * (big as f64).ln()).ceil().min(big as f64) as usize;
            let full = bench::solve_benchmark(&market, &r, big, rho, false).map(|x| x.opt_value);
            let reduced = bench::solve_benchmark(&market, &r, m, rho, true).map(|x| x.opt_value);
            let (full, reduced) = match (full, reduced) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return (false, format!("case {case}: {e}")),
            };
            let gap = full - reduced;
            worst = worst.max(gap);
            if gap > 1e-3 {
                return (false, format!("case {case}: opt(200) − opt({m}) = {gap:e}"));
            }
        }
        (true, format!("{count} instances, max gap {worst:.3e}"))
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn gc_scaling(level: Level) -> CheckResult {
    let trials = level.pick(30, 50);
    timed("gc_scaling", || {
        let mut g = Gen::new(5);
        let atoms = [
            (0.1, 0.9, 0.2),
            (0.25, 0.5, 0.15),
            (0.4, 1.0, 0.2),
            (0.55, 0.3, 0.15),
            (0.7, 0.8, 0.15),
            (0.9, 0.6, 0.15),
        ];
        let market = MarketDistribution::new(atoms.iter().map(|&(p, c, w)| MarketAtom::new(p, c, w)).collect())
            .expect("valid atoms");
        let sizes = [100usize, 400, 1600, 6400];
        let medians: Vec<f64> = sizes
            .iter()
            .map(|&n| {
                median(
                    (0..trials)
                        .map(|_| {
                            let mut s = SampleSet::new();
                            for _ in 0..n {
                                let (p, c) = market.sample(&mut g.0);
                                s.push(p, c).expect("market samples lie in range");
                            }
                            sup_error(&empirical_market(&s).expect("nonempty"), &market).0
                        })
                        .collect(),
                )
            })
            .collect();
        let ratios: Vec<f64> = medians.windows(2).map(|w| w[1] / w[0]).collect();
        let ok = ratios.iter().all(|&q| (0.35..=0.7).contains(&q));
        let shown: Vec<String> = ratios.iter().map(|q| format!("{q:.3}")).collect();
        (ok, format!("median ratios per 4x samples: {}", shown.join(", ")))
    })
}

fn reverse_jensen(level: Level) -> CheckResult {
    let count = level.pick(200, 1000);
    timed("reverse_jensen", || {
        let mut g = Gen::new(6);
        let mut tightest = f64::INFINITY;
        for case in 0..count {
            let m = g.int(1, 50);
            let mut inc: Vec<f64> = (0..m).map(|_| g.uniform(0.0, 1.0)).collect();
            inc.sort_by(|a, b| b.total_cmp(a));
            let mut values = vec![0.0];
            for d in inc {
                values.push(values.last().expect("nonempty") + d);
            }
            let r = RewardFn::Table { values };
            let support = g.int(1, 5);
            let raw: Vec<(usize, f64)> = (0..support).map(|_| (g.int(1, 100), g.uniform(0.05, 1.0))).collect();
            let total: f64 = raw.iter().map(|x| x.1).sum();
            let y: Vec<(usize, f64)> = raw.into_iter().map(|(v, p)| (v, p / total)).collect();
            let rj = match reverse_jensen_check(&r, m, &y) {
                Ok(rj) => rj,
                Err(e) => return (false, format!("case {case}: {e}")),
            };
            tightest = tightest.min(rj.lhs - rj.rhs);
            if !rj.ok {
                return (false, format!("case {case}: lhs {} < rhs {}", rj.lhs, rj.rhs));
            }
        }
        (true, format!("{count} instances, min lhs − rhs = {tightest:.3e}"))
    })
}

fn static_sandwich(level: Level) -> CheckResult {
    let count = level.pick(20, 100);
    timed("static_vs_benchmark", || {
        let mut g = Gen::new(7);
        let m = 30;
        for case in 0..count {
            let market = g.market(6, 0.05);
            let r = g.base_reward();
            let rho = g.uniform(0.05, 0.5);
            let stat = baselines::optimal_static(&market, &r, m, rho).map(|x| x.1);
            let opt = bench::solve_benchmark(&market, &r, m, rho, false).map(|x| x.opt_value);
            let (stat, opt) = match (stat, opt) {
                (Ok(s), Ok(o)) => (s, o),
                (Err(e), _) => return (false, format!("case {case}: {e}")),
                (_, Err(e)) => return (false, format!("case {case}: {e}")),
            };
            let floor = (1.0 - (-1.0f64).exp()) * opt - 2e-2;
            if stat > opt + 1e-9 || stat < floor {
                return (false, format!("case {case}: static {stat} vs benchmark {opt}"));
            }
        }
        (true, format!("{count} instances within [(1−1/e)·OPT − 0.02, OPT]"))
    })
}

/// Runs every property check at `level`, with an optional extra reward
/// (e.g. from a configuration) validated first.
pub fn validate_suite(level: Level, extra_reward: Option<&RewardFn>) -> ValidationReport {
    let mut checks = Vec::new();
    if let Some(r) = extra_reward {
        checks.push(check_reward("config_reward", r, super::REWARD_CHECK_HORIZON));
    }
    checks.push(builtin_rewards(level));
    checks.push(simplex_oracle(level));
    checks.push(monotone_and_win_floor(level));
    checks.push(dp_versus_lp(level));
    checks.push(state_reduction(level));
    checks.push(gc_scaling(level));
    checks.push(reverse_jensen(level));
    checks.push(static_sandwich(level));
    ValidationReport { checks }
}
