//! Oracle-equivalence checks runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backtests::{kupiec_pof, simulate_violation_counts, test1_coverage, HitSequence, Verdict};
use crate::distributions::{fit_empirical, GaussianParams, Predictive};
use crate::engine::{run_backtest, synthetic_panel, trailing_schedule, BacktestPlan, Generator, Measure};
use crate::distributions::ModelKind;
use crate::lambda::{Direction, LambdaFunction};
use crate::poisson_binomial::PoissonBinomial;
use crate::risk::{lambda_var, solve_crossing, var};
use crate::special::std_normal_quantile;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        poisson_binomial_enumeration(&mut rng),
        binomial_closed_form(),
        constant_lambda_reduction(&mut rng),
        crossing_against_grid(&mut rng),
        test1_boundary(),
        kupiec_values(),
        simulation_against_exact(&mut rng),
        dominance_on_synthetic_run(seed),
    ]
}

fn enumerate_pmf(p: &[f64]) -> Vec<f64> {
    let t = p.len();
    let mut pmf = vec![0.0; t + 1];
    for mask in 0u32..(1 << t) {
        let mut prob = 1.0;
        for (i, pi) in p.iter().enumerate() {
            prob *= if mask >> i & 1 == 1 { *pi } else { 1.0 - pi };
        }
        pmf[mask.count_ones() as usize] += prob;
    }
    pmf
}

fn poisson_binomial_enumeration(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let t = rng.random_range(1..=12);
        let p: Vec<f64> = (0..t).map(|_| rng.random_range(0.001..0.999)).collect();
        let Ok(dist) = PoissonBinomial::new(&p) else {
            return check("poisson-binomial vs enumeration", false, "construction failed".into());
        };
        for (a, b) in dist.pmf().iter().zip(enumerate_pmf(&p)) {
            worst = worst.max((a - b).abs());
        }
    }
    check("poisson-binomial vs enumeration", worst <= 1e-12, format!("max error {worst:.2e}"))
}

fn binomial_closed_form() -> CheckResult {
    let mut worst = 0.0f64;
    for t in [1usize, 10, 30, 60] {
        for p in [0.01, 0.3, 0.5] {
            let Ok(dist) = PoissonBinomial::new(&vec![p; t]) else {
                return check("equal-p binomial", false, "construction failed".into());
            };
            let mut coef = 1.0f64;
            for k in 0..=t {
                if k > 0 {
                    coef *= (t - k + 1) as f64 / k as f64;
                }
                let exact = coef * p.powi(k as i32) * (1.0 - p).powi((t - k) as i32);
                worst = worst.max((dist.pmf()[k] - exact).abs());
            }
        }
    }
    check("equal-p binomial", worst <= 1e-12, format!("max error {worst:.2e}"))
}

fn constant_lambda_reduction(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0.0f64;
    for i in 0..40 {
        let level = rng.random_range(0.001..0.2);
        let Ok(f) = LambdaFunction::constant(level) else {
            return check("constant Λ reduces to VaR", false, "bad level".into());
        };
        let pair = if i % 2 == 0 {
            let g = GaussianParams::new(rng.random_range(-0.01..0.01), rng.random_range(0.005..0.05)).expect("valid");
            var(&g, level).map(|v| (v, lambda_var(&g, &f)))
        } else {
            let sample: Vec<f64> = (0..rng.random_range(20..300)).map(|_| rng.random_range(-0.05..0.05)).collect();
            let e = fit_empirical(&sample).expect("window of at least 2");
            var(&e, level).map(|v| (v, lambda_var(&e, &f)))
        };
        let Ok((v, l)) = pair else {
            return check("constant Λ reduces to VaR", false, "VaR failed".into());
        };
        worst = worst
            .max((v.var_value - l.var_value).abs())
            .max((v.coverage_prob - l.coverage_prob).abs());
    }
    check("constant Λ reduces to VaR", worst <= 1e-9, format!("max gap {worst:.2e}"))
}

/// inf{x : cdf(x) > Λ(x)} by a fixed grid and bisection inside the first
/// grid cell where the inequality holds.
pub fn grid_crossing(cdf: impl Fn(f64) -> f64, lambda: impl Fn(f64) -> f64, from: f64, to: f64, step: f64) -> Option<f64> {
    let n = ((to - from) / step).ceil() as usize;
    if cdf(from) > lambda(from) {
        return None;
    }
    let mut prev = from;
    for i in 1..=n {
        let x = from + i as f64 * step;
        if cdf(x) > lambda(x) {
            let (mut lo, mut hi) = (prev, x);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) > lambda(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        prev = x;
    }
    None
}

/// A random 2–5 breakpoint Λ within [0.001, 0.05].
pub fn random_lambda(rng: &mut impl Rng, direction: Direction) -> LambdaFunction {
    let n = rng.random_range(2..=5);
    let mut pis: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..-1.0)).collect();
    pis.sort_by(f64::total_cmp);
    let mut levels: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.05)).collect();
    levels.sort_by(f64::total_cmp);
    if direction == Direction::Decreasing {
        levels.reverse();
    }
    let points: Vec<(f64, f64)> = pis.into_iter().zip(levels).collect();
    LambdaFunction::new(&points, direction).expect("sorted breakpoints")
}

fn crossing_against_grid(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0.0f64;
    for i in 0..20 {
        let direction = if i % 2 == 0 { Direction::Increasing } else { Direction::Decreasing };
        let f = random_lambda(rng, direction);
        let g = GaussianParams::new(rng.random_range(-0.5..0.5), rng.random_range(0.5..1.5)).expect("valid");
        let lo = g.quantile(f.min_value()) - 1e-3;
        let hi = g.quantile(f.max_value()) + 1e-3;
        let Some(oracle) = grid_crossing(|x| g.cdf(x), |x| f.eval(x), lo, hi, 1e-5) else {
            return check("crossing solver vs grid", false, "grid found no crossing".into());
        };
        worst = worst.max((solve_crossing(&g, &f) - oracle).abs());
    }
    check("crossing solver vs grid", worst <= 1e-6, format!("max gap {worst:.2e}"))
}

fn test1_boundary() -> CheckResult {
    let verdict = |n: usize| {
        let hits = (0..250).map(|i| i < n).collect();
        HitSequence::from_parts(hits, vec![0.01; 250])
            .and_then(|h| test1_coverage(&h, 0.10))
            .map(|r| r.verdict)
    };
    let ok = matches!((verdict(4), verdict(5)), (Ok(Verdict::Accept), Ok(Verdict::Reject)));
    check("test 1 boundary at 4/5 violations", ok, String::new())
}

fn kupiec_values() -> CheckResult {
    let zero = kupiec_pof(0, 250, 0.01, 0.10);
    let exact = kupiec_pof(5, 500, 0.01, 0.10);
    let ok = match (zero, exact) {
        (Ok(z), Ok(e)) => (z.statistic - 5.025).abs() <= 1e-3 && z.verdict == Verdict::Accept && e.statistic == 0.0,
        _ => false,
    };
    check("kupiec likelihood ratio values", ok, String::new())
}

fn simulation_against_exact(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0.0f64;
    let std = GaussianParams::new(0.0, 1.0).expect("valid");
    for _ in 0..3 {
        let coverage: Vec<f64> = (0..250).map(|_| rng.random_range(0.002..0.03)).collect();
        let thresholds: Vec<f64> = coverage.iter().map(|p| std_normal_quantile(*p).expect("in (0,1)")).collect();
        let exact: Vec<f64> = thresholds.iter().map(|y| std.cdf(*y)).collect();
        let models = vec![std; 250];
        let (Ok(counts), Ok(pb)) = (
            simulate_violation_counts(&models, &[&thresholds], 10_000, rng.random()),
            PoissonBinomial::new(&exact),
        ) else {
            return check("simulated violation law vs exact", false, "simulation failed".into());
        };
        let mut sorted = counts[0].clone();
        sorted.sort_unstable();
        for k in 0..=250usize {
            let below = sorted.partition_point(|&c| c as usize <= k) as f64 / sorted.len() as f64;
            worst = worst.max((below - pb.cdf(k)).abs());
        }
    }
    check("simulated violation law vs exact", worst <= 0.02, format!("sup gap {worst:.4}"))
}

fn dominance_on_synthetic_run(seed: u64) -> CheckResult {
    let name = "ΛVaR dominates 1% VaR on a synthetic run";
    let Ok(panel) = synthetic_panel(Generator::regime_shift(0.01), 1, 3, 1000, seed) else {
        return check(name, false, "panel generation failed".into());
    };
    let mut violations = 0usize;
    let mut days = 0usize;
    for model in [ModelKind::Historical, ModelKind::Gaussian] {
        let mut plan = BacktestPlan::new(panel.assets[0].clone(), panel.benchmarks.clone(), model);
        plan.schedule = trailing_schedule(1000, 250, 2).unwrap_or_default();
        plan.tests.clear();
        let Ok(archive) = run_backtest(&plan) else {
            return check(name, false, "backtest failed".into());
        };
        let var_idx = plan
            .measures
            .iter()
            .position(|m| matches!(m, Measure::Var { .. }))
            .unwrap_or(0);
        for d in archive.windows.iter().flat_map(|w| &w.days) {
            days += 1;
            let base = d.forecasts[var_idx];
            for (m, f) in d.forecasts.iter().enumerate() {
                if f.var_value < base.var_value || (d.hits[m] && !d.hits[var_idx]) {
                    violations += 1;
                }
            }
        }
    }
    check(name, violations == 0 && days > 0, format!("{violations} violations over {days} days"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_selftest(1) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
