//! Hit sequences and the coverage tests run on them.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{ModelKind, Predictive};
use crate::error::{Error, Result};
use crate::lambda::LambdaFunction;
use crate::poisson_binomial::PoissonBinomial;
use crate::risk::RiskForecast;
use crate::special::{chi2_1_quantile, chi2_1_sf, std_normal_cdf, std_normal_quantile};

pub const MIN_SCENARIOS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestId {
    Test1,
    Test2,
    Test3,
    KupiecPof,
    KupiecLambda,
}

impl TestId {
    pub const ALL: [TestId; 5] = [
        TestId::Test1,
        TestId::Test2,
        TestId::Test3,
        TestId::KupiecPof,
        TestId::KupiecLambda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestId::Test1 => "test1",
            TestId::Test2 => "test2",
            TestId::Test3 => "test3",
            TestId::KupiecPof => "kupiec_pof",
            TestId::KupiecLambda => "kupiec_lambda",
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestId::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown test `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    fn reject_if(cond: bool) -> Self {
        if cond {
            Verdict::Reject
        } else {
            Verdict::Accept
        }
    }

    pub fn is_accept(self) -> bool {
        self == Verdict::Accept
    }
}

/// Where a report came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub asset: String,
    pub model: Option<ModelKind>,
    pub measure: String,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test_id: TestId,
    pub statistic: f64,
    /// Tail mass whose comparison with `alpha` decides the verdict.
    pub p_value: Option<f64>,
    pub alpha: f64,
    pub verdict: Verdict,
    pub n_violations: usize,
    pub observations: usize,
    pub critical_lower: Option<f64>,
    pub critical_upper: Option<f64>,
    #[serde(default)]
    pub meta: ReportMeta,
}

/// Violation indicators with the model's violation probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSequence {
    pub hits: Vec<bool>,
    pub coverage: Vec<f64>,
    /// Days whose coverage was floored away from zero.
    pub floored: Vec<bool>,
}

impl HitSequence {
    /// Iₜ = 1 iff xₜ < yₜ, paired with λ⁰ₜ.
    pub fn new(realized: &[f64], forecasts: &[RiskForecast]) -> Result<Self> {
        if realized.len() != forecasts.len() {
            return Err(Error::invalid(format!(
                "{} realized returns for {} forecasts",
                realized.len(),
                forecasts.len()
            )));
        }
        if realized.is_empty() {
            return Err(Error::invalid("empty backtest window"));
        }
        Ok(Self {
            hits: realized.iter().zip(forecasts).map(|(&x, f)| f.is_hit(x)).collect(),
            coverage: forecasts.iter().map(|f| f.coverage_prob).collect(),
            floored: forecasts.iter().map(|f| f.floored).collect(),
        })
    }

    /// Builds a sequence directly from indicators and probabilities.
    pub fn from_parts(hits: Vec<bool>, coverage: Vec<f64>) -> Result<Self> {
        if hits.len() != coverage.len() || hits.is_empty() {
            return Err(Error::invalid("hits and coverage must be nonempty and aligned"));
        }
        if let Some(p) = coverage.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::invalid(format!("coverage {p} outside (0, 1)")));
        }
        let floored = vec![false; hits.len()];
        Ok(Self { hits, coverage, floored })
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn violations(&self) -> usize {
        self.hits.iter().filter(|h| **h).count()
    }

    fn report(&self, test_id: TestId, statistic: f64, alpha: f64, verdict: Verdict) -> TestReport {
        TestReport {
            test_id,
            statistic,
            p_value: None,
            alpha,
            verdict,
            n_violations: self.violations(),
            observations: self.len(),
            critical_lower: None,
            critical_upper: None,
            meta: ReportMeta::default(),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain("significance level"))
    }
}

/// Unilateral exact coverage test: Z₁ = Σ Iₜ against Poisson-Binomial(λ⁰),
/// rejecting when P(Z₁ ≤ z₁) > 1 − α.
///
/// `p_value` is P(Z₁ > z₁); the bilateral quantiles q(α/2), q(1 − α/2) are
/// reported as critical bounds for diagnostics only.
pub fn test1_coverage(h: &HitSequence, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let dist = PoissonBinomial::new(&h.coverage)?;
    let z1 = h.violations();
    let cdf = dist.cdf(z1);
    let mut report = h.report(TestId::Test1, z1 as f64, alpha, Verdict::reject_if(cdf > 1.0 - alpha));
    report.p_value = Some(dist.sf_inclusive(z1 + 1));
    report.critical_lower = Some(dist.quantile(alpha / 2.0)? as f64);
    report.critical_upper = Some(dist.quantile(1.0 - alpha / 2.0)? as f64);
    Ok(report)
}

/// Bilateral asymptotic coverage test on
/// Z₂ = Σ(Iₜ − λ⁰ₜ) / √Σ λ⁰ₜ(1 − λ⁰ₜ).
pub fn test2_asymptotic(h: &HitSequence, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let variance: f64 = h.coverage.iter().map(|p| p * (1.0 - p)).sum();
    if !(variance > 0.0) {
        return Err(Error::Domain("Test 2 variance"));
    }
    let centered: f64 = h
        .hits
        .iter()
        .zip(&h.coverage)
        .map(|(&i, p)| f64::from(u8::from(i)) - p)
        .sum();
    let z2 = centered / variance.sqrt();
    let lower = std_normal_quantile(alpha / 2.0)?;
    let upper = std_normal_quantile(1.0 - alpha / 2.0)?;
    let mut report = h.report(TestId::Test2, z2, alpha, Verdict::reject_if(z2 < lower || z2 > upper));
    report.p_value = Some((2.0 * std_normal_cdf(-z2.abs())).min(1.0));
    report.critical_lower = Some(lower);
    report.critical_upper = Some(upper);
    Ok(report)
}

/// Violation counts of `m` scenarios simulated from the stored day models.
///
/// Each scenario draws one return per day from `models[t]` and counts, for
/// every threshold set, the days falling strictly below the threshold.
/// Scenario `i` uses ChaCha stream `i` under `seed`, so results do not
/// depend on thread scheduling. Output is indexed `[set][scenario]`.
pub fn simulate_violation_counts<D>(models: &[D], threshold_sets: &[&[f64]], m: usize, seed: u64) -> Result<Vec<Vec<u32>>>
where
    D: Predictive + Sync,
{
    for set in threshold_sets {
        if set.len() != models.len() {
            return Err(Error::invalid(format!(
                "stored models cover {} days but {} thresholds were given",
                models.len(),
                set.len()
            )));
        }
    }
    let per_scenario: Vec<Vec<u32>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut counts = vec![0u32; threshold_sets.len()];
            for (t, model) in models.iter().enumerate() {
                let x = model.sample(&mut rng);
                for (c, set) in counts.iter_mut().zip(threshold_sets) {
                    if x < set[t] {
                        *c += 1;
                    }
                }
            }
            counts
        })
        .collect();
    Ok((0..threshold_sets.len())
        .map(|s| per_scenario.iter().map(|c| c[s]).collect())
        .collect())
}

/// Z₃ = (1/T) Σ (λ⁰ₜ − Iₜ), with p-value (1 + #{Z₃⁽ᵐ⁾ ≤ z₃})/(M + 1).
pub fn z3_statistic(h: &HitSequence) -> f64 {
    let total: f64 = h
        .hits
        .iter()
        .zip(&h.coverage)
        .map(|(&i, p)| p - f64::from(u8::from(i)))
        .sum();
    total / h.len() as f64
}

/// Test 3 from precomputed scenario violation counts.
///
/// Z₃⁽ᵐ⁾ ≤ z₃ exactly when the scenario has at least as many violations as
/// observed, so the comparison is made on integer counts.
pub fn test3_from_counts(h: &HitSequence, counts: &[u32], alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    if counts.len() < MIN_SCENARIOS {
        return Err(Error::invalid(format!(
            "Test 3 needs at least {MIN_SCENARIOS} scenarios, got {}",
            counts.len()
        )));
    }
    let observed = h.violations();
    let at_least = counts.iter().filter(|&&k| k as usize >= observed).count();
    let p = (1 + at_least) as f64 / (counts.len() + 1) as f64;
    let mut report = h.report(TestId::Test3, z3_statistic(h), alpha, Verdict::reject_if(p < alpha));
    report.p_value = Some(p);
    Ok(report)
}

/// P&L-correctness test: simulates `m` scenarios from the day models
/// holding each day's threshold fixed.
pub fn test3_simulation<D>(
    h: &HitSequence,
    models: &[D],
    forecasts: &[RiskForecast],
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestReport>
where
    D: Predictive + Sync,
{
    if models.len() != h.len() || forecasts.len() != h.len() {
        return Err(Error::invalid(format!(
            "missing stored model: {} models and {} forecasts for {} days",
            models.len(),
            forecasts.len(),
            h.len()
        )));
    }
    if m < MIN_SCENARIOS {
        return Err(Error::invalid(format!("Test 3 needs M >= {MIN_SCENARIOS}")));
    }
    let thresholds: Vec<f64> = forecasts.iter().map(|f| f.threshold_return).collect();
    let counts = simulate_violation_counts(models, &[&thresholds], m, seed)?;
    test3_from_counts(h, &counts[0], alpha)
}

/// −2 ln of the Bernoulli likelihood ratio, with 0·ln 0 = 0.
pub fn kupiec_lr(n: usize, t: usize, lambda0: f64) -> f64 {
    let xlogy = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * y.ln() };
    let n_f = n as f64;
    let rest = (t - n) as f64;
    let freq = n_f / t as f64;
    let restricted = xlogy(n_f, lambda0) + xlogy(rest, 1.0 - lambda0);
    let unrestricted = xlogy(n_f, freq) + xlogy(rest, 1.0 - freq);
    (-2.0 * (restricted - unrestricted)).max(0.0)
}

/// Kupiec proportion-of-failures test, one-sided: frequencies at or below
/// `lambda0` are always accepted.
pub fn kupiec_pof(n: usize, t: usize, lambda0: f64, alpha: f64) -> Result<TestReport> {
    kupiec(TestId::KupiecPof, n, t, lambda0, alpha)
}

/// Kupiec-type test of the violation frequency against max Λ.
pub fn kupiec_lambda(n: usize, t: usize, f: &LambdaFunction, alpha: f64) -> Result<TestReport> {
    kupiec(TestId::KupiecLambda, n, t, f.max_value(), alpha)
}

fn kupiec(test_id: TestId, n: usize, t: usize, lambda0: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    if t == 0 || n > t {
        return Err(Error::invalid(format!("{n} violations over {t} days")));
    }
    if !(lambda0 > 0.0 && lambda0 < 1.0) {
        return Err(Error::Domain("Kupiec null probability"));
    }
    let lr = kupiec_lr(n, t, lambda0);
    let critical = chi2_1_quantile(1.0 - alpha)?;
    let over = n as f64 / t as f64 > lambda0;
    Ok(TestReport {
        test_id,
        statistic: lr,
        p_value: Some(chi2_1_sf(lr)),
        alpha,
        verdict: Verdict::reject_if(over && lr > critical),
        n_violations: n,
        observations: t,
        critical_lower: None,
        critical_upper: Some(critical),
        meta: ReportMeta::default(),
    })
}
