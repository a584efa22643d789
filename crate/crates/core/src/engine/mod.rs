//! Rolling-window backtest protocol.

mod aggregate;
mod synthetic;

pub use aggregate::{aggregate, AcceptanceRow, AcceptanceTable};
pub use synthetic::{gen_synthetic, synthetic_start_date, Generator, GeneratorId};

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backtests::{
    kupiec_lambda, kupiec_pof, simulate_violation_counts, test1_coverage, test2_asymptotic, test3_from_counts,
    HitSequence, ReportMeta, TestId, TestReport, MIN_SCENARIOS,
};
use crate::distributions::{fit_garch_t_warm, ModelKind, PredictiveDistribution};
use crate::error::{Error, Result};
use crate::lambda::{calibrate_lambda, BenchmarkPanel, Calibration, Direction, LambdaConfig, LambdaFunction};
use crate::risk::{lambda_var, var, RiskForecast};
use crate::series::ReturnSeries;

/// Trading days per evaluation window.
pub const DEFAULT_HORIZON: usize = 250;
/// Number of consecutive evaluation windows.
pub const DEFAULT_WINDOWS: usize = 6;
/// Share of days in a window allowed to fall back on a carried-forward fit.
pub const FIT_FAILURE_BUDGET: f64 = 0.01;

/// A risk measure forecast every day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    Var { level: f64 },
    LambdaVar(LambdaConfig),
}

impl Measure {
    pub fn label(&self) -> String {
        match self {
            Measure::Var { level } => format!("var_{}%", pct(*level)),
            Measure::LambdaVar(cfg) => format!(
                "lvar_{}_b{}%_min{}%",
                match cfg.direction {
                    Direction::Increasing => "incr",
                    Direction::Decreasing => "decr",
                },
                pct(cfg.benchmark_var_level),
                pct(cfg.lambda_min)
            ),
        }
    }

    pub fn direction(&self) -> Option<Direction> {
        match self {
            Measure::Var { .. } => None,
            Measure::LambdaVar(cfg) => Some(cfg.direction),
        }
    }

    pub fn benchmark_var_level(&self) -> Option<f64> {
        match self {
            Measure::Var { .. } => None,
            Measure::LambdaVar(cfg) => Some(cfg.benchmark_var_level),
        }
    }

    pub fn lambda_min(&self) -> Option<f64> {
        match self {
            Measure::Var { .. } => None,
            Measure::LambdaVar(cfg) => Some(cfg.lambda_min),
        }
    }

    /// VaR level, or λ_max for ΛVaR.
    pub fn nominal_level(&self) -> f64 {
        match self {
            Measure::Var { level } => *level,
            Measure::LambdaVar(cfg) => cfg.lambda_max,
        }
    }

    fn calibration_window(&self) -> usize {
        match self {
            Measure::Var { .. } => 0,
            Measure::LambdaVar(cfg) => cfg.window,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Measure::Var { level } if *level > 0.0 && *level < 1.0 => Ok(()),
            Measure::Var { level } => Err(Error::invalid(format!("VaR level {level} outside (0, 1)"))),
            Measure::LambdaVar(cfg) => cfg.validate(),
        }
    }
}

/// `0.005` → `"0.5"`.
fn pct(p: f64) -> String {
    let s = format!("{:.4}", p * 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// VaR at λ_max and ΛVaR for each direction and benchmark VaR level.
pub fn standard_measures(base: &LambdaConfig, directions: &[Direction], benchmark_levels: &[f64]) -> Vec<Measure> {
    let mut out = vec![Measure::Var { level: base.lambda_max }];
    for &direction in directions {
        for &level in benchmark_levels {
            out.push(Measure::LambdaVar(LambdaConfig {
                direction,
                benchmark_var_level: level,
                ..*base
            }));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recalibration {
    #[default]
    Daily,
    PerWindow,
}

impl fmt::Display for Recalibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recalibration::Daily => "daily",
            Recalibration::PerWindow => "per_window",
        })
    }
}

impl FromStr for Recalibration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "daily" => Ok(Recalibration::Daily),
            "per_window" | "window" => Ok(Recalibration::PerWindow),
            other => Err(Error::invalid(format!("unknown recalibration `{other}`"))),
        }
    }
}

/// Evaluation span `[start, start + len)` in day indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub index: usize,
    pub start: usize,
    pub len: usize,
}

impl EvalWindow {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// `count` back-to-back windows of `horizon` days ending at the last
/// observation.
pub fn trailing_schedule(n_obs: usize, horizon: usize, count: usize) -> Result<Vec<EvalWindow>> {
    let span = horizon
        .checked_mul(count)
        .filter(|s| *s <= n_obs && horizon > 0 && count > 0)
        .ok_or(Error::InsufficientData {
            needed: horizon.saturating_mul(count).max(1),
            got: n_obs,
        })?;
    let first = n_obs - span;
    Ok((0..count)
        .map(|k| EvalWindow {
            index: k,
            start: first + k * horizon,
            len: horizon,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestPlan {
    pub asset: ReturnSeries,
    pub benchmarks: BenchmarkPanel,
    pub model: ModelKind,
    pub estimation_window: usize,
    pub schedule: Vec<EvalWindow>,
    pub measures: Vec<Measure>,
    pub tests: Vec<TestId>,
    pub recalibration: Recalibration,
    pub alpha: f64,
    pub m_sims: usize,
    pub seed: u64,
}

impl BacktestPlan {
    /// Plan with the default window length for `model`, six trailing
    /// 250-day windows, the standard measures and every test. The schedule
    /// is left empty when the series is shorter than the six windows.
    pub fn new(asset: ReturnSeries, benchmarks: BenchmarkPanel, model: ModelKind) -> Self {
        let schedule = trailing_schedule(asset.len(), DEFAULT_HORIZON, DEFAULT_WINDOWS).unwrap_or_default();
        Self {
            asset,
            benchmarks,
            model,
            estimation_window: model.default_window(),
            schedule,
            measures: standard_measures(
                &LambdaConfig::default(),
                &[Direction::Increasing, Direction::Decreasing],
                &[0.05, 0.01],
            ),
            tests: TestId::ALL.to_vec(),
            recalibration: Recalibration::Daily,
            alpha: 0.10,
            m_sims: 10_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.benchmarks.series()[0].dates() != self.asset.dates() {
            return Err(Error::invalid(format!(
                "benchmarks are not aligned with asset `{}`",
                self.asset.name()
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.tests.contains(&TestId::Test3) && self.m_sims < MIN_SCENARIOS {
            return Err(Error::invalid(format!("m_sims must be at least {MIN_SCENARIOS} when test3 is enabled")));
        }
        if self.measures.is_empty() {
            return Err(Error::invalid("no measures configured"));
        }
        for m in &self.measures {
            m.validate()?;
        }
        if self.schedule.is_empty() {
            return Err(Error::invalid("empty window schedule"));
        }
        let history = self
            .measures
            .iter()
            .map(Measure::calibration_window)
            .max()
            .unwrap_or(0)
            .max(self.estimation_window);
        let mut previous_end = 0;
        for w in &self.schedule {
            if w.len == 0 {
                return Err(Error::invalid(format!("window {} is empty", w.index)));
            }
            if w.start < history {
                return Err(Error::InsufficientData {
                    needed: history,
                    got: w.start,
                });
            }
            if w.end() > self.asset.len() {
                return Err(Error::InsufficientData {
                    needed: w.end(),
                    got: self.asset.len(),
                });
            }
            if w.start < previous_end {
                return Err(Error::invalid("evaluation windows overlap or are out of order"));
            }
            previous_end = w.end();
        }
        Ok(())
    }
}

/// Everything known about one evaluation day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub t: usize,
    pub date: NaiveDate,
    pub realized: f64,
    pub model: PredictiveDistribution,
    /// The fit failed and `model` was carried forward.
    pub fit_failed: bool,
    /// One entry per measure, in plan order.
    pub forecasts: Vec<RiskForecast>,
    pub hits: Vec<bool>,
    /// Λ in force for each ΛVaR measure.
    pub calibrations: Vec<Option<Calibration>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureOutcome {
    pub measure: String,
    pub hits: HitSequence,
    pub reports: Vec<TestReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowArchive {
    pub window: EvalWindow,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub seed: u64,
    pub days: Vec<DayRecord>,
    pub fit_failures: usize,
    pub valid: bool,
    pub invalid_reason: Option<String>,
    /// Empty for invalid windows.
    pub outcomes: Vec<MeasureOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArchive {
    pub asset: String,
    pub model: ModelKind,
    pub estimation_window: usize,
    pub recalibration: Recalibration,
    pub measures: Vec<Measure>,
    pub tests: Vec<TestId>,
    pub alpha: f64,
    pub m_sims: usize,
    pub seed: u64,
    pub windows: Vec<WindowArchive>,
}

impl RunArchive {
    pub fn reports(&self) -> impl Iterator<Item = &TestReport> {
        self.windows
            .iter()
            .flat_map(|w| w.outcomes.iter())
            .flat_map(|o| o.reports.iter())
    }

    /// Reruns Test 3 for one window and measure from the archived day
    /// models and thresholds.
    pub fn replay_test3(&self, window: usize, measure: usize) -> Result<TestReport> {
        let w = self
            .windows
            .get(window)
            .ok_or_else(|| Error::invalid(format!("no window {window}")))?;
        let outcome = w
            .outcomes
            .get(measure)
            .ok_or_else(|| Error::invalid(format!("no outcome for measure {measure}")))?;
        let models: Vec<PredictiveDistribution> = w.days.iter().map(|d| d.model.clone()).collect();
        let thresholds: Vec<f64> = w.days.iter().map(|d| d.forecasts[measure].threshold_return).collect();
        let counts = simulate_violation_counts(&models, &[&thresholds], self.m_sims, w.seed)?;
        let mut report = test3_from_counts(&outcome.hits, &counts[0], self.alpha)?;
        report.meta = self.meta(w.window.index, measure);
        Ok(report)
    }

    fn meta(&self, window: usize, measure: usize) -> ReportMeta {
        ReportMeta {
            asset: self.asset.clone(),
            model: Some(self.model),
            measure: self.measures[measure].label(),
            window,
        }
    }
}

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of a work unit identified by `path` under `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(master), |acc, &id| splitmix(acc ^ splitmix(id)))
}

/// Runs every window of `plan`; windows are processed in parallel.
pub fn run_backtest(plan: &BacktestPlan) -> Result<RunArchive> {
    plan.validate()?;
    let mut archive = RunArchive {
        asset: plan.asset.name().to_string(),
        model: plan.model,
        estimation_window: plan.estimation_window,
        recalibration: plan.recalibration,
        measures: plan.measures.clone(),
        tests: plan.tests.clone(),
        alpha: plan.alpha,
        m_sims: plan.m_sims,
        seed: plan.seed,
        windows: Vec::new(),
    };
    let windows: Vec<WindowArchive> = plan
        .schedule
        .par_iter()
        .map(|w| run_window(plan, w))
        .collect::<Result<_>>()?;
    archive.windows = windows;
    for w in &mut archive.windows {
        let index = w.window.index;
        for (m, outcome) in w.outcomes.iter_mut().enumerate() {
            for r in &mut outcome.reports {
                r.meta = ReportMeta {
                    asset: plan.asset.name().to_string(),
                    model: Some(plan.model),
                    measure: plan.measures[m].label(),
                    window: index,
                };
            }
        }
    }
    Ok(archive)
}

fn fit_day(plan: &BacktestPlan, t: usize, previous: Option<&PredictiveDistribution>) -> Result<PredictiveDistribution> {
    let window = &plan.asset.values()[t - plan.estimation_window..t];
    match previous {
        // a cold multi-start fit backs up a failed warm start
        Some(PredictiveDistribution::GarchT(prev)) => fit_garch_t_warm(window, prev)
            .map(Into::into)
            .or_else(|_| PredictiveDistribution::fit(plan.model, window)),
        _ => PredictiveDistribution::fit(plan.model, window),
    }
}

/// Yesterday's parameters, with the GARCH variance rolled over yesterday's
/// return.
fn carry_forward(previous: &PredictiveDistribution, last_return: f64) -> Result<PredictiveDistribution> {
    Ok(match previous {
        PredictiveDistribution::GarchT(p) => {
            let sigma2 = p.omega + p.alpha * last_return * last_return + p.beta * p.sigma2_next;
            crate::distributions::GarchTParams::new(p.omega, p.alpha, p.beta, p.nu, sigma2)?.into()
        }
        other => other.clone(),
    })
}

fn calibrate(plan: &BacktestPlan, t: usize) -> Result<Vec<Option<Calibration>>> {
    plan.measures
        .iter()
        .map(|m| match m {
            Measure::Var { .. } => Ok(None),
            Measure::LambdaVar(cfg) => calibrate_lambda(&plan.benchmarks, cfg, t).map(Some),
        })
        .collect()
}

fn forecast(measure: &Measure, model: &PredictiveDistribution, calibration: Option<&Calibration>) -> Result<RiskForecast> {
    match (measure, calibration) {
        (Measure::Var { level }, _) => var(model, *level),
        (Measure::LambdaVar(_), Some(c)) => Ok(lambda_var(model, &c.function)),
        (Measure::LambdaVar(_), None) => Err(Error::invalid("ΛVaR measure without a calibration")),
    }
}

fn run_window(plan: &BacktestPlan, w: &EvalWindow) -> Result<WindowArchive> {
    let values = plan.asset.values();
    let dates = plan.asset.dates();
    let seed = derive_seed(plan.seed, &[w.index as u64]);
    let mut archive = WindowArchive {
        window: *w,
        first_date: dates[w.start],
        last_date: dates[w.end() - 1],
        seed,
        days: Vec::with_capacity(w.len),
        fit_failures: 0,
        valid: true,
        invalid_reason: None,
        outcomes: Vec::new(),
    };

    let window_calibration = match plan.recalibration {
        Recalibration::PerWindow => Some(calibrate(plan, w.start)?),
        Recalibration::Daily => None,
    };
    let mut previous: Option<PredictiveDistribution> = None;
    for t in w.start..w.end() {
        let (model, fit_failed) = match fit_day(plan, t, previous.as_ref()) {
            Ok(m) => (m, false),
            Err(e) => {
                debug!("{} {} day {t}: fit failed: {e}", plan.asset.name(), plan.model);
                archive.fit_failures += 1;
                match &previous {
                    Some(p) => (carry_forward(p, values[t - 1])?, true),
                    None => {
                        archive.valid = false;
                        archive.invalid_reason = Some(format!("no model for day {t}: {e}"));
                        break;
                    }
                }
            }
        };
        let calibrations = match &window_calibration {
            Some(c) => c.clone(),
            None => calibrate(plan, t)?,
        };
        let forecasts: Vec<RiskForecast> = plan
            .measures
            .iter()
            .zip(&calibrations)
            .map(|(m, c)| forecast(m, &model, c.as_ref()))
            .collect::<Result<_>>()?;
        let realized = values[t];
        archive.days.push(DayRecord {
            t,
            date: dates[t],
            realized,
            hits: forecasts.iter().map(|f| f.is_hit(realized)).collect(),
            model: model.clone(),
            fit_failed,
            forecasts,
            calibrations,
        });
        previous = Some(model);
    }

    if archive.valid && archive.fit_failures as f64 > FIT_FAILURE_BUDGET * w.len as f64 {
        archive.valid = false;
        archive.invalid_reason = Some(format!(
            "{} of {} fits failed, above the {}% budget",
            archive.fit_failures,
            w.len,
            FIT_FAILURE_BUDGET * 100.0
        ));
    }
    if !archive.valid {
        warn!(
            "{} {} window {} invalid: {}",
            plan.asset.name(),
            plan.model,
            w.index,
            archive.invalid_reason.as_deref().unwrap_or("")
        );
        return Ok(archive);
    }

    archive.outcomes = evaluate(plan, &archive.days, seed)?;
    Ok(archive)
}

fn evaluate(plan: &BacktestPlan, days: &[DayRecord], seed: u64) -> Result<Vec<MeasureOutcome>> {
    let realized: Vec<f64> = days.iter().map(|d| d.realized).collect();
    let per_measure: Vec<Vec<RiskForecast>> = (0..plan.measures.len())
        .map(|m| days.iter().map(|d| d.forecasts[m]).collect())
        .collect();
    let counts = if plan.tests.contains(&TestId::Test3) {
        let models: Vec<PredictiveDistribution> = days.iter().map(|d| d.model.clone()).collect();
        let thresholds: Vec<Vec<f64>> = per_measure
            .iter()
            .map(|fs| fs.iter().map(|f| f.threshold_return).collect())
            .collect();
        let sets: Vec<&[f64]> = thresholds.iter().map(Vec::as_slice).collect();
        Some(simulate_violation_counts(&models, &sets, plan.m_sims, seed)?)
    } else {
        None
    };

    let mut outcomes = Vec::with_capacity(plan.measures.len());
    for (m, measure) in plan.measures.iter().enumerate() {
        let hits = HitSequence::new(&realized, &per_measure[m])?;
        let n = hits.violations();
        let t = hits.len();
        let mut reports = Vec::with_capacity(plan.tests.len());
        for test in &plan.tests {
            let report = match test {
                TestId::Test1 => test1_coverage(&hits, plan.alpha)?,
                TestId::Test2 => test2_asymptotic(&hits, plan.alpha)?,
                TestId::Test3 => {
                    let c = counts.as_ref().expect("simulated when test3 is enabled");
                    test3_from_counts(&hits, &c[m], plan.alpha)?
                }
                TestId::KupiecPof => kupiec_pof(n, t, measure.nominal_level(), plan.alpha)?,
                TestId::KupiecLambda => {
                    let peak = days
                        .iter()
                        .filter_map(|d| d.calibrations[m].as_ref())
                        .map(|c| c.function.max_value())
                        .fold(f64::NEG_INFINITY, f64::max);
                    let peak = if peak.is_finite() { peak } else { measure.nominal_level() };
                    kupiec_lambda(n, t, &LambdaFunction::constant(peak)?, plan.alpha)?
                }
            };
            reports.push(report);
        }
        outcomes.push(MeasureOutcome {
            measure: measure.label(),
            hits,
            reports,
        });
    }
    Ok(outcomes)
}

/// Asset and benchmark series drawn from one generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub assets: Vec<ReturnSeries>,
    pub benchmarks: BenchmarkPanel,
}

/// `n_assets` assets named `asset_01`.. and `n_benchmarks` benchmarks named
/// `bench_1`.., each with its own derived seed.
pub fn synthetic_panel(
    generator: Generator,
    n_assets: usize,
    n_benchmarks: usize,
    length: usize,
    seed: u64,
) -> Result<SyntheticPanel> {
    let assets = (0..n_assets)
        .map(|i| gen_synthetic(format!("asset_{:02}", i + 1), generator, length, derive_seed(seed, &[0, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let benchmarks = (0..n_benchmarks)
        .map(|i| gen_synthetic(format!("bench_{}", i + 1), generator, length, derive_seed(seed, &[1, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticPanel {
        assets,
        benchmarks: BenchmarkPanel::new(benchmarks)?,
    })
}

/// One plan per (asset, model) with the defaults of [`BacktestPlan::new`]
/// and a seed derived from `seed` and the pair's position.
pub fn protocol_plans(
    assets: &[ReturnSeries],
    benchmarks: &BenchmarkPanel,
    models: &[ModelKind],
    seed: u64,
) -> Result<Vec<BacktestPlan>> {
    let mut plans = Vec::with_capacity(assets.len() * models.len());
    for (a, asset) in assets.iter().enumerate() {
        for (k, &model) in models.iter().enumerate() {
            let mut plan = BacktestPlan::new(asset.clone(), benchmarks.clone(), model);
            plan.seed = derive_seed(seed, &[a as u64, k as u64]);
            plans.push(plan);
        }
    }
    Ok(plans)
}

/// Runs independent plans in parallel, keeping input order.
pub fn run_all(plans: &[BacktestPlan]) -> Result<Vec<RunArchive>> {
    plans.par_iter().map(run_backtest).collect()
}
