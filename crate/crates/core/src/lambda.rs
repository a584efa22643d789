//! Piecewise-linear Λ functions and their daily calibration from a panel of
//! market benchmarks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::{fit_empirical, Predictive};
use crate::error::{Error, Result};
use crate::series::ReturnSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Increasing => "increasing",
            Direction::Decreasing => "decreasing",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "increasing" | "incr" | "inc" => Ok(Direction::Increasing),
            "decreasing" | "decr" | "dec" => Ok(Direction::Decreasing),
            other => Err(Error::invalid(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    /// Return level.
    pub pi: f64,
    /// Probability level.
    pub lambda: f64,
}

/// Monotone piecewise-linear map from return levels to probabilities, flat
/// beyond its first and last breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaFunction {
    breakpoints: Vec<Breakpoint>,
    direction: Direction,
}

impl LambdaFunction {
    /// Builds a Λ function from `(π, λ)` pairs in any order.
    ///
    /// Pairs sharing a return level collapse to one breakpoint keeping the
    /// larger λ when increasing and the smaller when decreasing.
    pub fn new(points: &[(f64, f64)], direction: Direction) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("Λ needs at least one breakpoint"));
        }
        for &(pi, lambda) in points {
            if !pi.is_finite() {
                return Err(Error::invalid(format!("non-finite breakpoint {pi}")));
            }
            if !(lambda > 0.0 && lambda < 1.0) {
                return Err(Error::invalid(format!("Λ level {lambda} outside (0, 1)")));
            }
        }
        let mut sorted: Vec<Breakpoint> = points.iter().map(|&(pi, lambda)| Breakpoint { pi, lambda }).collect();
        sorted.sort_by(|a, b| a.pi.total_cmp(&b.pi));

        let mut breakpoints: Vec<Breakpoint> = Vec::with_capacity(sorted.len());
        for bp in sorted {
            match breakpoints.last_mut() {
                Some(last) if last.pi == bp.pi => {
                    last.lambda = match direction {
                        Direction::Increasing => last.lambda.max(bp.lambda),
                        Direction::Decreasing => last.lambda.min(bp.lambda),
                    };
                }
                _ => breakpoints.push(bp),
            }
        }
        let monotone = breakpoints.windows(2).all(|w| match direction {
            Direction::Increasing => w[0].lambda <= w[1].lambda,
            Direction::Decreasing => w[0].lambda >= w[1].lambda,
        });
        if !monotone {
            return Err(Error::invalid(format!("Λ levels are not {direction}")));
        }
        Ok(Self { breakpoints, direction })
    }

    pub fn constant(lambda: f64) -> Result<Self> {
        Self::new(&[(0.0, lambda)], Direction::Increasing)
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn is_constant(&self) -> bool {
        let first = self.breakpoints[0].lambda;
        self.breakpoints.iter().all(|b| b.lambda == first)
    }

    /// Λ(x).
    pub fn eval(&self, x: f64) -> f64 {
        let bps = &self.breakpoints;
        let first = bps[0];
        let last = bps[bps.len() - 1];
        if x <= first.pi {
            return first.lambda;
        }
        if x >= last.pi {
            return last.lambda;
        }
        // first breakpoint strictly to the right of x
        let j = bps.partition_point(|b| b.pi <= x);
        let (a, b) = (bps[j - 1], bps[j]);
        let w = (x - a.pi) / (b.pi - a.pi);
        a.lambda + w * (b.lambda - a.lambda)
    }

    pub fn max_value(&self) -> f64 {
        self.breakpoints.iter().map(|b| b.lambda).fold(f64::MIN, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.breakpoints.iter().map(|b| b.lambda).fold(f64::MAX, f64::min)
    }

    /// For a nonincreasing Λ: sup{x : Λ(x) ≥ c}, or `None` when Λ ≥ c
    /// everywhere. Returns −∞ when Λ < c everywhere.
    pub(crate) fn last_at_least(&self, c: f64) -> Option<f64> {
        debug_assert!(self.direction == Direction::Decreasing || self.is_constant());
        let bps = &self.breakpoints;
        if bps[bps.len() - 1].lambda >= c {
            return None;
        }
        let j = match bps.iter().rposition(|b| b.lambda >= c) {
            Some(j) => j,
            None => return Some(f64::NEG_INFINITY),
        };
        let (a, b) = (bps[j], bps[j + 1]);
        let x = a.pi + (a.lambda - c) / (a.lambda - b.lambda) * (b.pi - a.pi);
        Some(x.clamp(a.pi, b.pi))
    }
}

/// How the interior probability levels λ₂, λ₃ are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equipartition {
    /// (0, λ_M] cut in four: λ₂ = λ_M/2, λ₃ = 3λ_M/4.
    Quarters,
    /// (0, λ_M] cut in three: λ₂ = λ_M/3, λ₃ = 2λ_M/3.
    Thirds,
}

impl FromStr for Equipartition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quarters" => Ok(Equipartition::Quarters),
            "thirds" => Ok(Equipartition::Thirds),
            other => Err(Error::invalid(format!("unknown equipartition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub n_points: usize,
    /// Confidence level of the benchmark VaRs that place π₂..π₄.
    pub benchmark_var_level: f64,
    pub direction: Direction,
    pub equipartition: Equipartition,
    /// Number of trailing benchmark observations used for calibration.
    pub window: usize,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        Self {
            lambda_min: 0.005,
            lambda_max: 0.01,
            n_points: 4,
            benchmark_var_level: 0.01,
            direction: Direction::Increasing,
            equipartition: Equipartition::Quarters,
            window: 250,
        }
    }
}

impl LambdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_min <= self.lambda_max && self.lambda_max < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < lambda_min <= lambda_max < 1, got {} and {}",
                self.lambda_min, self.lambda_max
            )));
        }
        if self.n_points != 4 {
            return Err(Error::invalid("only 4-point Λ functions are supported"));
        }
        if !(self.benchmark_var_level > 0.0 && self.benchmark_var_level < 1.0) {
            return Err(Error::invalid("benchmark VaR level outside (0, 1)"));
        }
        if self.window < 2 {
            return Err(Error::invalid("calibration window shorter than 2 days"));
        }
        Ok(())
    }

    /// λ₁ ≤ λ₂ ≤ λ₃ ≤ λ₄ on the probability axis.
    pub fn probability_levels(&self) -> [f64; 4] {
        let m = self.lambda_max;
        let (l2, l3) = match self.equipartition {
            Equipartition::Quarters => (0.5 * m, 0.75 * m),
            Equipartition::Thirds => (m / 3.0, 2.0 * m / 3.0),
        };
        let clamp = |l: f64| l.clamp(self.lambda_min, self.lambda_max);
        [self.lambda_min, clamp(l2), clamp(l3), self.lambda_max]
    }
}

/// Aligned return series of the market benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPanel {
    series: Vec<ReturnSeries>,
}

impl BenchmarkPanel {
    pub fn new(series: Vec<ReturnSeries>) -> Result<Self> {
        let first = series.first().ok_or_else(|| Error::invalid("benchmark panel is empty"))?;
        for s in &series[1..] {
            if s.dates() != first.dates() {
                return Err(Error::invalid(format!(
                    "benchmark `{}` is not aligned with `{}`",
                    s.name(),
                    first.name()
                )));
            }
        }
        Ok(Self { series })
    }

    pub fn series(&self) -> &[ReturnSeries] {
        &self.series
    }

    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationFlags {
    /// The window minimum was above some benchmark VaR level and the return
    /// levels had to be re-sorted.
    pub reordered: bool,
    /// All return levels coincided; Λ fell back to the constant λ_max.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub function: LambdaFunction,
    pub flags: CalibrationFlags,
}

/// Calibrates Λ for day `t` from the `cfg.window` benchmark observations
/// ending at day t − 1.
pub fn calibrate_lambda(panel: &BenchmarkPanel, cfg: &LambdaConfig, t: usize) -> Result<Calibration> {
    cfg.validate()?;
    if t < cfg.window || t > panel.len() {
        return Err(Error::InsufficientData {
            needed: cfg.window,
            got: t.min(panel.len()),
        });
    }
    let windows: Vec<&[f64]> = panel.series().iter().map(|s| &s.values()[t - cfg.window..t]).collect();
    calibrate_from_windows(&windows, cfg)
}

/// Dynamic-benchmark construction over explicit benchmark windows.
pub fn calibrate_from_windows(windows: &[&[f64]], cfg: &LambdaConfig) -> Result<Calibration> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::invalid("no benchmark windows"));
    }
    let mut worst = f64::INFINITY;
    let mut var_levels = Vec::with_capacity(windows.len());
    for w in windows {
        let dist = fit_empirical(w)?;
        worst = worst.min(dist.sorted_window()[0]);
        // return-axis image of the benchmark VaR: inf{x : F(x) > level}
        var_levels.push(dist.upper_quantile(cfg.benchmark_var_level));
    }
    let most_severe = var_levels.iter().copied().fold(f64::INFINITY, f64::min);
    let least_severe = var_levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = var_levels.iter().sum::<f64>() / var_levels.len() as f64;
    // the mean of equal values can round outside [min, max]
    let mean = mean.clamp(most_severe, least_severe);

    let mut pis = [worst, most_severe, mean, least_severe];
    let mut flags = CalibrationFlags::default();
    if pis.windows(2).any(|w| w[0] > w[1]) {
        pis.sort_by(f64::total_cmp);
        flags.reordered = true;
    }

    let levels = cfg.probability_levels();
    let points: Vec<(f64, f64)> = match cfg.direction {
        Direction::Increasing => pis.iter().copied().zip(levels).collect(),
        Direction::Decreasing => pis.iter().copied().zip(levels.into_iter().rev()).collect(),
    };
    let function = LambdaFunction::new(&points, cfg.direction)?;
    if function.breakpoints().len() == 1 {
        flags.degenerate = true;
        log::warn!("degenerate benchmark panel: all Λ return levels coincide, using constant λ_max");
        return Ok(Calibration {
            function: LambdaFunction::constant(cfg.lambda_max)?,
            flags,
        });
    }
    Ok(Calibration { function, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn example() -> LambdaFunction {
        LambdaFunction::new(&[(-3.0, 0.001), (-2.0, 0.01)], Direction::Increasing).unwrap()
    }

    #[test]
    fn eval_examples() {
        let f = example();
        assert_eq!(f.eval(-4.0), 0.001);
        assert!((f.eval(-2.5) - 0.0055).abs() < 1e-15);
        assert_eq!(f.eval(0.0), 0.01);
        assert_eq!(f.eval(-3.0), 0.001);
        assert_eq!(f.eval(-2.0), 0.01);
    }

    #[test]
    fn rejects_invalid_functions() {
        assert!(LambdaFunction::new(&[], Direction::Increasing).is_err());
        assert!(LambdaFunction::new(&[(0.0, 1.0)], Direction::Increasing).is_err());
        assert!(LambdaFunction::new(&[(0.0, 0.0)], Direction::Increasing).is_err());
        assert!(LambdaFunction::new(&[(-1.0, 0.02), (0.0, 0.01)], Direction::Increasing).is_err());
        assert!(LambdaFunction::new(&[(-1.0, 0.01), (0.0, 0.02)], Direction::Decreasing).is_err());
    }

    #[test]
    fn duplicate_levels_collapse() {
        let inc = LambdaFunction::new(&[(-1.0, 0.001), (0.0, 0.005), (0.0, 0.01)], Direction::Increasing).unwrap();
        assert_eq!(inc.breakpoints().len(), 2);
        assert_eq!(inc.eval(0.0), 0.01);
        let dec = LambdaFunction::new(&[(-1.0, 0.01), (0.0, 0.005), (0.0, 0.001)], Direction::Decreasing).unwrap();
        assert_eq!(dec.breakpoints().len(), 2);
        assert_eq!(dec.eval(0.0), 0.001);
    }

    #[test]
    fn last_at_least_on_decreasing() {
        let f = LambdaFunction::new(&[(-2.0, 0.01), (-1.0, 0.001)], Direction::Decreasing).unwrap();
        assert_eq!(f.last_at_least(0.02), Some(f64::NEG_INFINITY));
        assert_eq!(f.last_at_least(0.0005), None);
        let x = f.last_at_least(0.0055).unwrap();
        assert!((x + 1.5).abs() < 1e-12);
        assert!((f.eval(x) - 0.0055).abs() < 1e-15);
    }

    #[test]
    fn two_benchmarks_place_var_levels() {
        // 100-day windows: the 1% level picks the 2nd order statistic
        let mk = |q: f64| {
            let mut w = vec![0.0; 100];
            w[0] = -0.08;
            w[1] = q;
            w
        };
        let a = mk(-0.04);
        let b = mk(-0.02);
        let cfg = LambdaConfig {
            window: 100,
            ..Default::default()
        };
        let cal = calibrate_from_windows(&[&a, &b], &cfg).unwrap();
        let pis: Vec<f64> = cal.function.breakpoints().iter().map(|b| b.pi).collect();
        assert_eq!(pis, vec![-0.08, -0.04, -0.03, -0.02]);
        let lambdas: Vec<f64> = cal.function.breakpoints().iter().map(|b| b.lambda).collect();
        assert_eq!(lambdas, vec![0.005, 0.005, 0.0075, 0.01]);
        assert!(!cal.flags.reordered && !cal.flags.degenerate);

        let dec = calibrate_from_windows(
            &[&a, &b],
            &LambdaConfig {
                direction: Direction::Decreasing,
                ..cfg
            },
        )
        .unwrap();
        let lambdas: Vec<f64> = dec.function.breakpoints().iter().map(|b| b.lambda).collect();
        assert_eq!(lambdas, vec![0.01, 0.0075, 0.005, 0.005]);
    }

    #[test]
    fn single_benchmark_collapses_to_two_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let w: Vec<f64> = (0..250).map(|_| StandardNormal.sample(&mut rng)).collect();
        let cal = calibrate_from_windows(&[&w], &LambdaConfig::default()).unwrap();
        let mut sorted = w.clone();
        sorted.sort_by(f64::total_cmp);
        // 1% of 250 is 2.5 observations: the third order statistic
        let bps = cal.function.breakpoints();
        assert_eq!(bps.len(), 2);
        assert_eq!(bps[0].pi, sorted[0]);
        assert_eq!(bps[1].pi, sorted[2]);
        assert_eq!(bps[1].lambda, 0.01);
    }

    #[test]
    fn constant_config_gives_constant_lambda() {
        let w: Vec<f64> = (0..250).map(|i| (i as f64 - 125.0) * 1e-4).collect();
        let cfg = LambdaConfig {
            lambda_min: 0.01,
            lambda_max: 0.01,
            ..Default::default()
        };
        let cal = calibrate_from_windows(&[&w], &cfg).unwrap();
        for x in [-1.0, -0.0125, -0.0124, 0.0, 1.0] {
            assert_eq!(cal.function.eval(x), 0.01);
        }
    }

    #[test]
    fn degenerate_panel_falls_back_to_lambda_max() {
        let w = vec![-0.01; 250];
        let cal = calibrate_from_windows(&[&w], &LambdaConfig::default()).unwrap();
        assert!(cal.flags.degenerate);
        assert!(cal.function.is_constant());
        assert_eq!(cal.function.eval(0.0), 0.01);
    }

    #[test]
    fn thirds_are_clamped_to_lambda_min() {
        let cfg = LambdaConfig {
            equipartition: Equipartition::Thirds,
            ..Default::default()
        };
        let levels = cfg.probability_levels();
        assert_eq!(levels[1], 0.005);
        assert!((levels[2] - 0.02 / 3.0).abs() < 1e-15);
        let old = LambdaConfig {
            lambda_min: 0.001,
            ..cfg
        };
        assert!((old.probability_levels()[1] - 0.01 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let bad = LambdaConfig {
            lambda_min: 0.02,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(LambdaConfig {
            n_points: 5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    fn random_panel(seed: u64, b: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..b)
            .map(|j| {
                (0..250)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        0.01 * (1.0 + j as f64) * z
                    })
                    .collect()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn calibrated_lambda_is_bounded_and_monotone(
            seed in 0u64..500,
            b in 1usize..5,
            decreasing in any::<bool>(),
            level_5 in any::<bool>(),
            xs in proptest::collection::vec(-0.2f64..0.2, 2..20),
        ) {
            let panel = random_panel(seed, b);
            let windows: Vec<&[f64]> = panel.iter().map(|w| w.as_slice()).collect();
            let cfg = LambdaConfig {
                direction: if decreasing { Direction::Decreasing } else { Direction::Increasing },
                benchmark_var_level: if level_5 { 0.05 } else { 0.01 },
                ..Default::default()
            };
            let cal = calibrate_from_windows(&windows, &cfg).unwrap();
            let again = calibrate_from_windows(&windows, &cfg).unwrap();
            prop_assert_eq!(&cal, &again);
            prop_assert!(!cal.flags.reordered);
            let bps = cal.function.breakpoints();
            prop_assert!(bps.windows(2).all(|w| w[0].pi < w[1].pi));
            let mut xs = xs;
            xs.sort_by(f64::total_cmp);
            let vals: Vec<f64> = xs.iter().map(|&x| cal.function.eval(x)).collect();
            for v in &vals {
                prop_assert!(*v >= cfg.lambda_min && *v <= cfg.lambda_max);
            }
            for w in vals.windows(2) {
                if decreasing {
                    prop_assert!(w[0] >= w[1]);
                } else {
                    prop_assert!(w[0] <= w[1]);
                }
            }
        }
    }
}
