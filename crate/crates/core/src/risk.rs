//! VaR and ΛVaR forecasts from a predictive distribution.

use serde::{Deserialize, Serialize};

use crate::distributions::Predictive;
use crate::error::{Error, Result};
use crate::lambda::{Direction, LambdaFunction};

/// Coverage assigned to continuous models whose violation probability
/// underflows.
const CONTINUOUS_COVERAGE_FLOOR: f64 = 1e-12;
const BISECTION_TOLERANCE: f64 = 1e-10;
const SEGMENT_SCAN_STEPS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskForecast {
    /// Risk in the positive-loss convention.
    pub var_value: f64,
    /// yₜ = −var_value, the return level a violation must fall below.
    pub threshold_return: f64,
    /// λ⁰ₜ = P(X < yₜ), floored away from zero; always in (0, 1).
    pub coverage_prob: f64,
    /// P(X < yₜ) before flooring.
    pub raw_coverage: f64,
    /// Λ(yₜ) (or λ for plain VaR), which equals λ⁰ₜ for continuous models.
    pub lambda_at_threshold: f64,
    /// Set when `raw_coverage` was zero and a floor was substituted.
    pub floored: bool,
}

impl RiskForecast {
    fn at_threshold<D: Predictive + ?Sized>(dist: &D, threshold: f64, lambda_at_threshold: f64) -> Self {
        let raw = dist.cdf_left(threshold);
        let (coverage_prob, floored) = if raw > 0.0 {
            (raw, false)
        } else {
            (coverage_floor(dist), true)
        };
        Self {
            var_value: -threshold,
            threshold_return: threshold,
            coverage_prob,
            raw_coverage: raw,
            lambda_at_threshold,
            floored,
        }
    }

    /// True when `realized` is a violation of this forecast.
    pub fn is_hit(&self, realized: f64) -> bool {
        realized < self.threshold_return
    }
}

/// 1/(10·W) for a W-point empirical model.
fn coverage_floor<D: Predictive + ?Sized>(dist: &D) -> f64 {
    match dist.atoms() {
        Some(atoms) => 1.0 / (10.0 * atoms.len() as f64),
        None => CONTINUOUS_COVERAGE_FLOOR,
    }
}

/// VaR at `level`: −inf{x : P(x) > level}.
pub fn var<D: Predictive + ?Sized>(dist: &D, level: f64) -> Result<RiskForecast> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain("VaR level"));
    }
    let threshold = dist.upper_quantile(level);
    Ok(RiskForecast::at_threshold(dist, threshold, level))
}

/// ΛVaR: −inf{x : P(x) > Λ(x)}.
pub fn lambda_var<D: Predictive + ?Sized>(dist: &D, f: &LambdaFunction) -> RiskForecast {
    let threshold = solve_crossing(dist, f);
    RiskForecast::at_threshold(dist, threshold, f.eval(threshold))
}

/// inf{x : P(x) > Λ(x)}.
///
/// Discrete models are solved exactly over their support intervals;
/// continuous ones segment by segment, with bisection on sloped segments.
pub fn solve_crossing<D: Predictive + ?Sized>(dist: &D, f: &LambdaFunction) -> f64 {
    match dist.atoms() {
        Some(atoms) => discrete_crossing(dist, atoms, f),
        None => {
            let x = continuous_crossing(dist, f);
            // Λ lies between its extremes, so the crossing does too; this
            // also absorbs the bisection tolerance.
            let lo = dist.upper_quantile(f.min_value());
            let hi = dist.upper_quantile(f.max_value());
            x.clamp(lo, hi)
        }
    }
}

fn discrete_crossing<D: Predictive + ?Sized>(dist: &D, atoms: &[f64], f: &LambdaFunction) -> f64 {
    let mut k = 0;
    while k < atoms.len() {
        let s = atoms[k];
        let next = atoms[k..].iter().position(|&a| a > s).map(|p| k + p);
        // the CDF is constant at `c` on [s, next)
        let c = dist.cdf(s);
        if c > f.eval(s) {
            return s;
        }
        if f.direction() == Direction::Decreasing && !f.is_constant() {
            if let Some(x) = f.last_at_least(c) {
                let before_next = next.is_none_or(|n| x < atoms[n]);
                if x.is_finite() && before_next {
                    return x.max(s);
                }
            }
        }
        match next {
            Some(n) => k = n,
            None => break,
        }
    }
    // cdf reaches 1 at the last atom and Λ < 1, so this is unreachable
    atoms[atoms.len() - 1]
}

fn continuous_crossing<D: Predictive + ?Sized>(dist: &D, f: &LambdaFunction) -> f64 {
    let bps = f.breakpoints();
    let gap = |x: f64| dist.cdf(x) - f.eval(x);

    let first = bps[0];
    if dist.cdf(first.pi) > first.lambda {
        return dist.upper_quantile(first.lambda);
    }
    for seg in bps.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if a.lambda == b.lambda {
            if dist.cdf(b.pi) > a.lambda {
                return dist.upper_quantile(a.lambda);
            }
            continue;
        }
        let mut lo = a.pi;
        for j in 1..=SEGMENT_SCAN_STEPS {
            let x = if j == SEGMENT_SCAN_STEPS {
                b.pi
            } else {
                a.pi + (b.pi - a.pi) * j as f64 / SEGMENT_SCAN_STEPS as f64
            };
            if gap(x) > 0.0 {
                return bisect(&gap, lo, x);
            }
            lo = x;
        }
    }
    dist.upper_quantile(bps[bps.len() - 1].lambda)
}

/// Shrinks (lo, hi] with gap(lo) ≤ 0 < gap(hi); returns the right end.
fn bisect(gap: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{fit_empirical, GaussianParams};
    use crate::special::std_normal_cdf;

    fn std_normal() -> GaussianParams {
        GaussianParams::new(0.0, 1.0).unwrap()
    }

    /// Dense grid scan followed by bisection, independent of `solve_crossing`.
    fn grid_oracle(cdf: impl Fn(f64) -> f64, lambda: impl Fn(f64) -> f64, from: f64, to: f64, step: f64) -> f64 {
        let n = ((to - from) / step).ceil() as usize;
        let mut prev = from;
        for i in 1..=n {
            let x = from + i as f64 * step;
            if cdf(x) > lambda(x) {
                let (mut lo, mut hi) = (prev, x);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if cdf(mid) > lambda(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return hi;
            }
            prev = x;
        }
        panic!("no crossing in grid");
    }

    #[test]
    fn var_examples() {
        let f = var(&std_normal(), 0.01).unwrap();
        assert!((f.var_value - 2.326348).abs() < 1e-5);
        assert_eq!(f.threshold_return, -f.var_value);
        assert!((f.coverage_prob - 0.01).abs() < 1e-12);

        let e = fit_empirical(&[-0.03, -0.01, 0.00, 0.02]).unwrap();
        let f = var(&e, 0.30).unwrap();
        assert_eq!(f.var_value, 0.01);
        assert_eq!(f.coverage_prob, 0.25);

        let g = GaussianParams::new(0.003, 0.02).unwrap();
        assert!((var(&g, 0.5).unwrap().threshold_return - 0.003).abs() < 1e-15);
    }

    #[test]
    fn lambda_var_examples() {
        let constant = LambdaFunction::constant(0.01).unwrap();
        assert_eq!(lambda_var(&std_normal(), &constant), var(&std_normal(), 0.01).unwrap());

        let f = LambdaFunction::new(&[(-3.0, 0.001), (-2.0, 0.01)], Direction::Increasing).unwrap();
        let r = lambda_var(&std_normal(), &f);
        let oracle = grid_oracle(std_normal_cdf, |x| f.eval(x), -4.0, 0.0, 1e-6);
        assert!((r.threshold_return - oracle).abs() < 1e-6, "{} vs {oracle}", r.threshold_return);
        // Φ already exceeds Λ on the flat part left of -3, so the infimum is
        // Φ⁻¹(0.001) even though Φ − Λ changes sign twice more inside the segment
        assert!((r.var_value - 3.090232).abs() < 1e-6);
        assert!((r.coverage_prob - f.eval(r.threshold_return)).abs() < 1e-9);

        let e = fit_empirical(&[-0.05, -0.02, 0.01, 0.04]).unwrap();
        let r = lambda_var(&e, &LambdaFunction::constant(0.30).unwrap());
        assert_eq!(r.var_value, 0.02);
    }

    #[test]
    fn point_mass_crossing() {
        let e = fit_empirical(&[0.0, 0.0]).unwrap();
        assert_eq!(solve_crossing(&e, &LambdaFunction::constant(0.5).unwrap()), 0.0);
    }

    #[test]
    fn decreasing_crossing_against_grid() {
        let f = LambdaFunction::new(&[(-2.0, 0.01), (-1.0, 0.001)], Direction::Decreasing).unwrap();
        let x = solve_crossing(&std_normal(), &f);
        assert!((-2.33..=-1.0).contains(&x));
        let oracle = grid_oracle(std_normal_cdf, |x| f.eval(x), -2.4, -0.9, 1e-6);
        assert!((x - oracle).abs() < 1e-6);
    }

    #[test]
    fn empirical_crossing_inside_decreasing_segment() {
        // cdf is 0.5 on [-2, 2); Λ drops below 0.5 right after x = -0.6
        let e = fit_empirical(&[-2.0, 2.0]).unwrap();
        let f = LambdaFunction::new(&[(-1.0, 0.6), (1.0, 0.1)], Direction::Decreasing).unwrap();
        let x = solve_crossing(&e, &f);
        assert!((x + 0.6).abs() < 1e-12);
        let r = lambda_var(&e, &f);
        assert_eq!(r.coverage_prob, 0.5);
    }

    #[test]
    fn empty_left_tail_is_floored() {
        // the crossing sits on the smallest observation, nothing lies below it
        let e = fit_empirical(&[-0.01, 0.0, 0.01, 0.02]).unwrap();
        let r = var(&e, 0.01).unwrap();
        assert_eq!(r.threshold_return, -0.01);
        assert_eq!(r.raw_coverage, 0.0);
        assert!(r.floored);
        assert_eq!(r.coverage_prob, 1.0 / 40.0);
    }

    #[test]
    fn hit_is_strict() {
        let r = var(&std_normal(), 0.01).unwrap();
        assert!(!r.is_hit(r.threshold_return));
        assert!(r.is_hit(r.threshold_return - 1e-9));
    }

    #[test]
    fn pointwise_monotonicity_and_dominance() {
        let g = GaussianParams::new(0.0, 0.02).unwrap();
        let low = LambdaFunction::new(&[(-0.06, 0.001), (-0.04, 0.005), (-0.03, 0.008)], Direction::Increasing).unwrap();
        let high = LambdaFunction::new(&[(-0.06, 0.002), (-0.04, 0.006), (-0.03, 0.01)], Direction::Increasing).unwrap();
        let r_low = lambda_var(&g, &low);
        let r_high = lambda_var(&g, &high);
        assert!(r_low.var_value >= r_high.var_value);
        assert!(r_high.var_value >= var(&g, 0.01).unwrap().var_value);
    }

    #[test]
    fn grid_refinement_stability() {
        let g = GaussianParams::new(0.0, 1.0).unwrap();
        let f = LambdaFunction::new(&[(-3.0, 0.001), (-2.5, 0.004), (-2.0, 0.01)], Direction::Increasing).unwrap();
        let x = solve_crossing(&g, &f);
        let coarse = grid_oracle(std_normal_cdf, |x| f.eval(x), -4.0, 0.0, 1e-4);
        let fine = grid_oracle(std_normal_cdf, |x| f.eval(x), -4.0, 0.0, 1e-6);
        assert!((coarse - fine).abs() < 1e-9);
        assert!((x - fine).abs() < 1e-9);
    }
}
