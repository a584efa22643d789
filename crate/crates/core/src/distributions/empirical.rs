use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_window, Predictive};
use crate::error::Result;

/// Step-function empirical CDF over the most recent W returns. No
/// interpolation between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalParams {
    sorted_window: Vec<f64>,
}

pub fn fit_empirical(window: &[f64]) -> Result<EmpiricalParams> {
    check_window(window, 2)?;
    let mut sorted_window = window.to_vec();
    sorted_window.sort_by(f64::total_cmp);
    Ok(EmpiricalParams { sorted_window })
}

impl EmpiricalParams {
    pub fn sorted_window(&self) -> &[f64] {
        &self.sorted_window
    }

    pub fn len(&self) -> usize {
        self.sorted_window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_window.is_empty()
    }

    fn fraction(&self, count: usize) -> f64 {
        count as f64 / self.sorted_window.len() as f64
    }
}

impl Predictive for EmpiricalParams {
    fn cdf(&self, x: f64) -> f64 {
        self.fraction(self.sorted_window.partition_point(|&v| v <= x))
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.fraction(self.sorted_window.partition_point(|&v| v < x))
    }

    fn quantile(&self, u: f64) -> f64 {
        let w = self.sorted_window.len();
        if !(u > 0.0) {
            return f64::NEG_INFINITY;
        }
        if u >= 1.0 {
            return self.sorted_window[w - 1];
        }
        // smallest k with k/W >= u, using the same arithmetic as cdf()
        let mut k = ((u * w as f64).ceil() as usize).clamp(1, w);
        while k > 1 && self.fraction(k - 1) >= u {
            k -= 1;
        }
        while k < w && self.fraction(k) < u {
            k += 1;
        }
        self.sorted_window[k - 1]
    }

    fn upper_quantile(&self, u: f64) -> f64 {
        let w = self.sorted_window.len();
        if u < 0.0 {
            return f64::NEG_INFINITY;
        }
        if u >= 1.0 {
            return f64::INFINITY;
        }
        // smallest k with k/W > u
        let mut k = ((u * w as f64).floor() as usize + 1).clamp(1, w);
        while k > 1 && self.fraction(k - 1) > u {
            k -= 1;
        }
        while k < w && self.fraction(k) <= u {
            k += 1;
        }
        self.sorted_window[k - 1]
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.sorted_window[rng.random_range(0..self.sorted_window.len())]
    }

    fn atoms(&self) -> Option<&[f64]> {
        Some(&self.sorted_window)
    }
}
