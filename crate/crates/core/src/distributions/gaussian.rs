use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_window, mean_and_sd, Predictive};
use crate::error::{Error, Result};
use crate::special::{std_normal_cdf, std_normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("gaussian parameters mu={mu}, sigma={sigma}")));
        }
        Ok(Self { mu, sigma })
    }
}

/// Sample mean and unbiased (W − 1) standard deviation.
pub fn fit_gaussian(window: &[f64]) -> Result<GaussianParams> {
    check_window(window, 2)?;
    let (mu, sigma) = mean_and_sd(window)?;
    GaussianParams::new(mu, sigma)
}

impl Predictive for GaussianParams {
    fn cdf(&self, x: f64) -> f64 {
        std_normal_cdf((x - self.mu) / self.sigma)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    fn quantile(&self, u: f64) -> f64 {
        match std_normal_quantile(u) {
            Ok(z) => self.mu + self.sigma * z,
            Err(_) if u >= 1.0 => f64::INFINITY,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mu + self.sigma * z
    }
}
