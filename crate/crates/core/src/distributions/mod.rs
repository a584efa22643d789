//! Predictive return distributions: historical (empirical), Gaussian and
//! GARCH(1,1) with standardized Student-t innovations.

mod empirical;
mod garch;
mod gaussian;
pub mod nelder_mead;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use empirical::{fit_empirical, EmpiricalParams};
pub use garch::{
    fit_garch_t, fit_garch_t_warm, garch_log_likelihood, garch_variance_path, GarchFitOptions, GarchTParams,
};
pub use gaussian::{fit_gaussian, GaussianParams};

use crate::error::{Error, Result};

/// A day-ahead model of the return distribution.
pub trait Predictive {
    /// P(X ≤ x).
    fn cdf(&self, x: f64) -> f64;

    /// P(X < x).
    fn cdf_left(&self, x: f64) -> f64;

    /// inf{x : cdf(x) ≥ u}. Returns ±∞ outside (0, 1).
    fn quantile(&self, u: f64) -> f64;

    /// inf{x : cdf(x) > u}. Equal to [`quantile`](Self::quantile) when the
    /// CDF is continuous and strictly increasing.
    fn upper_quantile(&self, u: f64) -> f64 {
        self.quantile(u)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64;

    /// Sorted support points for purely discrete models.
    fn atoms(&self) -> Option<&[f64]> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Historical,
    Gaussian,
    GarchT,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Historical, ModelKind::Gaussian, ModelKind::GarchT];

    /// Default estimation window length in trading days.
    pub fn default_window(self) -> usize {
        match self {
            ModelKind::Historical | ModelKind::Gaussian => 250,
            ModelKind::GarchT => 500,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Historical => "historical",
            ModelKind::Gaussian => "gaussian",
            ModelKind::GarchT => "garch_t",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "historical" | "empirical" => Ok(ModelKind::Historical),
            "gaussian" | "normal" => Ok(ModelKind::Gaussian),
            "garch_t" | "garch" | "garch-t" => Ok(ModelKind::GarchT),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

/// A fitted predictive distribution together with the parameters needed to
/// rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PredictiveDistribution {
    Historical(EmpiricalParams),
    Gaussian(GaussianParams),
    GarchT(GarchTParams),
}

impl PredictiveDistribution {
    pub fn kind(&self) -> ModelKind {
        match self {
            PredictiveDistribution::Historical(_) => ModelKind::Historical,
            PredictiveDistribution::Gaussian(_) => ModelKind::Gaussian,
            PredictiveDistribution::GarchT(_) => ModelKind::GarchT,
        }
    }

    /// Fits `kind` on `window` (oldest first).
    pub fn fit(kind: ModelKind, window: &[f64]) -> Result<Self> {
        Ok(match kind {
            ModelKind::Historical => fit_empirical(window)?.into(),
            ModelKind::Gaussian => fit_gaussian(window)?.into(),
            ModelKind::GarchT => fit_garch_t(window)?.into(),
        })
    }

    fn inner(&self) -> &dyn Predictive {
        match self {
            PredictiveDistribution::Historical(p) => p,
            PredictiveDistribution::Gaussian(p) => p,
            PredictiveDistribution::GarchT(p) => p,
        }
    }
}

impl From<EmpiricalParams> for PredictiveDistribution {
    fn from(p: EmpiricalParams) -> Self {
        PredictiveDistribution::Historical(p)
    }
}

impl From<GaussianParams> for PredictiveDistribution {
    fn from(p: GaussianParams) -> Self {
        PredictiveDistribution::Gaussian(p)
    }
}

impl From<GarchTParams> for PredictiveDistribution {
    fn from(p: GarchTParams) -> Self {
        PredictiveDistribution::GarchT(p)
    }
}

impl Predictive for PredictiveDistribution {
    fn cdf(&self, x: f64) -> f64 {
        self.inner().cdf(x)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.inner().cdf_left(x)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.inner().quantile(u)
    }

    fn upper_quantile(&self, u: f64) -> f64 {
        self.inner().upper_quantile(u)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner().sample(rng)
    }

    fn atoms(&self) -> Option<&[f64]> {
        self.inner().atoms()
    }
}

pub(crate) fn check_window(window: &[f64], min_len: usize) -> Result<()> {
    if window.len() < min_len {
        return Err(Error::InsufficientData {
            needed: min_len,
            got: window.len(),
        });
    }
    if let Some(i) = window.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

pub(crate) fn mean_and_sd(window: &[f64]) -> Result<(f64, f64)> {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let first = window[0];
    if window.iter().all(|&v| v == first) {
        return Err(Error::ZeroVariance);
    }
    let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let scale = window.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sd > f64::EPSILON * scale) {
        return Err(Error::ZeroVariance);
    }
    Ok((mean, sd))
}
