//! Seeded return generators standing in for market data.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::ReturnSeries;

const GARCH_BURN_IN: usize = 500;

/// First date of every synthetic series (a Monday).
pub fn synthetic_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Generator {
    IidGaussian {
        sigma: f64,
    },
    GarchT {
        omega: f64,
        alpha: f64,
        beta: f64,
        nu: f64,
    },
    /// Gaussian noise whose volatility is multiplied by `factor` from day
    /// `length / 2` on.
    RegimeShift {
        sigma: f64,
        factor: f64,
    },
}

impl Generator {
    pub fn iid_gaussian(sigma: f64) -> Self {
        Generator::IidGaussian { sigma }
    }

    pub fn garch_t(omega: f64, alpha: f64, beta: f64, nu: f64) -> Self {
        Generator::GarchT { omega, alpha, beta, nu }
    }

    /// Volatility doubling at mid-sample.
    pub fn regime_shift(sigma: f64) -> Self {
        Generator::RegimeShift { sigma, factor: 2.0 }
    }

    pub fn id(&self) -> GeneratorId {
        match self {
            Generator::IidGaussian { .. } => GeneratorId::IidGaussian,
            Generator::GarchT { .. } => GeneratorId::GarchT,
            Generator::RegimeShift { .. } => GeneratorId::RegimeShift,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Generator::IidGaussian { sigma } => sigma > 0.0 && sigma.is_finite(),
            Generator::GarchT { omega, alpha, beta, nu } => {
                omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0 && nu > 2.0 && nu.is_finite()
            }
            Generator::RegimeShift { sigma, factor } => {
                sigma > 0.0 && sigma.is_finite() && factor > 0.0 && factor.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid generator parameters {self:?}")))
        }
    }
}

/// Generator name without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorId {
    IidGaussian,
    GarchT,
    RegimeShift,
}

impl GeneratorId {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorId::IidGaussian => "iid_gaussian",
            GeneratorId::GarchT => "garch_t",
            GeneratorId::RegimeShift => "regime_shift",
        }
    }

    /// The generator with the default parameters used by `synth`.
    pub fn with_defaults(self) -> Generator {
        match self {
            GeneratorId::IidGaussian => Generator::iid_gaussian(0.01),
            GeneratorId::GarchT => Generator::garch_t(1e-6, 0.08, 0.90, 6.0),
            GeneratorId::RegimeShift => Generator::regime_shift(0.01),
        }
    }
}

impl fmt::Display for GeneratorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneratorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iid_gaussian" => Ok(GeneratorId::IidGaussian),
            "garch_t" => Ok(GeneratorId::GarchT),
            "regime_shift" => Ok(GeneratorId::RegimeShift),
            other => Err(Error::invalid(format!("unknown generator `{other}`"))),
        }
    }
}

/// Draws `length` returns from `generator`, dated on consecutive weekdays.
pub fn gen_synthetic(name: impl Into<String>, generator: Generator, length: usize, seed: u64) -> Result<ReturnSeries> {
    generator.validate()?;
    if length == 0 {
        return Err(Error::invalid("synthetic series needs a positive length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = match generator {
        Generator::IidGaussian { sigma } => (0..length).map(|_| sigma * normal(&mut rng)).collect(),
        Generator::RegimeShift { sigma, factor } => {
            let shift = length / 2;
            (0..length)
                .map(|t| {
                    let scale = if t < shift { sigma } else { sigma * factor };
                    scale * normal(&mut rng)
                })
                .collect()
        }
        Generator::GarchT { omega, alpha, beta, nu } => {
            let t_dist = StudentT::new(nu).map_err(|e| Error::invalid(e.to_string()))?;
            let unit = ((nu - 2.0) / nu).sqrt();
            let mut sigma2 = omega / (1.0 - alpha - beta);
            let mut out = Vec::with_capacity(length);
            for t in 0..GARCH_BURN_IN + length {
                let x = sigma2.sqrt() * unit * t_dist.sample(&mut rng);
                if t >= GARCH_BURN_IN {
                    out.push(x);
                }
                sigma2 = omega + alpha * x * x + beta * sigma2;
            }
            out
        }
    };
    if let Some(x) = values.iter().find(|x| **x <= -1.0) {
        return Err(Error::invalid(format!("generator produced a return of {x}; reduce the volatility")));
    }
    ReturnSeries::with_business_days(name, synthetic_start_date(), values)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
