//! Exact law of a sum of independent, non-identical Bernoulli variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonBinomial {
    probs: Vec<f64>,
    pmf: Vec<f64>,
}

impl PoissonBinomial {
    /// Builds the pmf by folding one Bernoulli at a time:
    /// pmf′[k] = pmf[k](1 − p) + pmf[k − 1]p.
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("Poisson-Binomial needs at least one trial"));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        let mut pmf = Vec::with_capacity(probs.len() + 1);
        pmf.push(1.0);
        for &p in probs {
            let q = 1.0 - p;
            pmf.push(0.0);
            for k in (1..pmf.len()).rev() {
                pmf[k] = pmf[k] * q + pmf[k - 1] * p;
            }
            pmf[0] *= q;
        }
        Ok(Self {
            probs: probs.to_vec(),
            pmf,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Number of trials.
    pub fn trials(&self) -> usize {
        self.probs.len()
    }

    /// P(Z ≤ k); 1 for k ≥ T.
    pub fn cdf(&self, k: usize) -> f64 {
        if k >= self.trials() {
            return 1.0;
        }
        self.pmf[..=k].iter().sum::<f64>().min(1.0)
    }

    /// P(Z ≥ k), summed from the upper tail.
    pub fn sf_inclusive(&self, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        self.pmf.get(k..).map_or(0.0, |tail| tail.iter().sum::<f64>().min(1.0))
    }

    /// min{k : cdf(k) ≥ u}.
    pub fn quantile(&self, u: f64) -> Result<usize> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain("Poisson-Binomial quantile probability"));
        }
        let mut acc = 0.0;
        for (k, p) in self.pmf.iter().enumerate() {
            acc += p;
            if acc >= u {
                return Ok(k);
            }
        }
        Ok(self.trials())
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn variance(&self) -> f64 {
        self.probs.iter().map(|p| p * (1.0 - p)).sum()
    }
}
