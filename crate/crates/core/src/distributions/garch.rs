use rand::RngCore;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::nelder_mead::{self, Options};
use super::{check_window, mean_and_sd, Predictive};
use crate::error::{Error, Result};
use crate::special::ln_gamma;

pub const NU_MIN: f64 = 2.5;
pub const NU_MAX: f64 = 100.0;
const MIN_WINDOW: usize = 100;
// keeps alpha + beta strictly below one after rounding
const PERSISTENCE_CAP: f64 = 1.0 - 1e-6;
const ALPHA_NEGLIGIBLE: f64 = 1e-4;
// half the 95% chi-square(1) critical value: beta must earn a 5%-significant likelihood gain
const BETA_FOLD_TOLERANCE: f64 = 1.92;

/// One-step-ahead GARCH(1,1) forecast with unit-variance Student-t
/// innovations: X = √σ²ₙₑₓₜ · √((ν−2)/ν) · T_ν.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchTParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub nu: f64,
    pub sigma2_next: f64,
}

impl GarchTParams {
    pub fn new(omega: f64, alpha: f64, beta: f64, nu: f64, sigma2_next: f64) -> Result<Self> {
        let ok = omega > 0.0
            && alpha >= 0.0
            && beta >= 0.0
            && alpha + beta < 1.0
            && nu > 2.0
            && sigma2_next > 0.0
            && [omega, alpha, beta, nu, sigma2_next].iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::invalid(format!(
                "GARCH parameters violate constraints: omega={omega}, alpha={alpha}, beta={beta}, nu={nu}, sigma2_next={sigma2_next}"
            )));
        }
        Ok(Self {
            omega,
            alpha,
            beta,
            nu,
            sigma2_next,
        })
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }

    /// Scale applied to a standard t_ν draw.
    fn t_scale(&self) -> f64 {
        (self.sigma2_next * (self.nu - 2.0) / self.nu).sqrt()
    }

    fn student(&self) -> StudentsT {
        StudentsT::new(0.0, self.t_scale(), self.nu).expect("validated parameters")
    }
}

impl Predictive for GarchTParams {
    fn cdf(&self, x: f64) -> f64 {
        self.student().cdf(x)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    fn quantile(&self, u: f64) -> f64 {
        if !(u > 0.0) {
            return f64::NEG_INFINITY;
        }
        if u >= 1.0 {
            return f64::INFINITY;
        }
        self.student().inverse_cdf(u)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let t = StudentT::new(self.nu).expect("nu > 2");
        let z: f64 = t.sample(rng);
        self.t_scale() * z
    }
}

/// Conditional variances σ²₁..σ²_W for `returns`, followed by σ²_{W+1}.
pub fn garch_variance_path(returns: &[f64], omega: f64, alpha: f64, beta: f64, sigma2_0: f64) -> Vec<f64> {
    let mut path = Vec::with_capacity(returns.len() + 1);
    let mut s2 = sigma2_0;
    path.push(s2);
    for r in returns {
        s2 = omega + alpha * r * r + beta * s2;
        path.push(s2);
    }
    path
}

/// Student-t GARCH(1,1) log-likelihood of `returns`, started at
/// σ²₁ = `sigma2_0`. Returns (log-likelihood, σ²_{W+1}).
pub fn garch_log_likelihood(
    returns: &[f64],
    omega: f64,
    alpha: f64,
    beta: f64,
    nu: f64,
    sigma2_0: f64,
) -> (f64, f64) {
    let constant = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
    let half_nu1 = 0.5 * (nu + 1.0);
    let nu2 = nu - 2.0;
    let mut s2 = sigma2_0;
    let mut ll = 0.0;
    for &r in returns {
        let r2 = r * r;
        ll += -0.5 * s2.ln() - half_nu1 * (r2 / (nu2 * s2)).ln_1p();
        s2 = omega + alpha * r2 + beta * s2;
    }
    (ll + constant * returns.len() as f64, s2)
}

#[derive(Debug, Clone, Copy)]
pub struct GarchFitOptions {
    pub optimizer: Options,
    pub starts: usize,
}

impl Default for GarchFitOptions {
    fn default() -> Self {
        Self {
            optimizer: Options::default(),
            starts: 3,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct Raw {
    omega: f64,
    alpha: f64,
    beta: f64,
    nu: f64,
}

fn from_unconstrained(theta: &[f64]) -> Raw {
    let persistence = PERSISTENCE_CAP * sigmoid(theta[1]);
    let share = sigmoid(theta[2]);
    Raw {
        omega: theta[0].exp(),
        alpha: persistence * share,
        beta: persistence * (1.0 - share),
        nu: NU_MIN + (NU_MAX - NU_MIN) * sigmoid(theta[3]),
    }
}

fn to_unconstrained(omega: f64, alpha: f64, beta: f64, nu: f64) -> Vec<f64> {
    let persistence = ((alpha + beta) / PERSISTENCE_CAP).clamp(1e-6, 1.0 - 1e-9);
    let share = (alpha / (alpha + beta).max(1e-12)).clamp(1e-6, 1.0 - 1e-6);
    let nu_frac = ((nu - NU_MIN) / (NU_MAX - NU_MIN)).clamp(1e-6, 1.0 - 1e-6);
    vec![omega.ln(), logit(persistence), logit(share), logit(nu_frac)]
}

/// Maximum-likelihood GARCH(1,1)-t fit with the default multi-start schedule.
pub fn fit_garch_t(window: &[f64]) -> Result<GarchTParams> {
    fit_with(window, None, GarchFitOptions::default())
}

/// Fit started from a previous day's estimate (one start plus a polish).
pub fn fit_garch_t_warm(window: &[f64], previous: &GarchTParams) -> Result<GarchTParams> {
    fit_with(window, Some(previous), GarchFitOptions::default())
}

fn fit_with(window: &[f64], previous: Option<&GarchTParams>, opts: GarchFitOptions) -> Result<GarchTParams> {
    check_window(window, MIN_WINDOW)?;
    let (_, sd) = mean_and_sd(window)?;
    let sigma2_0 = sd * sd;

    let objective = |theta: &[f64]| {
        let p = from_unconstrained(theta);
        let (ll, _) = garch_log_likelihood(window, p.omega, p.alpha, p.beta, p.nu, sigma2_0);
        -ll
    };

    let starts: Vec<Vec<f64>> = match previous {
        Some(prev) => vec![to_unconstrained(prev.omega, prev.alpha, prev.beta, prev.nu)],
        None => [(0.05, 0.90, 8.0), (0.10, 0.80, 5.0), (0.02, 0.50, 20.0)]
            .iter()
            .take(opts.starts.max(1))
            .map(|&(a, b, nu)| to_unconstrained(sigma2_0 * (1.0 - a - b), a, b, nu))
            .collect(),
    };
    let step = [0.5, 0.5, 0.5, 0.5];

    let mut best: Option<nelder_mead::Minimum> = None;
    for x0 in &starts {
        let first = nelder_mead::minimize(objective, x0, &step, opts.optimizer);
        // a second pass from the optimum guards against simplex collapse
        let polished = nelder_mead::minimize(objective, &first.x, &[0.1; 4], opts.optimizer);
        let candidate = if polished.value <= first.value { polished } else { first };
        if best.as_ref().is_none_or(|b| candidate.value < b.value) {
            best = Some(candidate);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged || !best.value.is_finite() {
        return Err(Error::FitFailed(format!(
            "Nelder-Mead did not converge in {} iterations",
            opts.optimizer.max_iterations
        )));
    }
    let mut p = from_unconstrained(&best.x);
    // With a vanishing ARCH term, beta only shapes the decay of the start-up
    // transient and is not identified; fold it into omega when the
    // likelihood does not notice.
    if p.alpha < ALPHA_NEGLIGIBLE && p.beta > 0.0 {
        let omega = p.omega / (1.0 - p.beta);
        let (ll, _) = garch_log_likelihood(window, omega, p.alpha, 0.0, p.nu, sigma2_0);
        if -ll <= best.value + BETA_FOLD_TOLERANCE {
            p.omega = omega;
            p.beta = 0.0;
        }
    }
    let (_, sigma2_next) = garch_log_likelihood(window, p.omega, p.alpha, p.beta, p.nu, sigma2_0);
    GarchTParams::new(p.omega, p.alpha, p.beta, p.nu, sigma2_next)
        .map_err(|e| Error::FitFailed(format!("constraint violated at optimum: {e}")))
}
