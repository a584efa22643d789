//! Scalar special functions used by the parametric models and the tests.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Φ(z).
pub fn std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    standard_normal().cdf(z)
}

/// Φ⁻¹(u) for u ∈ (0, 1).
pub fn std_normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain("normal quantile probability"));
    }
    let n = standard_normal();
    let mut z = n.inverse_cdf(u);
    // Newton polish; the closed-form inverse is only good to ~1e-9
    for _ in 0..2 {
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density < 1e-300 {
            break;
        }
        z -= (n.cdf(z) - u) / density;
    }
    Ok(z)
}

/// CDF of the (non-standardized) Student-t with `nu` degrees of freedom.
pub fn student_t_cdf(z: f64, nu: f64) -> Result<f64> {
    let t = student(nu)?;
    Ok(t.cdf(z))
}

pub fn student_t_quantile(u: f64, nu: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain("Student-t quantile probability"));
    }
    Ok(student(nu)?.inverse_cdf(u))
}

fn student(nu: f64) -> Result<StudentsT> {
    if !(nu > 2.0) || !nu.is_finite() {
        return Err(Error::Domain("Student-t degrees of freedom"));
    }
    StudentsT::new(0.0, 1.0, nu).map_err(|_| Error::Domain("Student-t degrees of freedom"))
}

/// CDF of χ² with one degree of freedom, via χ²₁(x) = 2Φ(√x) − 1.
pub fn chi2_1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (2.0 * std_normal_cdf(x.sqrt()) - 1.0).clamp(0.0, 1.0)
}

/// Upper tail of χ²₁, computed as 2(1 − Φ(√x)) to keep precision for large x.
pub fn chi2_1_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    (2.0 * std_normal_cdf(-x.sqrt())).clamp(0.0, 1.0)
}

/// χ²₁ quantile: (Φ⁻¹((1 + u)/2))².
pub fn chi2_1_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain("chi-square quantile probability"));
    }
    let z = std_normal_quantile(0.5 + 0.5 * u)?;
    Ok(z * z)
}

pub use statrs::function::gamma::ln_gamma;
