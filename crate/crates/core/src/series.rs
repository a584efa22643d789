use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Daily simple returns with their calendar dates.
///
/// Dates are labels only; all window arithmetic is done in trading-day
/// counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    name: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(name: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "dates not strictly increasing at {}",
                dates[i + 1]
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
            if v <= -1.0 {
                return Err(Error::invalid(format!("return {v} at position {i} is <= -100%")));
            }
        }
        Ok(Self {
            name: name.into(),
            dates,
            values,
        })
    }

    /// Builds a series labelled with consecutive weekdays starting at `start`.
    pub fn with_business_days(name: impl Into<String>, start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        let dates = business_days(start, values.len());
        Self::new(name, dates, values)
    }

    /// Converts prices into simple returns pₜ/pₜ₋₁ − 1; the first date is dropped.
    pub fn from_prices(name: impl Into<String>, dates: Vec<NaiveDate>, prices: &[f64]) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::invalid("price and date counts differ"));
        }
        if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid(format!("price at position {i} is not positive")));
        }
        let values = prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        Self::new(name, dates.into_iter().skip(1).collect(), values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    use chrono::{Datelike, Weekday};
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}
