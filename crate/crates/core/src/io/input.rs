//! CSV ingestion: one date column followed by one column per asset.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::ReturnSeries;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    #[default]
    Returns,
    /// Cells are price levels, converted to simple returns.
    Prices,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::Returns => "returns",
            InputMode::Prices => "prices",
        })
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "returns" => Ok(InputMode::Returns),
            "prices" => Ok(InputMode::Prices),
            other => Err(Error::Config(format!("unknown input mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub series: Vec<ReturnSeries>,
    /// Rows skipped because a cell was empty.
    pub dropped_rows: usize,
}

pub fn parse_returns_csv(path: impl AsRef<Path>, mode: InputMode) -> Result<ParsedCsv> {
    let path = path.as_ref();
    let data_err = |msg: String| Error::Data {
        path: path.to_path_buf(),
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| data_err(e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(data_err("need a date column and at least one asset column".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

    let mut dates = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut dropped = 0usize;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| data_err(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(data_err(format!(
                "line {line}: {} cells, header has {}",
                record.len(),
                headers.len()
            )));
        }
        if record.iter().any(str::is_empty) {
            dropped += 1;
            continue;
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| data_err(format!("line {line}: malformed date `{}`", &record[0])))?;
        let mut row = Vec::with_capacity(names.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| data_err(format!("line {line}, column `{}`: non-numeric cell `{cell}`", names[j])))?;
            if !v.is_finite() {
                return Err(data_err(format!("line {line}, column `{}`: non-finite value", names[j])));
            }
            row.push(v);
        }
        dates.push(date);
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    if dropped > 0 {
        warn!("{}: dropped {dropped} rows with missing cells", path.display());
    }
    if dates.len() < 2 {
        return Err(data_err(format!("need at least 2 complete rows, got {}", dates.len())));
    }
    let series = names
        .into_iter()
        .zip(columns)
        .map(|(name, values)| match mode {
            InputMode::Returns => ReturnSeries::new(name, dates.clone(), values),
            InputMode::Prices => ReturnSeries::from_prices(name, dates.clone(), &values),
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| data_err(e.to_string()))?;
    Ok(ParsedCsv {
        series,
        dropped_rows: dropped,
    })
}

/// Restricts both sets to the dates present in every series.
pub fn align_on_common_dates(
    assets: &[ReturnSeries],
    benchmarks: &[ReturnSeries],
) -> Result<(Vec<ReturnSeries>, Vec<ReturnSeries>)> {
    let all: Vec<&ReturnSeries> = assets.iter().chain(benchmarks).collect();
    let first = all.first().ok_or_else(|| Error::invalid("no series to align"))?;
    let common: Vec<NaiveDate> = first
        .dates()
        .iter()
        .copied()
        .filter(|d| all.iter().all(|s| s.dates().binary_search(d).is_ok()))
        .collect();
    let restrict = |s: &ReturnSeries| -> Result<ReturnSeries> {
        let values = common
            .iter()
            .map(|d| s.values()[s.dates().binary_search(d).expect("date is common")])
            .collect();
        ReturnSeries::new(s.name(), common.clone(), values)
    };
    Ok((
        assets.iter().map(restrict).collect::<Result<_>>()?,
        benchmarks.iter().map(restrict).collect::<Result<_>>()?,
    ))
}

/// Writes series sharing one date index as a returns CSV.
pub fn write_returns_csv(path: impl AsRef<Path>, series: &[ReturnSeries]) -> Result<()> {
    let first = series.first().ok_or_else(|| Error::invalid("no series to write"))?;
    if series.iter().any(|s| s.dates() != first.dates()) {
        return Err(Error::invalid("series written to one file must share dates"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(series.iter().map(|s| s.name().to_string()));
    w.write_record(&header)?;
    for (i, d) in first.dates().iter().enumerate() {
        let mut row = vec![d.format("%Y-%m-%d").to_string()];
        row.extend(series.iter().map(|s| s.values()[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
