//! Report files: a JSON document, an aligned text table and optional CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use crate::backtests::{TestId, TestReport};
use crate::distributions::ModelKind;
use crate::engine::{AcceptanceRow, AcceptanceTable, Recalibration, RunArchive};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const JSON_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "report.txt";
pub const REPORTS_CSV_FILE: &str = "reports.csv";
pub const ACCEPTANCE_CSV_FILE: &str = "acceptance.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub asset: String,
    pub model: ModelKind,
    pub window: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub valid: bool,
    pub invalid_reason: Option<String>,
    pub fit_failures: usize,
    /// Seed of the window's Test 3 scenarios.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub alpha: f64,
    pub m_sims: usize,
    pub recalibration: Recalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub settings: RunSettings,
    pub windows: Vec<WindowSummary>,
    pub reports: Vec<TestReport>,
    pub acceptance: AcceptanceTable,
}

impl ReportDocument {
    pub fn new(table: &AcceptanceTable, archives: &[RunArchive]) -> Result<Self> {
        let first = archives.first().ok_or_else(|| Error::invalid("no archives to report"))?;
        let windows = archives
            .iter()
            .flat_map(|a| {
                a.windows.iter().map(|w| WindowSummary {
                    asset: a.asset.clone(),
                    model: a.model,
                    window: w.window.index,
                    first_date: w.first_date,
                    last_date: w.last_date,
                    valid: w.valid,
                    invalid_reason: w.invalid_reason.clone(),
                    fit_failures: w.fit_failures,
                    seed: w.seed,
                })
            })
            .collect();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            settings: RunSettings {
                alpha: first.alpha,
                m_sims: first.m_sims,
                recalibration: first.recalibration,
            },
            windows,
            reports: archives.iter().flat_map(|a| a.reports().cloned()).collect(),
            acceptance: table.clone(),
        })
    }
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDocument> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let doc: ReportDocument = serde_json::from_str(&text)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::Data {
            path: path.to_path_buf(),
            msg: format!("unsupported schema_version {}", doc.schema_version),
        });
    }
    Ok(doc)
}

/// Writes the report files into directory `out` and returns their paths.
///
/// The JSON document and the text table are always written; `Csv` adds
/// per-report and acceptance CSVs.
pub fn emit_report(
    table: &AcceptanceTable,
    archives: &[RunArchive],
    format: OutputFormat,
    out: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let doc = ReportDocument::new(table, archives)?;
    let out = out.as_ref();
    fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let json_path = out.join(JSON_FILE);
    let mut json = serde_json::to_string_pretty(&doc)?;
    json.push('\n');
    fs::write(&json_path, json)?;
    written.push(json_path);

    let table_path = out.join(TABLE_FILE);
    fs::write(&table_path, render_table(table, archives))?;
    written.push(table_path);

    if format == OutputFormat::Csv {
        let path = out.join(REPORTS_CSV_FILE);
        write_reports_csv(&path, &doc.reports)?;
        written.push(path);
        let path = out.join(ACCEPTANCE_CSV_FILE);
        write_acceptance_csv(&path, table)?;
        written.push(path);
    }
    Ok(written)
}

type RowValue = Box<dyn Fn(&AcceptanceRow) -> Option<f64>>;

/// Four significant digits; `-` for missing values.
pub fn sig4(x: Option<f64>) -> String {
    match x {
        None => "-".to_string(),
        Some(v) if !v.is_finite() => v.to_string(),
        Some(0.0) => "0".to_string(),
        Some(v) => {
            let magnitude = v.abs().log10().floor() as i32;
            if !(-4..=6).contains(&magnitude) {
                return format!("{v:.3e}");
            }
            let decimals = (3 - magnitude).max(0) as usize;
            let s = format!("{v:.decimals$}");
            // rounding may carry into a new digit, e.g. 9.9996 -> 10.000
            let digits = s.chars().filter(char::is_ascii_digit).collect::<String>();
            if digits.trim_start_matches('0').len() > 4 && decimals > 0 {
                format!("{v:.prec$}", prec = decimals - 1)
            } else {
                s
            }
        }
    }
}

/// Per model: average violations and acceptance rates, measures down,
/// windows across, with a pooled column.
pub fn render_table(table: &AcceptanceTable, archives: &[RunArchive]) -> String {
    let windows = table.windows();
    let mut columns: Vec<(String, Option<usize>)> = windows.iter().map(|w| (format!("w{}", w + 1), Some(*w))).collect();
    columns.push(("all".to_string(), None));
    let label_width = table
        .rows
        .iter()
        .map(|r| r.measure.len())
        .max()
        .unwrap_or(7)
        .max(7);
    let cell = 10;

    let mut out = String::new();
    if let Some(first) = archives.first() {
        let _ = writeln!(
            out,
            "alpha = {}, scenarios = {}, assets = {}",
            sig4(Some(first.alpha)),
            first.m_sims,
            {
                let mut names: Vec<&str> = archives.iter().map(|a| a.asset.as_str()).collect();
                names.sort_unstable();
                names.dedup();
                names.len()
            }
        );
        for w in &first.windows {
            let _ = writeln!(out, "w{}: {} .. {}", w.window.index + 1, w.first_date, w.last_date);
        }
    }

    let mut models: Vec<ModelKind> = table.rows.iter().map(|r| r.model).collect();
    models.dedup();
    for model in models {
        let rows: Vec<&AcceptanceRow> = table.rows.iter().filter(|r| r.model == model).collect();
        let mut measures: Vec<&str> = rows.iter().map(|r| r.measure.as_str()).collect();
        measures.dedup();
        let window_len = archives
            .iter()
            .find(|a| a.model == model)
            .map(|a| a.estimation_window)
            .unwrap_or(0);
        let _ = writeln!(out, "\n{model} (estimation window {window_len})");

        let mut sections: Vec<(String, RowValue)> =
            vec![("average violations".to_string(), Box::new(|r: &AcceptanceRow| r.avg_violations))];
        for test in TestId::ALL {
            if rows.iter().any(|r| r.acceptance.contains_key(&test)) {
                sections.push((
                    format!("acceptance rate, {test}"),
                    Box::new(move |r: &AcceptanceRow| r.acceptance.get(&test).copied()),
                ));
            }
        }
        for (title, value) in sections {
            let _ = write!(out, "  {title:<label_width$}");
            for (name, _) in &columns {
                let _ = write!(out, "{name:>cell$}");
            }
            out.push('\n');
            for m in &measures {
                let _ = write!(out, "  {m:<label_width$}");
                for (_, w) in &columns {
                    let v = rows.iter().find(|r| r.measure == *m && r.window == *w).and_then(|r| value(r));
                    let _ = write!(out, "{:>cell$}", sig4(v));
                }
                out.push('\n');
            }
        }
    }
    out
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_reports_csv(path: &Path, reports: &[TestReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "asset",
        "model",
        "measure",
        "window",
        "test",
        "statistic",
        "p_value",
        "alpha",
        "verdict",
        "n_violations",
        "observations",
        "critical_lower",
        "critical_upper",
    ])?;
    for r in reports {
        w.write_record([
            r.meta.asset.clone(),
            r.meta.model.map(|m| m.to_string()).unwrap_or_default(),
            r.meta.measure.clone(),
            r.meta.window.to_string(),
            r.test_id.to_string(),
            r.statistic.to_string(),
            opt(r.p_value),
            r.alpha.to_string(),
            if r.verdict.is_accept() { "accept" } else { "reject" }.to_string(),
            r.n_violations.to_string(),
            r.observations.to_string(),
            opt(r.critical_lower),
            opt(r.critical_upper),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_acceptance_csv(path: &Path, table: &AcceptanceTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "model",
        "measure",
        "direction",
        "benchmark_var_level",
        "lambda_min",
        "window",
        "valid_windows",
        "invalid_windows",
        "avg_violations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(TestId::ALL.iter().map(|t| format!("accept_{t}")));
    w.write_record(&header)?;
    for r in &table.rows {
        let mut row = vec![
            r.model.to_string(),
            r.measure.clone(),
            r.direction.map(|d| d.to_string()).unwrap_or_default(),
            opt(r.benchmark_var_level),
            opt(r.lambda_min),
            r.window.map(|w| w.to_string()).unwrap_or_else(|| "all".into()),
            r.valid_windows.to_string(),
            r.invalid_windows.to_string(),
            opt(r.avg_violations),
        ];
        row.extend(TestId::ALL.iter().map(|t| opt(r.acceptance.get(t).copied())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
