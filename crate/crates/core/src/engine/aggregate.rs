//! Acceptance rates and average violation counts across runs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Measure, RunArchive};
use crate::backtests::TestId;
use crate::distributions::ModelKind;
use crate::error::{Error, Result};
use crate::lambda::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub model: ModelKind,
    pub measure: String,
    pub direction: Option<Direction>,
    pub benchmark_var_level: Option<f64>,
    pub lambda_min: Option<f64>,
    /// Evaluation window index; `None` pools all windows.
    pub window: Option<usize>,
    pub valid_windows: usize,
    pub invalid_windows: usize,
    pub avg_violations: Option<f64>,
    /// Share of valid windows accepted, per test.
    pub acceptance: BTreeMap<TestId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceTable {
    pub rows: Vec<AcceptanceRow>,
}

impl AcceptanceTable {
    pub fn row(&self, model: ModelKind, measure: &str, window: Option<usize>) -> Option<&AcceptanceRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.measure == measure && r.window == window)
    }

    /// Window indices present in the table, ascending.
    pub fn windows(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.rows.iter().filter_map(|r| r.window).collect();
        w.sort_unstable();
        w.dedup();
        w
    }
}

#[derive(Default)]
struct Tally {
    measure: Option<Measure>,
    valid: usize,
    invalid: usize,
    violations: usize,
    accepted: BTreeMap<TestId, (usize, usize)>,
}

impl Tally {
    fn into_row(self, model: ModelKind, label: String, window: Option<usize>) -> AcceptanceRow {
        let measure = self.measure.expect("tally always records its measure");
        AcceptanceRow {
            model,
            direction: measure.direction(),
            benchmark_var_level: measure.benchmark_var_level(),
            lambda_min: measure.lambda_min(),
            measure: label,
            window,
            valid_windows: self.valid,
            invalid_windows: self.invalid,
            avg_violations: (self.valid > 0).then(|| self.violations as f64 / self.valid as f64),
            acceptance: self
                .accepted
                .into_iter()
                .map(|(test, (acc, n))| (test, acc as f64 / n as f64))
                .collect(),
        }
    }
}

/// Groups window outcomes by (model, measure, window) and adds one pooled
/// row per (model, measure). The result does not depend on archive order.
pub fn aggregate(archives: &[RunArchive]) -> Result<AcceptanceTable> {
    if archives.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let mut tallies: HashMap<(ModelKind, String, Option<usize>), Tally> = HashMap::new();
    for archive in archives {
        for w in &archive.windows {
            for (m, measure) in archive.measures.iter().enumerate() {
                let label = measure.label();
                for window in [Some(w.window.index), None] {
                    let tally = tallies.entry((archive.model, label.clone(), window)).or_default();
                    tally.measure.get_or_insert_with(|| measure.clone());
                    if !w.valid {
                        tally.invalid += 1;
                        continue;
                    }
                    let outcome = &w.outcomes[m];
                    tally.valid += 1;
                    tally.violations += outcome.hits.violations();
                    for r in &outcome.reports {
                        let e = tally.accepted.entry(r.test_id).or_default();
                        e.0 += usize::from(r.verdict.is_accept());
                        e.1 += 1;
                    }
                }
            }
        }
    }
    let mut rows: Vec<AcceptanceRow> = tallies
        .into_iter()
        .map(|((model, label, window), t)| t.into_row(model, label, window))
        .collect();
    rows.sort_by(row_order);
    Ok(AcceptanceTable { rows })
}

/// Model, then VaR before ΛVaR, increasing before decreasing, larger
/// benchmark level and λ_min first, then window with the pooled row last.
fn row_order(a: &AcceptanceRow, b: &AcceptanceRow) -> Ordering {
    let model_rank = |r: &AcceptanceRow| ModelKind::ALL.iter().position(|k| *k == r.model);
    let dir_rank = |r: &AcceptanceRow| match r.direction {
        None => 0,
        Some(Direction::Increasing) => 1,
        Some(Direction::Decreasing) => 2,
    };
    let desc = |x: Option<f64>, y: Option<f64>| y.unwrap_or(0.0).total_cmp(&x.unwrap_or(0.0));
    let window_rank = |r: &AcceptanceRow| r.window.unwrap_or(usize::MAX);
    model_rank(a)
        .cmp(&model_rank(b))
        .then(dir_rank(a).cmp(&dir_rank(b)))
        .then(desc(a.benchmark_var_level, b.benchmark_var_level))
        .then(desc(a.lambda_min, b.lambda_min))
        .then(a.measure.cmp(&b.measure))
        .then(window_rank(a).cmp(&window_rank(b)))
}
