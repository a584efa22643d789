//! Files in and out: CSV returns, run configuration and reports.

mod config;
mod input;
mod report;

pub use config::{parse_directions, parse_levels, parse_models, parse_tests, OutputFormat, RunConfig, SyntheticSource};
pub use input::{align_on_common_dates, parse_returns_csv, write_returns_csv, InputMode, ParsedCsv};
pub use report::{
    emit_report, read_report, render_table, sig4, ReportDocument, RunSettings, WindowSummary, ACCEPTANCE_CSV_FILE,
    JSON_FILE, REPORTS_CSV_FILE, SCHEMA_VERSION, TABLE_FILE,
};
