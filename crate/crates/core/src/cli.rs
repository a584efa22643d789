//! The `lvar` command line.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::info;

use crate::engine::{
    aggregate, derive_seed, protocol_plans, run_all, run_backtest, standard_measures, synthetic_panel,
    trailing_schedule, BacktestPlan, EvalWindow, Measure,
};
use crate::error::{Error, Result};
use crate::io::{
    align_on_common_dates, emit_report, parse_returns_csv, render_table, write_returns_csv, OutputFormat, RunConfig,
};
use crate::lambda::{calibrate_lambda, BenchmarkPanel, LambdaConfig};
use crate::selftest::run_selftest;
use crate::series::ReturnSeries;

/// Writes a line to stdout; a closed pipe is not an error.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lvar", version, about = "Lambda VaR forecasts and coverage backtests")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the calibrated Λ breakpoints in force on a date.
    Calibrate {
        /// Calibration date (YYYY-MM-DD)
        #[arg(long)]
        date: NaiveDate,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write daily VaR and ΛVaR forecasts for every asset and model.
    Measure {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the rolling backtest and write the reports.
    Backtest {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write synthetic asset and benchmark panels as CSV.
    Synth {
        /// iid_gaussian, garch_t or regime_shift.
        #[arg(long)]
        generator: Option<String>,
        /// Number of asset series
        #[arg(long)]
        n_assets: Option<usize>,
        /// Number of benchmark series
        #[arg(long)]
        n_benchmarks: Option<usize>,
        /// Series length in days
        #[arg(long)]
        length: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the oracle-equivalence checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Flags shared by the data-driven subcommands; they override the config
/// file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Key = value configuration file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Asset returns (or prices) CSV.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Benchmark returns (or prices) CSV.
    #[arg(long)]
    pub benchmarks: Option<PathBuf>,
    /// returns or prices.
    #[arg(long)]
    pub mode: Option<String>,
    /// historical, gaussian, garch_t, a comma list, or all.
    #[arg(long)]
    pub model: Option<String>,
    /// Significance level of every test
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Test 3 scenarios (at least 1000)
    #[arg(long)]
    pub m_sims: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lower level of Λ
    #[arg(long)]
    pub lambda_min: Option<f64>,
    /// Upper level of Λ
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// increasing, decreasing or both.
    #[arg(long)]
    pub direction: Option<String>,
    /// One level or a comma list.
    #[arg(long)]
    pub benchmark_var_level: Option<String>,
    /// Estimation window in days for every model.
    #[arg(long)]
    pub window: Option<usize>,
    /// daily or per_window.
    #[arg(long)]
    pub recalibration: Option<String>,
    /// Comma list of tests, or all.
    #[arg(long)]
    pub tests: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// json, csv or table.
    #[arg(long)]
    pub format: Option<String>,
}

impl CommonArgs {
    /// Config file (or defaults) with the flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.assets {
            cfg.assets_path = Some(p.clone());
        }
        if let Some(p) = &self.benchmarks {
            cfg.benchmarks_path = Some(p.clone());
        }
        let text_flags = [
            ("input.mode", &self.mode),
            ("model", &self.model),
            ("lambda.direction", &self.direction),
            ("lambda.benchmark_var_level", &self.benchmark_var_level),
            ("lambda.recalibration", &self.recalibration),
            ("test.set", &self.tests),
            ("output.format", &self.format),
        ];
        for (key, value) in text_flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.m_sims {
            cfg.m_sims = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.lambda_min {
            cfg.lambda.lambda_min = v;
        }
        if let Some(v) = self.lambda_max {
            cfg.lambda.lambda_max = v;
        }
        if let Some(v) = self.window {
            cfg.estimation_window = Some(v);
        }
        if let Some(p) = &self.output {
            cfg.output = p.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Calibrate { date, common } => calibrate(date, &common),
        Command::Measure { common } => measure(&common.resolve()?),
        Command::Backtest { common } => backtest(&common.resolve()?),
        Command::Synth {
            generator,
            n_assets,
            n_benchmarks,
            length,
            common,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(g) = generator {
                cfg.set("synthetic.generator", &g)?;
            }
            if let Some(n) = n_assets {
                cfg.synthetic.assets = n;
            }
            if let Some(n) = n_benchmarks {
                cfg.synthetic.benchmarks = n;
            }
            if let Some(n) = length {
                cfg.synthetic.length = n;
            }
            synth(&cfg)
        }
        Command::Selftest { seed } => Ok(selftest(seed)),
    }
}

/// Assets and benchmarks on a common date index: from CSV when paths are
/// configured, otherwise from the synthetic generator.
pub fn load_panel(cfg: &RunConfig) -> Result<(Vec<ReturnSeries>, BenchmarkPanel)> {
    match (&cfg.assets_path, &cfg.benchmarks_path) {
        (Some(a), Some(b)) => {
            let assets = parse_returns_csv(a, cfg.input_mode)?;
            let benchmarks = parse_returns_csv(b, cfg.input_mode)?;
            let (assets, benchmarks) = align_on_common_dates(&assets.series, &benchmarks.series)?;
            if assets[0].len() < 2 {
                return Err(Error::Data {
                    path: a.clone(),
                    msg: "fewer than 2 dates shared with the benchmarks".into(),
                });
            }
            Ok((assets, BenchmarkPanel::new(benchmarks)?))
        }
        _ => {
            let s = cfg.synthetic;
            let generator = s.generator.with_defaults();
            let panel = synthetic_panel(generator, s.assets, s.benchmarks, s.length, cfg.seed)?;
            Ok((panel.assets, panel.benchmarks))
        }
    }
}

fn measures(cfg: &RunConfig) -> Vec<Measure> {
    standard_measures(&cfg.lambda, &cfg.directions, &cfg.benchmark_levels)
}

/// One plan per (asset, model) following `cfg`.
pub fn build_plans(cfg: &RunConfig, assets: &[ReturnSeries], benchmarks: &BenchmarkPanel) -> Result<Vec<BacktestPlan>> {
    let n = assets.first().map(ReturnSeries::len).unwrap_or(0);
    let schedule = trailing_schedule(n, cfg.horizon, cfg.windows)?;
    let mut plans = protocol_plans(assets, benchmarks, &cfg.models, cfg.seed)?;
    for plan in &mut plans {
        plan.estimation_window = cfg.estimation_window.unwrap_or(plan.model.default_window());
        plan.schedule = schedule.clone();
        plan.measures = measures(cfg);
        plan.tests = cfg.tests.clone();
        plan.recalibration = cfg.recalibration;
        plan.alpha = cfg.alpha;
        plan.m_sims = cfg.m_sims;
    }
    Ok(plans)
}

fn backtest(cfg: &RunConfig) -> Result<i32> {
    let (assets, benchmarks) = load_panel(cfg)?;
    let plans = build_plans(cfg, &assets, &benchmarks)?;
    info!("running {} plans", plans.len());
    let archives = run_all(&plans)?;
    let table = aggregate(&archives)?;
    let written = emit_report(&table, &archives, cfg.format, &cfg.output)?;
    if cfg.format == OutputFormat::Table {
        out!("{}", render_table(&table, &archives).trim_end());
    }
    for p in written {
        out!("wrote {}", p.display());
    }
    Ok(EXIT_OK)
}

fn measure(cfg: &RunConfig) -> Result<i32> {
    let (assets, benchmarks) = load_panel(cfg)?;
    let measures = measures(cfg);
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join("measures.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["date".to_string(), "asset".into(), "model".into(), "realized".into()];
    for m in &measures {
        header.push(m.label());
        header.push(format!("{}_coverage", m.label()));
    }
    header.push("fit_failed".into());
    w.write_record(&header)?;
    for (a, asset) in assets.iter().enumerate() {
        for (k, &model) in cfg.models.iter().enumerate() {
            let mut plan = BacktestPlan::new(asset.clone(), benchmarks.clone(), model);
            plan.estimation_window = cfg.estimation_window.unwrap_or(model.default_window());
            let start = plan.estimation_window.max(cfg.lambda.window);
            if start >= asset.len() {
                return Err(Error::InsufficientData {
                    needed: start + 1,
                    got: asset.len(),
                });
            }
            plan.schedule = vec![EvalWindow {
                index: 0,
                start,
                len: asset.len() - start,
            }];
            plan.measures = measures.clone();
            plan.tests.clear();
            plan.recalibration = cfg.recalibration;
            plan.seed = derive_seed(cfg.seed, &[a as u64, k as u64]);
            let archive = run_backtest(&plan)?;
            for d in archive.windows.iter().flat_map(|w| &w.days) {
                let mut row = vec![
                    d.date.to_string(),
                    asset.name().to_string(),
                    model.to_string(),
                    d.realized.to_string(),
                ];
                for f in &d.forecasts {
                    row.push(f.var_value.to_string());
                    row.push(f.coverage_prob.to_string());
                }
                row.push(d.fit_failed.to_string());
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    out!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn calibrate(date: NaiveDate, common: &CommonArgs) -> Result<i32> {
    let cfg = common.resolve()?;
    let (_, benchmarks) = load_panel(&cfg)?;
    let dates = benchmarks.series()[0].dates();
    let t = dates.binary_search(&date).map_err(|_| Error::Data {
        path: cfg.benchmarks_path.clone().unwrap_or_default(),
        msg: format!("date {date} is not in the benchmark series"),
    })?;
    let mut results = Vec::new();
    for &direction in &cfg.directions {
        for &level in &cfg.benchmark_levels {
            let lc = LambdaConfig {
                direction,
                benchmark_var_level: level,
                ..cfg.lambda
            };
            results.push((lc, calibrate_lambda(&benchmarks, &lc, t)?));
        }
    }
    if common.format.as_deref() == Some("json") {
        let doc: Vec<_> = results
            .iter()
            .map(|(lc, c)| {
                serde_json::json!({
                    "date": date,
                    "direction": lc.direction,
                    "benchmark_var_level": lc.benchmark_var_level,
                    "breakpoints": c.function.breakpoints(),
                    "flags": c.flags,
                })
            })
            .collect();
        out!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        for (lc, c) in &results {
            out!(
                "{date} {} benchmark VaR {}%{}",
                lc.direction,
                lc.benchmark_var_level * 100.0,
                if c.flags.degenerate { " (degenerate, constant)" } else { "" }
            );
            out!("  {:>12} {:>10}", "return", "lambda");
            for b in c.function.breakpoints() {
                out!("  {:>12.6} {:>10.6}", b.pi, b.lambda);
            }
        }
    }
    Ok(EXIT_OK)
}

fn synth(cfg: &RunConfig) -> Result<i32> {
    let s = cfg.synthetic;
    let panel = synthetic_panel(s.generator.with_defaults(), s.assets, s.benchmarks, s.length, cfg.seed)?;
    fs::create_dir_all(&cfg.output)?;
    let assets = cfg.output.join("assets.csv");
    let benchmarks = cfg.output.join("benchmarks.csv");
    write_returns_csv(&assets, &panel.assets)?;
    write_returns_csv(&benchmarks, panel.benchmarks.series())?;
    out!("wrote {}", assets.display());
    out!("wrote {}", benchmarks.display());
    Ok(EXIT_OK)
}

fn selftest(seed: u64) -> i32 {
    let results = run_selftest(seed);
    for r in &results {
        out!("{} {} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    }
}
