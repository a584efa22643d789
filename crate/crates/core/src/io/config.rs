//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! input.assets = data/assets.csv
//! lambda.min = 0.005
//! lambda.benchmark_var_level = 0.05, 0.01
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::input::InputMode;
use crate::backtests::{TestId, MIN_SCENARIOS};
use crate::distributions::ModelKind;
use crate::engine::{GeneratorId, Recalibration, DEFAULT_HORIZON, DEFAULT_WINDOWS};
use crate::error::{Error, Result};
use crate::lambda::{Direction, Equipartition, LambdaConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Table,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
            OutputFormat::Table => "table",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "table" | "text" => Ok(OutputFormat::Table),
            other => Err(Error::Config(format!("unknown output format `{other}`"))),
        }
    }
}

/// Where returns come from when no CSV input is configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub generator: GeneratorId,
    pub assets: usize,
    pub benchmarks: usize,
    pub length: usize,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        Self {
            generator: GeneratorId::RegimeShift,
            assets: 12,
            benchmarks: 3,
            length: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub assets_path: Option<PathBuf>,
    pub benchmarks_path: Option<PathBuf>,
    pub input_mode: InputMode,
    pub synthetic: SyntheticSource,
    pub models: Vec<ModelKind>,
    /// Base Λ settings; direction and benchmark level are spread over
    /// `directions` and `benchmark_levels`.
    pub lambda: LambdaConfig,
    pub directions: Vec<Direction>,
    pub benchmark_levels: Vec<f64>,
    pub recalibration: Recalibration,
    /// Overrides the per-model default estimation window.
    pub estimation_window: Option<usize>,
    pub horizon: usize,
    pub windows: usize,
    pub tests: Vec<TestId>,
    pub alpha: f64,
    pub m_sims: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            assets_path: None,
            benchmarks_path: None,
            input_mode: InputMode::Returns,
            synthetic: SyntheticSource::default(),
            models: ModelKind::ALL.to_vec(),
            lambda: LambdaConfig::default(),
            directions: vec![Direction::Increasing, Direction::Decreasing],
            benchmark_levels: vec![0.05, 0.01],
            recalibration: Recalibration::Daily,
            estimation_window: None,
            horizon: DEFAULT_HORIZON,
            windows: DEFAULT_WINDOWS,
            tests: TestId::ALL.to_vec(),
            alpha: 0.10,
            m_sims: 10_000,
            seed: 0,
            output: PathBuf::from("lvar-report"),
            format: OutputFormat::Json,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value `{value}` for `{key}`"))
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn parse_list<T>(key: &str, value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<_>>()
        .map_err(|e| Error::Config(format!("`{key}`: {e}")))?;
    if items.is_empty() {
        return Err(bad(key, value));
    }
    Ok(items)
}

/// `all` or a comma list of model names.
pub fn parse_models(value: &str) -> Result<Vec<ModelKind>> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelKind::ALL.to_vec());
    }
    parse_list("model", value, |s| s.parse())
}

/// `both` or one direction.
pub fn parse_directions(value: &str) -> Result<Vec<Direction>> {
    if value.trim().eq_ignore_ascii_case("both") {
        return Ok(vec![Direction::Increasing, Direction::Decreasing]);
    }
    parse_list("lambda.direction", value, |s| s.parse())
}

pub fn parse_levels(value: &str) -> Result<Vec<f64>> {
    parse_list("lambda.benchmark_var_level", value, |s| parse_num("lambda.benchmark_var_level", s))
}

pub fn parse_tests(value: &str) -> Result<Vec<TestId>> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(TestId::ALL.to_vec());
    }
    parse_list("test.set", value, |s| s.parse())
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        // relative input paths are taken from the config file's directory
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.assets_path, &mut cfg.benchmarks_path].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            if !seen.insert(key.clone()) {
                return Err(Error::Config(format!("line {}: `{key}` set twice", i + 1)));
            }
            self.set(&key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input.assets" => self.assets_path = Some(PathBuf::from(value)),
            "input.benchmarks" => self.benchmarks_path = Some(PathBuf::from(value)),
            "input.mode" => self.input_mode = value.parse()?,
            "synthetic.generator" => self.synthetic.generator = value.parse().map_err(|_| bad(key, value))?,
            "synthetic.assets" => self.synthetic.assets = parse_num(key, value)?,
            "synthetic.benchmarks" => self.synthetic.benchmarks = parse_num(key, value)?,
            "synthetic.length" => self.synthetic.length = parse_num(key, value)?,
            "model" => self.models = parse_models(value)?,
            "window.estimation" => self.estimation_window = Some(parse_num(key, value)?),
            "window.horizon" => self.horizon = parse_num(key, value)?,
            "window.count" => self.windows = parse_num(key, value)?,
            "lambda.min" => self.lambda.lambda_min = parse_num(key, value)?,
            "lambda.max" => self.lambda.lambda_max = parse_num(key, value)?,
            "lambda.direction" => self.directions = parse_directions(value)?,
            "lambda.benchmark_var_level" => self.benchmark_levels = parse_levels(value)?,
            "lambda.equipartition" => {
                self.lambda.equipartition = value.parse::<Equipartition>().map_err(|_| bad(key, value))?
            }
            "lambda.window" => self.lambda.window = parse_num(key, value)?,
            "lambda.recalibration" => self.recalibration = value.parse().map_err(|_| bad(key, value))?,
            "test.set" => self.tests = parse_tests(value)?,
            "test.alpha" => self.alpha = parse_num(key, value)?,
            "test.m_sims" => self.m_sims = parse_num(key, value)?,
            "test.seed" => self.seed = parse_num(key, value)?,
            "output.path" => self.output = PathBuf::from(value),
            "output.format" => self.format = value.parse()?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.tests.contains(&TestId::Test3) && self.m_sims < MIN_SCENARIOS {
            return fail(format!("m_sims must be at least {MIN_SCENARIOS} when test3 is enabled"));
        }
        if self.models.is_empty() || self.directions.is_empty() || self.benchmark_levels.is_empty() {
            return fail("model, direction and benchmark level lists must be nonempty".into());
        }
        if self.horizon == 0 || self.windows == 0 {
            return fail("window.horizon and window.count must be positive".into());
        }
        if self.assets_path.is_some() != self.benchmarks_path.is_some() {
            return fail("input.assets and input.benchmarks must be given together".into());
        }
        for &level in &self.benchmark_levels {
            let cfg = LambdaConfig {
                benchmark_var_level: level,
                ..self.lambda
            };
            cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}
