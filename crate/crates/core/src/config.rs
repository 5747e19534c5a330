// SPDX-License-Identifier: Apache-2.0

//! Run configuration and check-definition files.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::CommandTemplate;
use crate::model::{
    validate_bands, BandError, CheckDefinition, CheckKind, CheckParams, FeedbackBand, ManualParams,
    StaticAnalysisParams, TestSuiteParams, Weight,
};

pub const DEFAULT_TEST_TIMEOUT_SECONDS: u64 = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("duplicate check name '{0}'")]
    DuplicateCheckName(String),
    #[error("check '{name}' has unknown kind '{kind}'")]
    UnknownCheckKind { name: String, kind: String },
    #[error("check '{check}' has invalid feedback bands: {source}")]
    BandOverlap {
        check: String,
        #[source]
        source: BandError,
    },
}

/// Which check kinds a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(alias = "AUTO")]
    Auto,
    #[serde(alias = "MANUAL")]
    Manual,
    #[default]
    #[serde(alias = "ALL")]
    All,
}

impl Mode {
    pub fn selects(self, kind: CheckKind) -> bool {
        match self {
            Mode::All => true,
            Mode::Auto => kind.is_automated(),
            Mode::Manual => !kind.is_automated(),
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Mode::Auto),
            "manual" => Ok(Mode::Manual),
            "all" => Ok(Mode::All),
            other => Err(format!("unknown mode '{other}' (expected auto, manual or all)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Auto => "auto",
            Mode::Manual => "manual",
            Mode::All => "all",
        })
    }
}

/// Validated run configuration. Relative paths are resolved against the
/// directory containing the configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solutions_dir: PathBuf,
    pub model_solutions_dir: PathBuf,
    pub tests_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub results_dir: PathBuf,
    pub compile_command: CommandTemplate,
    pub run_command: Option<CommandTemplate>,
    pub editor_command: Option<CommandTemplate>,
    /// Default test-runner command for TEST_SUITE checks without an override.
    pub test_command: Option<CommandTemplate>,
    pub test_timeout_seconds: u64,
    pub max_parallelism: usize,
    pub auto_generate_test_checks: bool,
    pub include_manual_in_validation: bool,
    pub mode: Mode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    solutions_dir: PathBuf,
    model_solutions_dir: PathBuf,
    #[serde(default)]
    tests_dir: Option<PathBuf>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    results_dir: Option<PathBuf>,
    compile_command: CommandTemplate,
    #[serde(default)]
    run_command: Option<CommandTemplate>,
    #[serde(default)]
    editor_command: Option<CommandTemplate>,
    #[serde(default)]
    test_command: Option<CommandTemplate>,
    #[serde(default)]
    test_timeout_seconds: Option<u64>,
    #[serde(default)]
    max_parallelism: Option<usize>,
    #[serde(default)]
    auto_generate_test_checks: Option<bool>,
    #[serde(default)]
    include_manual_in_validation: Option<bool>,
    #[serde(default)]
    mode: Option<Mode>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_error(path: &Path, err: serde_json::Error) -> ConfigError {
    ConfigError::Parse {
        path: path.to_owned(),
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Loads and validates the run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = read(path)?;
    let raw: RawRunConfig = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            base.join(p)
        }
    };

    let solutions_dir = resolve(&raw.solutions_dir);
    let model_solutions_dir = resolve(&raw.model_solutions_dir);
    let tests_dir = raw.tests_dir.as_deref().map(resolve);
    for (key, dir) in [
        ("solutions_dir", Some(&solutions_dir)),
        ("model_solutions_dir", Some(&model_solutions_dir)),
        ("tests_dir", tests_dir.as_ref()),
    ] {
        if let Some(dir) = dir {
            if !dir.is_dir() {
                return Err(ConfigError::Validation(format!(
                    "{key} {} is not an existing directory",
                    dir.display()
                )));
            }
        }
    }
    let output_dir = raw
        .output_dir
        .as_deref()
        .map(resolve)
        .unwrap_or_else(|| base.join("output"));
    let results_dir = raw
        .results_dir
        .as_deref()
        .map(resolve)
        .unwrap_or_else(|| output_dir.join("results"));

    let test_timeout_seconds = raw.test_timeout_seconds.unwrap_or(DEFAULT_TEST_TIMEOUT_SECONDS);
    if test_timeout_seconds < 1 {
        return Err(ConfigError::Validation(
            "test_timeout_seconds must be at least 1".into(),
        ));
    }
    let max_parallelism = raw.max_parallelism.unwrap_or_else(default_parallelism);
    if max_parallelism < 1 {
        return Err(ConfigError::Validation("max_parallelism must be at least 1".into()));
    }
    for (key, cmd) in [
        ("compile_command", Some(&raw.compile_command)),
        ("run_command", raw.run_command.as_ref()),
        ("editor_command", raw.editor_command.as_ref()),
        ("test_command", raw.test_command.as_ref()),
    ] {
        if cmd.is_some_and(CommandTemplate::is_empty) {
            return Err(ConfigError::Validation(format!("{key} must not be empty")));
        }
    }

    Ok(RunConfig {
        solutions_dir,
        model_solutions_dir,
        tests_dir,
        output_dir,
        results_dir,
        compile_command: raw.compile_command,
        run_command: raw.run_command,
        editor_command: raw.editor_command,
        test_command: raw.test_command,
        test_timeout_seconds,
        max_parallelism,
        auto_generate_test_checks: raw.auto_generate_test_checks.unwrap_or(false),
        include_manual_in_validation: raw.include_manual_in_validation.unwrap_or(false),
        mode: raw.mode.unwrap_or_default(),
    })
}

impl RunConfig {
    /// Replaces the editor command with a whitespace-split override, if any.
    pub fn with_editor_override(mut self, editor: Option<&str>) -> Self {
        if let Some(e) = editor.filter(|e| !e.trim().is_empty()) {
            self.editor_command = Some(CommandTemplate::from_whitespace(e));
        }
        self
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ChecksFile {
    checks: Vec<RawCheck>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawCheck {
    name: String,
    kind: String,
    weight: f64,
    #[serde(default)]
    bands: Vec<FeedbackBand>,
    #[serde(default)]
    params: serde_json::Value,
}

/// Loads check definitions, preserving file order.
pub fn load_checks(path: &Path) -> Result<Vec<CheckDefinition>, ConfigError> {
    let text = read(path)?;
    parse_checks(&text).map_err(|e| match e {
        ChecksParseError::Json(err) => parse_error(path, err),
        ChecksParseError::Config(err) => err,
    })
}

enum ChecksParseError {
    Json(serde_json::Error),
    Config(ConfigError),
}

impl From<ConfigError> for ChecksParseError {
    fn from(e: ConfigError) -> Self {
        ChecksParseError::Config(e)
    }
}

fn parse_checks(text: &str) -> Result<Vec<CheckDefinition>, ChecksParseError> {
    let file: ChecksFile = serde_json::from_str(text).map_err(ChecksParseError::Json)?;
    let mut seen = HashSet::new();
    let mut defs = Vec::with_capacity(file.checks.len());
    for raw in file.checks {
        if raw.name.trim().is_empty() {
            return Err(ConfigError::Validation("check name must not be empty".into()).into());
        }
        if !seen.insert(raw.name.clone()) {
            return Err(ConfigError::DuplicateCheckName(raw.name).into());
        }
        let def = convert_check(raw)?;
        defs.push(def);
    }
    Ok(defs)
}

fn convert_check(raw: RawCheck) -> Result<CheckDefinition, ConfigError> {
    let name = raw.name;
    let invalid = |msg: String| ConfigError::Validation(format!("check '{name}': {msg}"));
    let weight = Weight::new(raw.weight).map_err(|e| invalid(e.to_string()))?;
    validate_bands(&raw.bands).map_err(|source| ConfigError::BandOverlap {
        check: name.clone(),
        source,
    })?;
    let params_value = if raw.params.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        raw.params
    };
    let params = match raw.kind.as_str() {
        "TEST_SUITE" => {
            let p: TestSuiteParams = serde_json::from_value(params_value).map_err(|e| invalid(e.to_string()))?;
            if p.test_class.trim().is_empty() {
                return Err(invalid("test_class must not be empty".into()));
            }
            if p.run_command.as_ref().is_some_and(CommandTemplate::is_empty) {
                return Err(invalid("run_command must not be empty".into()));
            }
            CheckParams::TestSuite(p)
        }
        "STATIC_ANALYSIS" => {
            let p: StaticAnalysisParams = serde_json::from_value(params_value).map_err(|e| invalid(e.to_string()))?;
            if p.analyzer_command.is_empty() {
                return Err(invalid("analyzer_command must not be empty".into()));
            }
            if p.rule_id.is_empty() || p.rule_id.contains(char::is_whitespace) {
                return Err(invalid("rule_id must be non-empty without spaces".into()));
            }
            if p.max_violations == 0 || p.min_violations >= p.max_violations {
                return Err(invalid(
                    "min_violations must be less than a positive max_violations".into(),
                ));
            }
            CheckParams::StaticAnalysis(p)
        }
        "MANUAL" => {
            let p: ManualParams = serde_json::from_value(params_value).map_err(|e| invalid(e.to_string()))?;
            if !(p.max_input_score.is_finite() && p.max_input_score > 0.0) {
                return Err(invalid("max_input_score must be positive".into()));
            }
            CheckParams::Manual(p)
        }
        other => {
            return Err(ConfigError::UnknownCheckKind {
                name,
                kind: other.to_owned(),
            })
        }
    };
    Ok(CheckDefinition {
        name,
        weight,
        bands: raw.bands,
        params,
    })
}

/// Serializes definitions in the check-file format.
pub fn checks_to_json(defs: &[CheckDefinition]) -> String {
    let file = ChecksFile {
        checks: defs
            .iter()
            .map(|d| RawCheck {
                name: d.name.clone(),
                kind: d.kind().to_string(),
                weight: d.weight.value(),
                bands: d.bands.clone(),
                params: match &d.params {
                    CheckParams::TestSuite(p) => serde_json::to_value(p),
                    CheckParams::StaticAnalysis(p) => serde_json::to_value(p),
                    CheckParams::Manual(p) => serde_json::to_value(p),
                }
                .expect("params serialize"),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("checks serialize");
    s.push('\n');
    s
}

/// Test-class identifiers found under `tests_dir`: file stems of every
/// non-hidden file, sorted and deduplicated.
pub fn discover_test_classes(tests_dir: &Path) -> io::Result<Vec<String>> {
    let mut classes = BTreeSet::new();
    let mut stack = vec![tests_dir.to_owned()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let name = entry.file_name();
            if name.to_string_lossy().starts_with('.') {
                continue;
            }
            let path = entry.path();
            if entry.file_type()?.is_dir() {
                stack.push(path);
            } else if let Some(stem) = path.file_stem() {
                classes.insert(stem.to_string_lossy().into_owned());
            }
        }
    }
    Ok(classes.into_iter().collect())
}

/// Appends a TEST_SUITE check for every test class that no existing
/// TEST_SUITE check references.
pub fn auto_generate_test_checks(defs: &[CheckDefinition], test_classes: &[String]) -> Vec<CheckDefinition> {
    let mut out = defs.to_vec();
    let mut referenced: HashSet<String> = defs
        .iter()
        .filter_map(|d| match &d.params {
            CheckParams::TestSuite(p) => Some(p.test_class.clone()),
            _ => None,
        })
        .collect();
    let mut names: HashSet<String> = defs.iter().map(|d| d.name.clone()).collect();
    for class in test_classes {
        if !referenced.insert(class.clone()) {
            continue;
        }
        let mut name = class.clone();
        let mut n = 1;
        while names.contains(&name) {
            name = format!("{class}.auto{}", if n == 1 { String::new() } else { n.to_string() });
            n += 1;
        }
        names.insert(name.clone());
        out.push(CheckDefinition {
            name,
            weight: Weight::new(1.0).expect("positive weight"),
            bands: vec![FeedbackBand::full_range("")],
            params: CheckParams::TestSuite(TestSuiteParams {
                test_class: class.clone(),
                run_command: None,
            }),
        });
    }
    out
}
