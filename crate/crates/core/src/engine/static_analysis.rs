// SPDX-License-Identifier: Apache-2.0

//! STATIC_ANALYSIS checks and the analyzer pre-check cache.
//!
//! Analyzers print one violation per line as `<file>:<line>:<rule_id>`.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::time::Duration;

use crate::command::{CommandTemplate, Substitutions};
use crate::events::Level;
use crate::model::{BaseScore, CheckDefinition, CheckParams, CheckResult, Solution};

use super::{feedback_or_warn, EngineContext};

pub const ANALYSIS_FAILED: &str = "analysis failed";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub file: PathBuf,
    pub rule_id: String,
    pub line: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnalyzerParse {
    pub violations: Vec<Violation>,
    /// Non-blank lines that were not violations.
    pub malformed: usize,
}

pub fn parse_analyzer_line(line: &str) -> Option<Violation> {
    let line = line.trim_end_matches('\r');
    let mut parts = line.rsplitn(3, ':');
    let rule = parts.next()?;
    let number = parts.next()?;
    let file = parts.next()?;
    if rule.is_empty() || rule.contains(char::is_whitespace) || file.is_empty() {
        return None;
    }
    let line_no = number.trim().parse::<u64>().ok()?;
    Some(Violation {
        file: PathBuf::from(file),
        rule_id: rule.to_owned(),
        line: line_no,
    })
}

pub fn parse_analyzer_output(stdout: &str) -> AnalyzerParse {
    let mut parse = AnalyzerParse::default();
    for line in stdout.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_analyzer_line(line) {
            Some(v) => parse.violations.push(v),
            None => parse.malformed += 1,
        }
    }
    parse
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnalyzerOutput {
    Parsed(Vec<Violation>),
    Failed(String),
}

/// Parsed analyzer output for one solution, keyed by analyzer command.
#[derive(Debug, Clone, Default)]
pub struct AnalyzerCache {
    pub solution_id: String,
    entries: HashMap<CommandTemplate, AnalyzerOutput>,
}

impl AnalyzerCache {
    pub fn new(solution_id: impl Into<String>) -> Self {
        AnalyzerCache {
            solution_id: solution_id.into(),
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, command: CommandTemplate, output: AnalyzerOutput) {
        self.entries.insert(command, output);
    }

    pub fn get(&self, command: &CommandTemplate) -> Option<&AnalyzerOutput> {
        self.entries.get(command)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Runs each distinct analyzer command used by `defs` once on `solution`.
pub fn run_prechecks(solution: &Solution, defs: &[&CheckDefinition], ctx: &EngineContext) -> AnalyzerCache {
    let mut cache = AnalyzerCache::new(&solution.id);
    let mut commands: Vec<&CommandTemplate> = Vec::new();
    for def in defs {
        if let CheckParams::StaticAnalysis(p) = &def.params {
            if !commands.contains(&&p.analyzer_command) {
                commands.push(&p.analyzer_command);
            }
        }
    }
    for command in commands {
        let output = run_analyzer(command, solution, ctx);
        cache.insert(command.clone(), output);
    }
    cache
}

fn run_analyzer(command: &CommandTemplate, solution: &Solution, ctx: &EngineContext) -> AnalyzerOutput {
    let argv = command.render(&Substitutions::new().solution_dir(&solution.source_dir));
    let warn = |msg: String| {
        ctx.events.log(Level::Warn, ctx.phase, Some(&solution.id), None, msg);
    };
    let timeout = Duration::from_secs(ctx.cfg.test_timeout_seconds);
    let out = match ctx.runner.run(&argv, &solution.source_dir, Some(timeout)) {
        Ok(out) => out,
        Err(e) => {
            warn(format!("analyzer {:?} failed to start: {e}", command.args()));
            return AnalyzerOutput::Failed(e.to_string());
        }
    };
    let parse = parse_analyzer_output(&out.stdout);
    if parse.malformed > 0 {
        warn(format!(
            "analyzer {:?}: skipped {} malformed output line(s)",
            command.args(),
            parse.malformed
        ));
    }
    if out.timed_out {
        warn(format!("analyzer {:?} timed out", command.args()));
        return AnalyzerOutput::Failed("timed out".into());
    }
    if !out.success() && parse.violations.is_empty() {
        warn(format!(
            "analyzer {:?} exited with {:?} and produced no parseable output",
            command.args(),
            out.exit_code
        ));
        return AnalyzerOutput::Failed(format!("exit code {:?}", out.exit_code));
    }
    AnalyzerOutput::Parsed(parse.violations)
}

/// 1 at or below `min`, 0 at or above `max`, linear in between.
pub fn violation_score(violations: u64, min: u64, max: u64) -> BaseScore {
    if violations <= min {
        return BaseScore::ONE;
    }
    if violations >= max {
        return BaseScore::ZERO;
    }
    let span = (max - min) as f64;
    BaseScore::clamp(1.0 - (violations - min) as f64 / span).unwrap_or(BaseScore::ZERO)
}

#[derive(Debug, Clone)]
pub struct StaticAnalysisRun {
    pub result: CheckResult,
    pub violations: u64,
    pub per_file: BTreeMap<PathBuf, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no analyzer output cached for check '{0}'")]
pub struct CacheMiss(pub String);

pub fn run_static_analysis_check(
    def: &CheckDefinition,
    solution: &Solution,
    cache: &AnalyzerCache,
    ctx: &EngineContext,
) -> Result<StaticAnalysisRun, CacheMiss> {
    let CheckParams::StaticAnalysis(params) = &def.params else {
        panic!("run_static_analysis_check called with a {} check", def.kind());
    };
    let output = cache
        .get(&params.analyzer_command)
        .ok_or_else(|| CacheMiss(def.name.clone()))?;
    let violations = match output {
        AnalyzerOutput::Parsed(v) => v,
        AnalyzerOutput::Failed(_) => {
            return Ok(StaticAnalysisRun {
                result: CheckResult::new(&def.name, BaseScore::ZERO, ANALYSIS_FAILED, None),
                violations: 0,
                per_file: BTreeMap::new(),
            })
        }
    };
    let mut per_file: BTreeMap<PathBuf, u64> = BTreeMap::new();
    for v in violations.iter().filter(|v| v.rule_id == params.rule_id) {
        *per_file.entry(v.file.clone()).or_default() += 1;
    }
    let total: u64 = per_file.values().sum();
    let score = violation_score(total, params.min_violations, params.max_violations);
    let feedback = feedback_or_warn(def, score, solution, ctx);
    Ok(StaticAnalysisRun {
        result: CheckResult::new(&def.name, score, feedback, None),
        violations: total,
        per_file,
    })
}
