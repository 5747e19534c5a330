// SPDX-License-Identifier: Apache-2.0

//! Solution discovery, compilation and the flagged-solutions report.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::command::{CommandError, CommandRunner, Substitutions};
use crate::config::RunConfig;
use crate::model::{Solution, SolutionRole, SolutionStatus, COMPILATION_FAILED};
use crate::pool::run_bounded;

/// Captured compiler output is cut at this many bytes.
pub const MAX_CAPTURED_OUTPUT: usize = 64 * 1024;

pub const FLAG_REPORT: &str = "flagged_solutions.csv";
pub const COMPILE_LOGS: &str = "compile_logs";

#[derive(Debug, Error)]
pub enum SolutionError {
    #[error("cannot list {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no model solutions found in {0}")]
    EmptyCorpus(PathBuf),
    #[error("compile command not found: {0}")]
    CommandNotFound(String),
    #[error("compile command failed to run: {0}")]
    Command(#[source] CommandError),
    #[error("solution '{0}' is not pending compilation")]
    NotPending(String),
    #[error("failed to write report: {0}")]
    Report(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SolutionError + '_ {
    move |source| SolutionError::Io {
        path: path.to_owned(),
        source,
    }
}

/// One solution per immediate, non-hidden subdirectory, sorted by id.
pub fn discover_solutions(dir: &Path, role: SolutionRole) -> Result<Vec<Solution>, SolutionError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        let path = entry.path();
        if path.is_dir() {
            found.push(Solution::new(name, path, role));
        }
    }
    found.sort_by(|a, b| a.id.cmp(&b.id));
    if found.is_empty() && role == SolutionRole::Model {
        return Err(SolutionError::EmptyCorpus(dir.to_owned()));
    }
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileOutcome {
    pub solution_id: String,
    pub success: bool,
    pub exit_code: i32,
    pub captured_output: String,
    pub duration_millis: u64,
}

fn truncate_output(mut s: String) -> String {
    if s.len() > MAX_CAPTURED_OUTPUT {
        let mut cut = MAX_CAPTURED_OUTPUT;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

/// Runs the compile command for one pending solution and records the
/// resulting status on it. A failed compile is an outcome, not an error.
pub fn compile_solution(
    solution: &mut Solution,
    cfg: &RunConfig,
    runner: &CommandRunner,
) -> Result<CompileOutcome, SolutionError> {
    if solution.status() != SolutionStatus::Pending {
        return Err(SolutionError::NotPending(solution.id.clone()));
    }
    let argv = cfg
        .compile_command
        .render(&Substitutions::new().solution_dir(&solution.source_dir));
    let out = runner.run(&argv, &solution.source_dir, None).map_err(|e| match e {
        CommandError::NotFound(p) => SolutionError::CommandNotFound(p),
        other => SolutionError::Command(other),
    })?;
    let success = out.success();
    let exit_code = out.exit_code.unwrap_or(-1);
    let mut captured = out.stdout;
    captured.push_str(&out.stderr);
    if success {
        solution.mark_compiled();
    } else {
        solution.flag(COMPILATION_FAILED);
    }
    Ok(CompileOutcome {
        solution_id: solution.id.clone(),
        success,
        exit_code,
        captured_output: truncate_output(captured),
        duration_millis: out.duration.as_millis() as u64,
    })
}

/// Compiles every solution with at most `cfg.max_parallelism` concurrent builds.
pub fn compile_all(
    solutions: &mut [Solution],
    cfg: &RunConfig,
    runner: &CommandRunner,
) -> Result<Vec<CompileOutcome>, SolutionError> {
    run_bounded(
        solutions.iter_mut().collect(),
        cfg.max_parallelism,
        |_, s: &mut Solution| compile_solution(s, cfg, runner),
    )
    .into_iter()
    .collect()
}

/// Writes `flagged_solutions.csv` (header always present) and returns its path.
pub fn write_flag_report(solutions: &[Solution], output_dir: &Path) -> Result<PathBuf, SolutionError> {
    fs::create_dir_all(output_dir).map_err(io_err(output_dir))?;
    let path = output_dir.join(FLAG_REPORT);
    let mut flagged: Vec<&Solution> = solutions.iter().filter(|s| s.is_flagged()).collect();
    flagged.sort_by(|a, b| a.id.cmp(&b.id));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["solution_id", "flag_reason"])?;
    for s in flagged {
        w.write_record([s.id.as_str(), s.flag_reason().unwrap_or_default()])?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

/// Stores the captured compiler output of each failed compile under
/// `compile_logs/<solution_id>.log`.
pub fn write_compile_logs(outcomes: &[CompileOutcome], output_dir: &Path) -> Result<(), SolutionError> {
    let dir = output_dir.join(COMPILE_LOGS);
    for o in outcomes.iter().filter(|o| !o.success) {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(format!("{}.log", o.solution_id));
        fs::write(&path, &o.captured_output).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Reads a previously written flag report as `(solution_id, reason)` pairs.
pub fn read_flag_report(path: &Path) -> Result<Vec<(String, String)>, SolutionError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push((
            rec.get(0).unwrap_or_default().to_owned(),
            rec.get(1).unwrap_or_default().to_owned(),
        ));
    }
    Ok(rows)
}
