// SPDX-License-Identifier: Apache-2.0

//! Model-solution validation: a check that scores below 1 on any model
//! solution is invalid and dropped before students are graded.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::events::Level;
use crate::inspector::Inspector;
use crate::model::{format_decimal, CheckDefinition, Solution};

use super::{execute_checks, EngineContext, Interrupt, ManualPrompter, ManualStage};

pub const INVALID_CHECKS: &str = "invalid_checks.csv";

/// Scores within this distance below 1.0 still count as passing.
pub const VALIDATION_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct InvalidCheck {
    pub check_name: String,
    pub model_solution_id: String,
    pub base_score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Validation {
    pub valid: Vec<CheckDefinition>,
    /// One entry per failing (check, model) pair.
    pub invalid: Vec<InvalidCheck>,
    pub interrupted: Option<Interrupt>,
}

impl Validation {
    pub fn invalid_names(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.invalid
            .iter()
            .filter(|i| seen.insert(i.check_name.clone()))
            .map(|i| i.check_name.clone())
            .collect()
    }
}

pub fn passes(score: f64) -> bool {
    score >= 1.0 - VALIDATION_EPSILON
}

/// Runs every automated check (and manual checks when
/// `include_manual_in_validation` is set and `manual` is given) on every model.
pub fn validate_checks(
    defs: &[CheckDefinition],
    models: &[Solution],
    ctx: &EngineContext,
    mut manual: Option<(&mut dyn ManualPrompter, &mut Inspector)>,
) -> Validation {
    let include_manual = ctx.cfg.include_manual_in_validation && manual.is_some();
    let to_run: Vec<&CheckDefinition> = defs.iter().filter(|d| d.is_automated() || include_manual).collect();
    let mut validation = Validation::default();

    for model in models {
        if model.is_flagged() {
            ctx.events.log(
                Level::Error,
                ctx.phase,
                Some(&model.id),
                None,
                "model solution is flagged; skipping validation on it",
            );
            continue;
        }
        let stage = manual.as_mut().map(|(prompter, inspector)| ManualStage {
            prompter: &mut **prompter,
            inspector,
            on_prompt: None,
        });
        let execution = execute_checks(model, &to_run, ctx, stage, &|_| {});
        for result in &execution.results {
            let score = result.base_score.value();
            if !passes(score) {
                ctx.events.log(
                    Level::Warn,
                    ctx.phase,
                    Some(&model.id),
                    Some(&result.check_name),
                    format!("check is invalid: scored {} on a model solution", format_decimal(score)),
                );
                validation.invalid.push(InvalidCheck {
                    check_name: result.check_name.clone(),
                    model_solution_id: model.id.clone(),
                    base_score: score,
                });
            }
        }
        if let Some(interrupt) = execution.interrupted {
            if interrupt == Interrupt::Pause {
                validation.interrupted = Some(interrupt);
                break;
            }
        }
    }

    let invalid: HashSet<&str> = validation.invalid.iter().map(|i| i.check_name.as_str()).collect();
    validation.valid = defs
        .iter()
        .filter(|d| !invalid.contains(d.name.as_str()))
        .cloned()
        .collect();
    validation
}

/// Writes `invalid_checks.csv`, sorted by check then model.
pub fn write_invalid_checks(invalid: &[InvalidCheck], output_dir: &Path) -> Result<PathBuf, csv::Error> {
    fs::create_dir_all(output_dir)?;
    let path = output_dir.join(INVALID_CHECKS);
    let mut rows: Vec<&InvalidCheck> = invalid.iter().collect();
    rows.sort_by(|a, b| {
        (a.check_name.as_str(), a.model_solution_id.as_str())
            .cmp(&(b.check_name.as_str(), b.model_solution_id.as_str()))
    });
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["check_name", "model_solution_id", "base_score"])?;
    for r in rows {
        w.write_record([
            r.check_name.as_str(),
            r.model_solution_id.as_str(),
            &format_decimal(r.base_score),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// Check names listed in an existing `invalid_checks.csv`.
pub fn read_invalid_checks(path: &Path) -> Result<Vec<String>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    let mut names = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if let Some(name) = rec.get(0) {
            if !names.iter().any(|n| n == name) {
                names.push(name.to_owned());
            }
        }
    }
    Ok(names)
}
