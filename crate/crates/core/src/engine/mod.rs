// SPDX-License-Identifier: Apache-2.0

//! Check execution: the three check kinds, analyzer pre-checks, model
//! validation and the per-solution scheduler.

pub mod manual;
pub mod static_analysis;
pub mod test_suite;
pub mod validate;

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use crate::command::CommandRunner;
use crate::config::{Mode, RunConfig};
use crate::events::{EventLog, Level, Phase};
use crate::inspector::Inspector;
use crate::model::{BaseScore, CheckDefinition, CheckKind, CheckResult, ScoreError, Solution};
use crate::pool::run_bounded;

pub use manual::{
    manual_result, run_manual_check, Interrupt, ManualAnswer, ManualPrompter, ManualRequest, ScriptedPrompter,
};
pub use static_analysis::{
    parse_analyzer_output, run_prechecks, run_static_analysis_check, violation_score, AnalyzerCache, AnalyzerOutput,
    Violation,
};
pub use test_suite::{parse_runner_output, run_test_suite_check, TestRunOutcome, TestSuiteRun};
pub use validate::{validate_checks, write_invalid_checks, InvalidCheck, Validation};

/// Shared state for running checks within one phase.
#[derive(Debug)]
pub struct EngineContext {
    pub cfg: RunConfig,
    pub runner: CommandRunner,
    pub events: EventLog,
    pub phase: Phase,
    test_totals: Mutex<HashMap<String, usize>>,
    executions: Mutex<Vec<(String, String)>>,
}

impl EngineContext {
    pub fn new(cfg: RunConfig, runner: CommandRunner, events: EventLog, phase: Phase) -> Self {
        EngineContext {
            cfg,
            runner,
            events,
            phase,
            test_totals: Mutex::new(HashMap::new()),
            executions: Mutex::new(Vec::new()),
        }
    }

    /// A context for another phase sharing the learned test totals.
    pub fn for_phase(&self, phase: Phase, runner: CommandRunner) -> Self {
        EngineContext {
            cfg: self.cfg.clone(),
            runner,
            events: self.events.clone(),
            phase,
            test_totals: Mutex::new(self.test_totals.lock().unwrap().clone()),
            executions: Mutex::new(Vec::new()),
        }
    }

    /// Test counts seen in complete runs, used to fail unreported tests after a timeout.
    pub fn learn_test_total(&self, test_class: &str, total: usize) {
        let mut totals = self.test_totals.lock().unwrap();
        let entry = totals.entry(test_class.to_owned()).or_insert(0);
        *entry = (*entry).max(total);
    }

    pub fn known_test_total(&self, test_class: &str) -> Option<usize> {
        self.test_totals.lock().unwrap().get(test_class).copied()
    }

    /// `(solution_id, check_name)` for every check executed in this context.
    pub fn executions(&self) -> Vec<(String, String)> {
        self.executions.lock().unwrap().clone()
    }

    fn note_execution(&self, solution: &Solution, def: &CheckDefinition) {
        self.executions
            .lock()
            .unwrap()
            .push((solution.id.clone(), def.name.clone()));
    }

    fn log(&self, level: Level, solution: &Solution, check: Option<&str>, message: String) {
        self.events.log(level, self.phase, Some(&solution.id), check, message);
    }
}

/// Band feedback, logging a warning when the score falls in a band gap.
pub(crate) fn feedback_or_warn(
    def: &CheckDefinition,
    score: BaseScore,
    solution: &Solution,
    ctx: &EngineContext,
) -> String {
    match crate::model::band_feedback(score, &def.bands) {
        Ok(text) => text.to_owned(),
        Err(ScoreError::NoBandMatches(s)) if !def.bands.is_empty() => {
            ctx.log(
                Level::Warn,
                solution,
                Some(&def.name),
                format!("no feedback band covers score {s}"),
            );
            String::new()
        }
        Err(_) => String::new(),
    }
}

pub type PromptHook<'a> = &'a mut dyn FnMut(&Solution, Option<&CheckDefinition>);

/// Manual-phase collaborators: where answers come from and the inspector
/// wrapped around them.
pub struct ManualStage<'a> {
    pub prompter: &'a mut dyn ManualPrompter,
    pub inspector: &'a mut Inspector,
    /// Called with the check about to be prompted, `None` once the stage ends.
    pub on_prompt: Option<PromptHook<'a>>,
}

#[derive(Debug, Clone, Default)]
pub struct Execution {
    /// Results in the order of the definitions passed in; interrupted manual
    /// checks are absent.
    pub results: Vec<CheckResult>,
    pub test_outcomes: Vec<TestRunOutcome>,
    pub interrupted: Option<Interrupt>,
}

fn run_automated(
    def: &CheckDefinition,
    solution: &Solution,
    cache: &AnalyzerCache,
    ctx: &EngineContext,
) -> (CheckResult, Option<TestRunOutcome>) {
    ctx.note_execution(solution, def);
    match def.kind() {
        CheckKind::TestSuite => {
            let run = run_test_suite_check(def, solution, ctx);
            (run.result, Some(run.outcome))
        }
        CheckKind::StaticAnalysis => match run_static_analysis_check(def, solution, cache, ctx) {
            Ok(run) => {
                if !run.per_file.is_empty() {
                    let counts: Vec<String> = run
                        .per_file
                        .iter()
                        .map(|(f, n)| format!("{}={n}", f.display()))
                        .collect();
                    ctx.log(
                        Level::Info,
                        solution,
                        Some(&def.name),
                        format!("{} violation(s): {}", run.violations, counts.join(", ")),
                    );
                }
                (run.result, None)
            }
            Err(e) => {
                ctx.log(Level::Warn, solution, Some(&def.name), e.to_string());
                (
                    CheckResult::new(&def.name, BaseScore::ZERO, format!("check failed: {e}"), None),
                    None,
                )
            }
        },
        CheckKind::Manual => unreachable!("manual checks are not automated"),
    }
}

/// Runs `defs` on one solution: analyzer pre-checks, then automated checks
/// on a bounded pool, then manual checks one at a time inside an inspection
/// session. `on_result` sees every result as it completes.
pub fn execute_checks(
    solution: &Solution,
    defs: &[&CheckDefinition],
    ctx: &EngineContext,
    manual: Option<ManualStage<'_>>,
    on_result: &(dyn Fn(&CheckResult) + Sync),
) -> Execution {
    let automated: Vec<(usize, &CheckDefinition)> = defs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_automated())
        .map(|(i, d)| (i, *d))
        .collect();
    let manual_defs: Vec<(usize, &CheckDefinition)> = defs
        .iter()
        .enumerate()
        .filter(|(_, d)| !d.is_automated())
        .map(|(i, d)| (i, *d))
        .collect();

    let mut slots: Vec<Option<CheckResult>> = vec![None; defs.len()];
    let mut execution = Execution::default();

    if !automated.is_empty() {
        let auto_defs: Vec<&CheckDefinition> = automated.iter().map(|(_, d)| *d).collect();
        let cache = run_prechecks(solution, &auto_defs, ctx);
        let outputs = run_bounded(automated, ctx.cfg.max_parallelism, |_, (index, def)| {
            let (result, outcome) = run_automated(def, solution, &cache, ctx);
            on_result(&result);
            ctx.log(
                Level::Info,
                solution,
                Some(&def.name),
                format!("check completed with score {}", result.base_score),
            );
            (index, result, outcome)
        });
        for (index, result, outcome) in outputs {
            slots[index] = Some(result);
            execution.test_outcomes.extend(outcome);
        }
    }

    if !manual_defs.is_empty() {
        match manual {
            None => ctx.log(
                Level::Error,
                solution,
                None,
                "manual checks pending but no grader input is available".into(),
            ),
            Some(stage) => {
                let ManualStage {
                    prompter,
                    inspector,
                    mut on_prompt,
                } = stage;
                let program_input = match inspector.open_session(solution) {
                    Ok(session) => session.program_input(),
                    Err(e) => {
                        ctx.log(Level::Warn, solution, None, e.to_string());
                        None
                    }
                };
                for (index, def) in manual_defs {
                    if let Some(cb) = on_prompt.as_mut() {
                        cb(solution, Some(def));
                    }
                    ctx.note_execution(solution, def);
                    match run_manual_check(def, solution, prompter, program_input.clone()) {
                        Ok(result) => {
                            on_result(&result);
                            ctx.log(
                                Level::Info,
                                solution,
                                Some(&def.name),
                                format!("check completed with score {}", result.base_score),
                            );
                            slots[index] = Some(result);
                        }
                        Err(interrupt) => {
                            execution.interrupted = Some(interrupt);
                            break;
                        }
                    }
                }
                if let Some(cb) = on_prompt.as_mut() {
                    cb(solution, None);
                }
                inspector.close_session();
            }
        }
    }

    execution.results = slots.into_iter().flatten().collect();
    execution
}

/// Checks `mode` selects from `defs`, in configuration order.
pub fn select_checks(defs: &[CheckDefinition], mode: Mode) -> Vec<&CheckDefinition> {
    defs.iter().filter(|d| mode.selects(d.kind())).collect()
}

/// Grades one compiled solution. Checks named in `restored` are not run
/// again; their restored results are returned in place. Results follow
/// configuration order and cover exactly the mode-selected checks unless
/// grading was interrupted.
pub fn grade_solution(
    solution: &Solution,
    defs: &[CheckDefinition],
    restored: &[CheckResult],
    ctx: &EngineContext,
    manual: Option<ManualStage<'_>>,
    on_result: &(dyn Fn(&CheckResult) + Sync),
) -> Execution {
    let selected = select_checks(defs, ctx.cfg.mode);
    let restored_names: HashSet<&str> = restored.iter().map(|r| r.check_name.as_str()).collect();
    let pending: Vec<&CheckDefinition> = selected
        .iter()
        .copied()
        .filter(|d| !restored_names.contains(d.name.as_str()))
        .collect();

    let fresh = if pending.is_empty() {
        Execution::default()
    } else {
        execute_checks(solution, &pending, ctx, manual, on_result)
    };

    let mut by_name: HashMap<&str, &CheckResult> = restored.iter().map(|r| (r.check_name.as_str(), r)).collect();
    for r in &fresh.results {
        by_name.insert(r.check_name.as_str(), r);
    }
    let results = selected
        .iter()
        .filter_map(|d| by_name.get(d.name.as_str()).map(|r| (*r).clone()))
        .collect();
    Execution {
        results,
        test_outcomes: fresh.test_outcomes,
        interrupted: fresh.interrupted,
    }
}
