// SPDX-License-Identifier: Apache-2.0

//! The `run`, `merge` and `report` commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::command::CommandRunner;
use crate::config::{auto_generate_test_checks, discover_test_classes, load_checks, load_config, Mode, RunConfig};
use crate::engine::validate::{read_invalid_checks, INVALID_CHECKS};
use crate::engine::{
    grade_solution, select_checks, validate_checks, write_invalid_checks, EngineContext, Interrupt, ManualAnswer,
    ManualPrompter, ManualRequest, ManualStage,
};
use crate::events::{EventLog, Level, Phase};
use crate::inspector::{Console, Inspector, InspectorConfig, PROGRAM_LOGS};
use crate::model::{CheckDefinition, CheckResult, Solution, SolutionRole};
use crate::report::{build_report, missing_results, write_reports, ReportPaths};
use crate::session::{SessionHub, SessionPhase};
use crate::solutions::{
    compile_all, discover_solutions, read_flag_report, write_compile_logs, write_flag_report, SolutionError,
    FLAG_REPORT,
};
use crate::store::{load_records, merge_records, orphaned_entries, save_record, SolutionRecord, StoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERRORS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const EVENTS_LOG: &str = "events.log";

/// Inputs of `gradekit run`.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub config: PathBuf,
    pub checks: PathBuf,
    pub mode: Option<Mode>,
    /// Value of `GRADEKIT_EDITOR`, if set.
    pub editor_override: Option<String>,
}

/// Where the run talks to the grader.
#[derive(Default)]
pub struct Interaction<'a> {
    pub prompter: Option<&'a mut dyn ManualPrompter>,
    pub hub: Option<Arc<SessionHub>>,
    /// Receives `[program]` lines from launched student programs.
    pub console: Option<Console>,
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub exit_code: i32,
    pub paused: bool,
    /// Solutions the grader skipped this run.
    pub skipped: Vec<String>,
    pub compile_launches: u64,
    pub validation_launches: u64,
    /// Subprocesses started while grading student solutions.
    pub grading_launches: u64,
    pub manual_prompts: usize,
    /// `(solution_id, check_name)` of every check executed on a student.
    pub executions: Vec<(String, String)>,
    pub reports: Option<ReportPaths>,
    pub invalid_checks: Vec<String>,
    pub flagged: Vec<String>,
}

struct CountingPrompter<'a> {
    inner: &'a mut dyn ManualPrompter,
    asked: usize,
}

impl ManualPrompter for CountingPrompter<'_> {
    fn ask(&mut self, request: &ManualRequest<'_>) -> ManualAnswer {
        self.asked += 1;
        self.inner.ask(request)
    }
}

fn set_phase(hub: &Option<Arc<SessionHub>>, phase: SessionPhase) {
    if let Some(hub) = hub {
        hub.set_phase(phase);
    }
}

/// Loads the run configuration and checks, logging failures as configuration errors.
fn load_inputs(config: &Path, checks: &Path, events: &EventLog) -> Option<(RunConfig, Vec<CheckDefinition>)> {
    let cfg = match load_config(config) {
        Ok(cfg) => cfg,
        Err(e) => {
            events.error(Phase::Config, e.to_string());
            return None;
        }
    };
    let defs = match load_checks(checks) {
        Ok(defs) => defs,
        Err(e) => {
            events.error(Phase::Config, e.to_string());
            return None;
        }
    };
    Some((cfg, defs))
}

fn with_generated_checks(
    cfg: &RunConfig,
    defs: Vec<CheckDefinition>,
    events: &EventLog,
    phase: Phase,
) -> Vec<CheckDefinition> {
    let (true, Some(tests_dir)) = (cfg.auto_generate_test_checks, cfg.tests_dir.as_ref()) else {
        return defs;
    };
    match discover_test_classes(tests_dir) {
        Ok(classes) => {
            let before = defs.len();
            let defs = auto_generate_test_checks(&defs, &classes);
            if defs.len() > before {
                events.info(
                    phase,
                    format!(
                        "generated {} test-suite check(s) from {}",
                        defs.len() - before,
                        tests_dir.display()
                    ),
                );
            }
            defs
        }
        Err(e) => {
            events.error(
                phase,
                format!("cannot list test classes in {}: {e}", tests_dir.display()),
            );
            defs
        }
    }
}

/// Checks a report covers: everything the mode selects, plus other valid
/// checks already recorded for every gradable solution.
pub fn report_scope(
    defs: &[CheckDefinition],
    mode: Mode,
    records: &BTreeMap<String, SolutionRecord>,
    students: &[Solution],
) -> Vec<CheckDefinition> {
    defs.iter()
        .filter(|d| {
            mode.selects(d.kind())
                || students
                    .iter()
                    .filter(|s| !s.is_flagged())
                    .all(|s| records.get(&s.id).is_some_and(|r| r.get(&d.name).is_some()))
        })
        .cloned()
        .collect()
}

fn write_report_phase(
    records: &BTreeMap<String, SolutionRecord>,
    defs: &[CheckDefinition],
    mode: Mode,
    students: &[Solution],
    output_dir: &Path,
    events: &EventLog,
) -> Option<ReportPaths> {
    let scope = report_scope(defs, mode, records, students);
    let missing = missing_results(records, &scope, students);
    if !missing.is_empty() {
        let mut by_solution: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (s, c) in &missing {
            by_solution.entry(s).or_default().push(c);
        }
        let mut msg = format!("{} solution(s) have incomplete results:", by_solution.len());
        for (s, checks) in by_solution {
            let _ = write!(msg, "\n  {s}: missing {}", checks.join(", "));
        }
        events.error(Phase::Report, msg);
        return None;
    }
    let report = match build_report(records, &scope, students) {
        Ok(r) => r,
        Err(e) => {
            events.error(Phase::Report, e.to_string());
            return None;
        }
    };
    match write_reports(&report, records, output_dir) {
        Ok(paths) => {
            events.info(
                Phase::Report,
                format!(
                    "wrote reports for {} solution(s) to {}",
                    report.rows.len(),
                    output_dir.display()
                ),
            );
            Some(paths)
        }
        Err(e) => {
            events.error(Phase::Report, e.to_string());
            None
        }
    }
}

fn exit_code(events: &EventLog) -> i32 {
    if events.has_errors() {
        EXIT_ERRORS
    } else {
        EXIT_OK
    }
}

/// `gradekit run`: compile, validate, restore, grade, report.
pub fn cmd_run(request: &RunRequest, interaction: Interaction<'_>, events: &EventLog) -> RunSummary {
    let mut summary = RunSummary::default();
    let Interaction { prompter, hub, console } = interaction;

    // config
    set_phase(&hub, SessionPhase::Config);
    let Some((cfg, defs)) = load_inputs(&request.config, &request.checks, events) else {
        summary.exit_code = EXIT_USAGE;
        return summary;
    };
    let mut cfg = cfg.with_editor_override(request.editor_override.as_deref());
    if let Some(mode) = request.mode {
        cfg.mode = mode;
    }
    if let Err(e) = events.attach_file(&cfg.output_dir.join(EVENTS_LOG)) {
        events.error(Phase::Config, format!("cannot write {EVENTS_LOG}: {e}"));
        summary.exit_code = EXIT_USAGE;
        return summary;
    }
    events.info(
        Phase::Config,
        format!("loaded {} check(s); mode {}", defs.len(), cfg.mode),
    );

    // compile, models first
    set_phase(&hub, SessionPhase::Compile);
    let compile_runner = CommandRunner::new();
    let discovered = discover_solutions(&cfg.model_solutions_dir, SolutionRole::Model)
        .and_then(|m| discover_solutions(&cfg.solutions_dir, SolutionRole::Student).map(|s| (m, s)));
    let (mut models, mut students) = match discovered {
        Ok(found) => found,
        Err(e) => {
            events.error(Phase::Compile, e.to_string());
            summary.exit_code = EXIT_USAGE;
            return summary;
        }
    };
    let mut outcomes = match compile_all(&mut models, &cfg, &compile_runner) {
        Ok(o) => o,
        Err(e) => {
            events.error(Phase::Compile, e.to_string());
            summary.exit_code = if matches!(e, SolutionError::CommandNotFound(_)) {
                EXIT_USAGE
            } else {
                EXIT_ERRORS
            };
            return summary;
        }
    };
    let broken_models: Vec<&str> = models
        .iter()
        .filter(|m| m.is_flagged())
        .map(|m| m.id.as_str())
        .collect();
    if !broken_models.is_empty() {
        events.error(
            Phase::Compile,
            format!(
                "model solution(s) failed to compile: {}; aborting",
                broken_models.join(", ")
            ),
        );
        let _ = write_compile_logs(&outcomes, &cfg.output_dir);
        summary.compile_launches = compile_runner.launches();
        summary.exit_code = EXIT_ERRORS;
        return summary;
    }
    match compile_all(&mut students, &cfg, &compile_runner) {
        Ok(o) => outcomes.extend(o),
        Err(e) => {
            events.error(Phase::Compile, e.to_string());
            summary.exit_code = EXIT_ERRORS;
            return summary;
        }
    }
    summary.compile_launches = compile_runner.launches();
    for s in students.iter().filter(|s| s.is_flagged()) {
        events.log(
            Level::Warn,
            Phase::Compile,
            Some(&s.id),
            None,
            format!("flagged: {}", s.flag_reason().unwrap_or_default()),
        );
        summary.flagged.push(s.id.clone());
    }
    if let Err(e) =
        write_flag_report(&students, &cfg.output_dir).and_then(|_| write_compile_logs(&outcomes, &cfg.output_dir))
    {
        events.error(Phase::Compile, e.to_string());
    }
    events.info(
        Phase::Compile,
        format!(
            "compiled {} model and {} student solution(s); {} flagged",
            models.len(),
            students.len(),
            summary.flagged.len()
        ),
    );
    let defs = with_generated_checks(&cfg, defs, events, Phase::Compile);

    // validate
    set_phase(&hub, SessionPhase::Validate);
    let inspector_cfg = InspectorConfig {
        run_command: cfg.run_command.clone(),
        editor_command: cfg.editor_command.clone(),
        log_dir: cfg.output_dir.join(PROGRAM_LOGS),
        console: console.clone(),
        output_sink: hub.as_ref().map(|h| {
            let h = Arc::clone(h);
            Arc::new(move |text: &str| h.push_output(text)) as crate::inspector::OutputSink
        }),
    };
    let mut inspector = Inspector::new(inspector_cfg, events.clone());
    let mut counting = prompter.map(|p| CountingPrompter { inner: p, asked: 0 });

    let validation_runner = CommandRunner::new();
    let validate_ctx = EngineContext::new(cfg.clone(), validation_runner.clone(), events.clone(), Phase::Validate);
    inspector.set_phase(Phase::Validate);
    let validation = validate_checks(
        &defs,
        &models,
        &validate_ctx,
        counting
            .as_mut()
            .map(|p| (p as &mut dyn ManualPrompter, &mut inspector)),
    );
    summary.validation_launches = validation_runner.launches();
    summary.invalid_checks = validation.invalid_names();
    if let Err(e) = write_invalid_checks(&validation.invalid, &cfg.output_dir) {
        events.error(Phase::Validate, e.to_string());
    }
    events.info(
        Phase::Validate,
        format!(
            "{} check(s) valid, {} invalid",
            validation.valid.len(),
            summary.invalid_checks.len()
        ),
    );
    if validation.interrupted == Some(Interrupt::Pause) {
        events.info(Phase::Validate, "paused during validation; nothing recorded");
        summary.paused = true;
        summary.manual_prompts = counting.map_or(0, |c| c.asked);
        summary.exit_code = exit_code(events);
        return summary;
    }
    let valid = validation.valid;

    // restore
    set_phase(&hub, SessionPhase::Restore);
    let loaded = match load_records(&cfg.results_dir) {
        Ok(l) => l,
        Err(e) => {
            events.error(Phase::Restore, e.to_string());
            summary.exit_code = EXIT_ERRORS;
            return summary;
        }
    };
    for w in &loaded.warnings {
        events.warn(Phase::Restore, w.to_string());
    }
    for (s, c) in orphaned_entries(&loaded.records, &valid) {
        events.log(
            Level::Warn,
            Phase::Restore,
            Some(&s),
            Some(&c),
            "recorded result does not match any valid check",
        );
    }
    let restored_count: usize = loaded.records.values().map(|r| r.entries().len()).sum();
    events.info(
        Phase::Restore,
        format!(
            "restored {restored_count} result(s) for {} solution(s)",
            loaded.records.len()
        ),
    );
    let mut records = loaded.records;

    // grade
    set_phase(&hub, SessionPhase::Grade);
    inspector.set_phase(Phase::Grade);
    let grading_runner = CommandRunner::new();
    let grade_ctx = validate_ctx.for_phase(Phase::Grade, grading_runner.clone());
    let gradable: Vec<&Solution> = students.iter().filter(|s| !s.is_flagged()).collect();
    let selected = select_checks(&valid, cfg.mode);
    if let Some(hub) = &hub {
        hub.set_solutions_total(gradable.len());
        for s in &gradable {
            hub.register_solution(&s.id, s.source_dir.clone());
        }
    }
    for solution in &gradable {
        let record = Mutex::new(
            records
                .remove(&solution.id)
                .unwrap_or_else(|| SolutionRecord::new(solution.id.clone())),
        );
        let restored: Vec<CheckResult> = {
            let r = record.lock().unwrap();
            selected.iter().filter_map(|d| r.get(&d.name).cloned()).collect()
        };
        if let Some(hub) = &hub {
            hub.begin_solution(&solution.id, selected.len());
            for _ in &restored {
                hub.check_done();
            }
        }
        let on_result = |result: &CheckResult| {
            let mut r = record.lock().unwrap();
            r.upsert(result.clone());
            if let Err(e) = save_record(&r, &cfg.results_dir) {
                events.log(
                    Level::Error,
                    Phase::Grade,
                    Some(&solution.id),
                    Some(&result.check_name),
                    e.to_string(),
                );
            }
            if let Some(hub) = &hub {
                hub.check_done();
            }
        };
        let stage = counting.as_mut().map(|p| ManualStage {
            prompter: p as &mut dyn ManualPrompter,
            inspector: &mut inspector,
            on_prompt: None,
        });
        let execution = grade_solution(solution, &valid, &restored, &grade_ctx, stage, &on_result);
        records.insert(solution.id.clone(), record.into_inner().unwrap());
        match execution.interrupted {
            Some(Interrupt::Pause) => {
                events.log(
                    Level::Info,
                    Phase::Grade,
                    Some(&solution.id),
                    None,
                    "grading paused; results so far are saved and the next run resumes here",
                );
                summary.paused = true;
                break;
            }
            Some(Interrupt::SkipSolution) => {
                events.log(Level::Warn, Phase::Grade, Some(&solution.id), None, "skipped by grader");
                summary.skipped.push(solution.id.clone());
            }
            None => {}
        }
        if let Some(hub) = &hub {
            hub.solution_done();
        }
    }
    summary.grading_launches = grading_runner.launches();
    summary.manual_prompts = counting.map_or(0, |c| c.asked);
    summary.executions = grade_ctx.executions();

    if summary.paused {
        summary.exit_code = exit_code(events);
        return summary;
    }

    // report
    set_phase(&hub, SessionPhase::Report);
    if !summary.skipped.is_empty() {
        events.warn(
            Phase::Report,
            format!(
                "grading incomplete (skipped: {}); reports not written",
                summary.skipped.join(", ")
            ),
        );
    } else {
        // Reports are built from what is on disk, as `gradekit report` would.
        match load_records(&cfg.results_dir) {
            Ok(reloaded) => {
                summary.reports =
                    write_report_phase(&reloaded.records, &valid, cfg.mode, &students, &cfg.output_dir, events);
            }
            Err(e) => events.error(Phase::Report, e.to_string()),
        }
    }
    set_phase(&hub, SessionPhase::Done);
    summary.exit_code = exit_code(events);
    summary
}

/// `gradekit merge`.
pub fn cmd_merge(inputs: &[PathBuf], output: &Path, events: &EventLog) -> i32 {
    if inputs.len() < 2 {
        events.error(
            Phase::Merge,
            format!("merge needs at least two input directories, got {}", inputs.len()),
        );
        return EXIT_USAGE;
    }
    let merged = match merge_records(inputs) {
        Ok(m) => m,
        Err(e @ StoreError::MergeConflict(_)) => {
            events.error(Phase::Merge, e.to_string());
            return EXIT_ERRORS;
        }
        Err(e) => {
            events.error(Phase::Merge, e.to_string());
            return EXIT_USAGE;
        }
    };
    for w in &merged.warnings {
        events.warn(Phase::Merge, w.to_string());
    }
    if let Err(e) = fs::create_dir_all(output) {
        events.error(Phase::Merge, format!("cannot create {}: {e}", output.display()));
        return EXIT_ERRORS;
    }
    for record in merged.records.values() {
        if let Err(e) = save_record(record, output) {
            events.error(Phase::Merge, e.to_string());
        }
    }
    events.info(
        Phase::Merge,
        format!("merged {} record(s) into {}", merged.records.len(), output.display()),
    );
    exit_code(events)
}

/// `gradekit report`: regenerate the CSVs from stored records without running checks.
pub fn cmd_report(config: &Path, checks: &Path, results: &Path, output: &Path, events: &EventLog) -> i32 {
    let Some((cfg, defs)) = load_inputs(config, checks, events) else {
        return EXIT_USAGE;
    };
    let defs = with_generated_checks(&cfg, defs, events, Phase::Config);

    let invalid_path = cfg.output_dir.join(INVALID_CHECKS);
    let invalid = if invalid_path.exists() {
        match read_invalid_checks(&invalid_path) {
            Ok(names) => names,
            Err(e) => {
                events.error(Phase::Report, format!("{}: {e}", invalid_path.display()));
                return EXIT_ERRORS;
            }
        }
    } else {
        events.warn(
            Phase::Report,
            format!("{} not found; treating every check as valid", invalid_path.display()),
        );
        Vec::new()
    };
    let valid: Vec<CheckDefinition> = defs.into_iter().filter(|d| !invalid.contains(&d.name)).collect();

    let mut students = match discover_solutions(&cfg.solutions_dir, SolutionRole::Student) {
        Ok(s) => s,
        Err(e) => {
            events.error(Phase::Report, e.to_string());
            return EXIT_USAGE;
        }
    };
    let flag_path = cfg.output_dir.join(FLAG_REPORT);
    let flagged = if flag_path.exists() {
        match read_flag_report(&flag_path) {
            Ok(rows) => rows,
            Err(e) => {
                events.error(Phase::Report, format!("{}: {e}", flag_path.display()));
                return EXIT_ERRORS;
            }
        }
    } else {
        Vec::new()
    };
    for s in &mut students {
        match flagged.iter().find(|(id, _)| *id == s.id) {
            Some((_, reason)) => s.flag(reason.clone()),
            None => s.mark_compiled(),
        }
    }

    let loaded = match load_records(results) {
        Ok(l) => l,
        Err(e) => {
            events.error(Phase::Report, e.to_string());
            return EXIT_ERRORS;
        }
    };
    for w in &loaded.warnings {
        events.warn(Phase::Report, w.to_string());
    }
    write_report_phase(&loaded.records, &valid, cfg.mode, &students, output, events);
    exit_code(events)
}
