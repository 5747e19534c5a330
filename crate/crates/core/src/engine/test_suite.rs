// SPDX-License-Identifier: Apache-2.0

//! TEST_SUITE checks: run an external test runner and score the pass ratio.
//!
//! Runners print one line per test on stdout:
//!
//! ```text
//! TEST <name> PASS
//! TEST <name> FAIL
//! ```
//!
//! An optional `PLAN <n>` line announces how many tests the run contains, so
//! tests that never report (because the run was killed) still count as failing.

use std::time::Duration;

use crate::command::Substitutions;
use crate::events::Level;
use crate::model::{BaseScore, CheckDefinition, CheckParams, CheckResult, Solution};

use super::{feedback_or_warn, EngineContext};

pub const RUNNER_FAILED: &str = "test runner failed";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestRunOutcome {
    pub test_class: String,
    pub total: usize,
    pub passed: usize,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunnerReport {
    pub tests: Vec<(String, bool)>,
    pub plan: Option<usize>,
}

impl RunnerReport {
    pub fn passed(&self) -> usize {
        self.tests.iter().filter(|(_, ok)| *ok).count()
    }
}

/// Parses runner stdout. Lines that are not protocol lines are ignored.
pub fn parse_runner_output(stdout: &str) -> RunnerReport {
    let mut report = RunnerReport::default();
    for line in stdout.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["PLAN", n] => {
                if let Ok(n) = n.parse::<usize>() {
                    report.plan = Some(report.plan.map_or(n, |p| p.max(n)));
                }
            }
            ["TEST", name @ .., verdict] if !name.is_empty() => {
                let pass = match *verdict {
                    "PASS" => true,
                    "FAIL" => false,
                    _ => continue,
                };
                report.tests.push((name.join(" "), pass));
            }
            _ => {}
        }
    }
    report
}

/// Result of one TEST_SUITE check.
#[derive(Debug, Clone)]
pub struct TestSuiteRun {
    pub result: CheckResult,
    pub outcome: TestRunOutcome,
}

pub fn run_test_suite_check(def: &CheckDefinition, solution: &Solution, ctx: &EngineContext) -> TestSuiteRun {
    let CheckParams::TestSuite(params) = &def.params else {
        panic!("run_test_suite_check called with a {} check", def.kind());
    };
    let mut outcome = TestRunOutcome {
        test_class: params.test_class.clone(),
        total: 0,
        passed: 0,
        timed_out: false,
    };
    let failed = |outcome: TestRunOutcome, msg: &str| {
        ctx.events.log(
            Level::Warn,
            ctx.phase,
            Some(&solution.id),
            Some(&def.name),
            format!("{RUNNER_FAILED}: {msg}"),
        );
        TestSuiteRun {
            result: CheckResult::new(&def.name, BaseScore::ZERO, RUNNER_FAILED, None),
            outcome,
        }
    };

    let Some(template) = params.run_command.as_ref().or(ctx.cfg.test_command.as_ref()) else {
        return failed(outcome, "no test command configured");
    };
    let argv = template.render(
        &Substitutions::new()
            .solution_dir(&solution.source_dir)
            .test_class(&params.test_class),
    );
    let timeout = Duration::from_secs(ctx.cfg.test_timeout_seconds);
    let out = match ctx.runner.run(&argv, &solution.source_dir, Some(timeout)) {
        Ok(out) => out,
        Err(e) => return failed(outcome, &e.to_string()),
    };
    let report = parse_runner_output(&out.stdout);
    outcome.timed_out = out.timed_out;

    if report.tests.is_empty() && !out.timed_out && !out.success() {
        return failed(outcome, &format!("no test lines and exit code {:?}", out.exit_code));
    }

    if !out.timed_out && !report.tests.is_empty() {
        ctx.learn_test_total(&params.test_class, report.tests.len().max(report.plan.unwrap_or(0)));
    }
    let total = report
        .tests
        .len()
        .max(report.plan.unwrap_or(0))
        .max(ctx.known_test_total(&params.test_class).unwrap_or(0));
    outcome.total = total;
    outcome.passed = report.passed();

    if out.timed_out {
        ctx.events.log(
            Level::Warn,
            ctx.phase,
            Some(&solution.id),
            Some(&def.name),
            format!(
                "test run timed out after {}s; {} of {} tests reported",
                ctx.cfg.test_timeout_seconds,
                report.tests.len(),
                total
            ),
        );
    }
    if total == 0 {
        ctx.events.log(
            Level::Warn,
            ctx.phase,
            Some(&solution.id),
            Some(&def.name),
            format!(
                "test class '{}' ran zero tests; check the configuration",
                params.test_class
            ),
        );
        let result = CheckResult::new(&def.name, BaseScore::ZERO, "no tests were run", None);
        return TestSuiteRun { result, outcome };
    }

    let score = BaseScore::ratio(outcome.passed as f64, total as f64);
    let feedback = feedback_or_warn(def, score, solution, ctx);
    TestSuiteRun {
        result: CheckResult::new(&def.name, score, feedback, None),
        outcome,
    }
}
