// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines reach the console.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

use common::*;
use gradekit::command::CommandRunner;
use gradekit::config::{load_checks, load_config};
use gradekit::engine::{
    execute_checks, manual_result, run_test_suite_check, violation_score, EngineContext, ScriptedPrompter,
};
use gradekit::events::{EventLog, Level, Phase};
use gradekit::model::{
    weighted_grade, BaseScore, CheckDefinition, CheckParams, CheckResult, FeedbackBand, ManualParams, Solution,
    SolutionRole, Weight,
};
use gradekit::pipeline::{cmd_merge, cmd_report, cmd_run, Interaction, RunRequest, RunSummary};
use gradekit::store::load_records;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run(config: &Path, checks: &Path, prompter: Option<&mut ScriptedPrompter>) -> (RunSummary, EventLog) {
    let events = EventLog::new();
    let request = RunRequest {
        config: config.to_owned(),
        checks: checks.to_owned(),
        mode: None,
        editor_override: None,
    };
    let interaction = Interaction {
        prompter: prompter.map(|p| p as &mut dyn gradekit::engine::ManualPrompter),
        hub: None,
        console: None,
    };
    let summary = cmd_run(&request, interaction, &events);
    (summary, events)
}

fn errors(events: &EventLog) -> Vec<String> {
    events
        .events()
        .into_iter()
        .filter(|e| e.level == Level::Error)
        .map(|e| e.message)
        .collect()
}

/// Outputs kept for the self-consistency check.
#[derive(Default)]
struct Reports(Vec<(String, String, String)>);

impl Reports {
    fn keep(&mut self, label: &str, dir: &Path) {
        let read = |n: &str| fs::read_to_string(dir.join(n)).unwrap_or_default();
        self.0.push((label.to_owned(), read("grades.csv"), read("detail.csv")));
    }
}

fn def(name: &str, weight: f64) -> CheckDefinition {
    CheckDefinition {
        name: name.into(),
        weight: Weight::new(weight).unwrap(),
        bands: vec![FeedbackBand::full_range("")],
        params: CheckParams::Manual(ManualParams {
            prompt: "?".into(),
            max_input_score: 1.0,
            allow_text_feedback: false,
        }),
    }
}

fn grade_formula_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    let mut worst_scaled: f64 = 0.0;
    let mut instances = 0;
    while instances < 1000 {
        let n = rng.gen_range(1..=8);
        let weights: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.0..10.0)
                }
            })
            .collect();
        if weights.iter().all(|w| *w == 0.0) {
            continue;
        }
        let defs: Vec<CheckDefinition> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| def(&format!("c{i}"), *w))
            .collect();
        let results: Vec<CheckResult> = (0..n)
            .map(|i| {
                CheckResult::new(
                    format!("c{i}"),
                    BaseScore::clamp(rng.gen_range(0.0..=1.0)).unwrap(),
                    "",
                    None,
                )
            })
            .collect();
        // brute force: pair results with weights by name, sum in reverse order
        let mut num = 0.0;
        let mut den = 0.0;
        for i in (0..n).rev() {
            let r = results.iter().find(|r| r.check_name == format!("c{i}")).unwrap();
            num += weights[i] * r.base_score.value();
            den += weights[i];
        }
        let expected = num / den;
        let got = weighted_grade(&results, &defs).map_err(|e| e.to_string())?;
        worst = worst.max((got - expected).abs());

        let factor = rng.gen_range(0.001..1000.0);
        let scaled: Vec<CheckDefinition> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| def(&format!("c{i}"), w * factor))
            .collect();
        let got_scaled = weighted_grade(&results, &scaled).map_err(|e| e.to_string())?;
        worst_scaled = worst_scaled.max((got_scaled - got).abs());
        instances += 1;
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, format!("max deviation from brute force {worst:e}"))?;
    ensure(
        worst_scaled <= 1e-12,
        format!("max deviation under scaling {worst_scaled:e}"),
    )?;
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{instances} instances, max error {worst:.1e}, scaling error {worst_scaled:.1e}, {elapsed:.0?}"
    ))
}

fn worked_example() -> Verdict {
    let names = CheckDefinition {
        name: "names".into(),
        weight: Weight::new(1.0).unwrap(),
        bands: vec![
            FeedbackBand::new(0.0, 0.5, "Most of your variable names could be more informative."),
            FeedbackBand::new(0.5, 0.9, "Some of your variable names could be more informative."),
            FeedbackBand::new(0.9, 1.0, "Your variable names are informative."),
        ],
        params: CheckParams::Manual(ManualParams {
            prompt: "How informative are the variable names?".into(),
            max_input_score: 10.0,
            allow_text_feedback: false,
        }),
    };
    let r = manual_result(&names, 6.0, None);
    ensure(r.base_score.value() == 0.6, format!("input 6/10 gave {}", r.base_score))?;
    for (score, text) in [
        (0.95, "Your variable names are informative."),
        (0.5, "Some of your variable names could be more informative."),
        (0.3, "Most of your variable names could be more informative."),
    ] {
        let got = names.feedback_for(BaseScore::clamp(score).unwrap());
        ensure(got == text, format!("{score} mapped to {got:?}"))?;
    }
    Ok("6/10 -> 0.6; 0.95, 0.5, 0.3 map to the three bands".into())
}

fn validation_gate(reports: &mut Reports) -> Verdict {
    let c = Corpus::new();
    let full = tests_out(4, 0);
    let classes = ["A", "B", "C", "D"];
    let model_files = |broken_b: bool, violations: &str| -> Vec<(String, String)> {
        let mut f: Vec<(String, String)> = classes
            .iter()
            .map(|k| {
                let body = if broken_b && *k == "B" {
                    tests_out(3, 1)
                } else {
                    full.clone()
                };
                (format!("{k}.out"), body)
            })
            .collect();
        f.push(("violations.txt".into(), violations.into()));
        f
    };
    let as_refs = |v: &Vec<(String, String)>| -> Vec<(String, String)> { v.clone() };
    let m1 = model_files(false, "");
    let m2 = model_files(true, "Main.java:3:naming\n");
    for (id, files) in [("m1", as_refs(&m1)), ("m2", as_refs(&m2))] {
        let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        c.model(id, &refs);
    }
    for (i, id) in ["s1", "s2", "s3"].iter().enumerate() {
        let files: Vec<(String, String)> = classes
            .iter()
            .map(|k| (format!("{k}.out"), tests_out(4 - i, i)))
            .chain([("violations.txt".to_owned(), "Main.java:1:unused\n".repeat(i))])
            .collect();
        let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        c.student(id, &refs);
    }
    let a = c.analyzer_command();
    let checks = c.write_checks(vec![
        test_check("tA", "A", 1.0),
        test_check("tB", "B", 1.0),
        test_check("tC", "C", 2.0),
        test_check("tD", "D", 1.0),
        analysis_check("unused", &a, "unused", 1.0),
        analysis_check("naming", &a, "naming", 1.0),
    ]);
    let config = c.write_config(json!({}));
    let (summary, events) = run(&config, &checks, None);
    ensure(
        summary.exit_code == 0,
        format!("exit {} {:?}", summary.exit_code, errors(&events)),
    )?;

    let invalid_csv = c.read_output("invalid_checks.csv");
    let listed: BTreeSet<String> = invalid_csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_owned())
        .collect();
    let expected: BTreeSet<String> = ["tB", "naming"].iter().map(|s| s.to_string()).collect();
    ensure(listed == expected, format!("invalid_checks.csv lists {listed:?}"))?;

    let records = load_records(&c.results()).map_err(|e| e.to_string())?.records;
    ensure(records.len() == 3, format!("{} student records", records.len()))?;
    for r in records.values() {
        let names: BTreeSet<&str> = r.entries().iter().map(|e| e.check_name.as_str()).collect();
        ensure(
            !names.contains("tB") && !names.contains("naming"),
            format!("{} references an invalid check", r.solution_id),
        )?;
        ensure(
            names.len() == 4,
            format!("{} has {} entries", r.solution_id, names.len()),
        )?;
    }
    let detail = c.read_output("detail.csv");
    ensure(
        !detail.contains("tB_") && !detail.contains("naming_"),
        "detail.csv has invalid columns",
    )?;
    reports.keep("validation", &c.output());
    Ok("invalid = {tB, naming}; no student result references them".into())
}

fn timeout_semantics() -> Verdict {
    let c = Corpus::new();
    let model = c.model("m", &[("Drive.out", &tests_out(4, 0))]);
    let slow = c.student("slow", &[("Drive.out", &tests_out(1, 0)), ("Drive.hang", "")]);
    let config = c.write_config(json!({ "test_timeout_seconds": 2 }));
    let cfg = load_config(&config).map_err(|e| e.to_string())?;
    let ctx = EngineContext::new(cfg, CommandRunner::new(), EventLog::new(), Phase::Grade);
    let check = CheckDefinition {
        name: "drive".into(),
        weight: Weight::new(1.0).unwrap(),
        bands: vec![FeedbackBand::full_range("")],
        params: CheckParams::TestSuite(gradekit::model::TestSuiteParams {
            test_class: "Drive".into(),
            run_command: None,
        }),
    };
    let mut m = Solution::new("m", model, SolutionRole::Model);
    m.mark_compiled();
    let complete = run_test_suite_check(&check, &m, &ctx);
    ensure(complete.outcome.total == 4, "model run did not report 4 tests")?;

    let mut s = Solution::new("slow", slow, SolutionRole::Student);
    s.mark_compiled();
    let start = Instant::now();
    let run = run_test_suite_check(&check, &s, &ctx);
    let elapsed = start.elapsed();
    ensure(run.outcome.timed_out, "timeout not recorded")?;
    ensure(
        run.result.base_score.value() == 0.25,
        format!("score {}", run.result.base_score),
    )?;
    ensure(elapsed < Duration::from_secs(3), format!("killed after {elapsed:?}"))?;
    Ok(format!("score 0.25, timed_out recorded, killed after {elapsed:.2?}"))
}

fn static_analysis_table() -> Verdict {
    let expected = [1.0, 0.75, 0.5, 0.25, 0.0, 0.0, 0.0];
    for (v, want) in expected.iter().enumerate() {
        let got = violation_score(v as u64, 0, 4).value();
        ensure(got == *want, format!("v={v}: {got}"))?;
    }
    // end to end through the analyzer protocol
    let c = Corpus::new();
    let config = c.write_config(json!({}));
    let cfg = load_config(&config).map_err(|e| e.to_string())?;
    let ctx = EngineContext::new(cfg, CommandRunner::new(), EventLog::new(), Phase::Grade);
    let checks = c.write_checks(vec![analysis_check("unused", &c.analyzer_command(), "unused", 1.0)]);
    let defs = load_checks(&checks).map_err(|e| e.to_string())?;
    let refs: Vec<&CheckDefinition> = defs.iter().collect();
    for (v, want) in expected.iter().enumerate() {
        let lines: String = (0..v)
            .map(|i| format!("F{}.java:{i}:unused\nF.java:{i}:other\n", i % 2))
            .collect();
        let dir = c.student(&format!("v{v}"), &[("violations.txt", &lines)]);
        let mut s = Solution::new(format!("v{v}"), dir, SolutionRole::Student);
        s.mark_compiled();
        let got = execute_checks(&s, &refs, &ctx, None, &|_| {}).results[0]
            .base_score
            .value();
        ensure(got == *want, format!("fixture with v={v} scored {got}"))?;
    }
    Ok("v = 0..6 -> 1, 0.75, 0.5, 0.25, 0, 0, 0".into())
}

fn restore_resume(reports: &mut Reports) -> Verdict {
    let start = Instant::now();
    let c = Corpus::new();
    c.model("m", &[("A.out", &tests_out(5, 0)), ("B.out", &tests_out(3, 0))]);
    for i in 0..10 {
        c.student(
            &format!("s{i:02}"),
            &[
                ("A.out", &tests_out(5 - i % 6, i % 6)),
                ("B.out", &tests_out(i % 4, 3 - i % 4)),
                ("violations.txt", &"Main.java:1:unused\n".repeat(i % 5)),
            ],
        );
    }
    let a = c.analyzer_command();
    let checks = c.write_checks(vec![
        test_check("a", "A", 2.0),
        test_check("b", "B", 1.0),
        analysis_check("unused", &a, "unused", 0.5),
        manual_check("style", 1.0, true),
    ]);
    let config = c.write_config(json!({ "mode": "auto" }));
    let (first, events) = run(&config, &checks, None);
    ensure(
        first.exit_code == 0,
        format!("first run exit {}: {:?}", first.exit_code, errors(&events)),
    )?;
    ensure(first.grading_launches > 0, "first run launched nothing")?;
    let names = ["grades.csv", "feedback.csv", "detail.csv"];
    let before: Vec<String> = names.iter().map(|n| c.read_output(n)).collect();
    reports.keep("restore", &c.output());

    c.clear_launch_log();
    let (second, events) = run(&config, &checks, None);
    ensure(
        second.exit_code == 0,
        format!("second run exit {}: {:?}", second.exit_code, errors(&events)),
    )?;
    ensure(
        second.grading_launches == 0,
        format!("{} launches on re-run", second.grading_launches),
    )?;
    ensure(
        second.executions.is_empty(),
        format!("{} checks re-executed", second.executions.len()),
    )?;
    ensure(second.manual_prompts == 0, "manual prompts on re-run")?;
    let student_lines = c
        .launch_log()
        .iter()
        .filter(|l| (l.starts_with("test ") || l.starts_with("analyze ")) && l.contains(" s"))
        .count();
    ensure(student_lines == 0, format!("{student_lines} student check scripts ran"))?;
    for (n, old) in names.iter().zip(&before) {
        ensure(&c.read_output(n) == old, format!("{n} changed on re-run"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!(
        "first run {} grading launches, re-run 0; 3 CSVs byte-identical; {elapsed:.1?}",
        first.grading_launches
    ))
}

fn merge_workflow(reports: &mut Reports) -> Verdict {
    let c = Corpus::new();
    c.model("m", &[]);
    let students = ["s1", "s2", "s3"];
    for s in students {
        c.student(s, &[]);
    }
    let all = vec![
        manual_check("m1", 1.0, true),
        manual_check("m2", 2.0, false),
        manual_check("m3", 1.0, false),
        manual_check("m4", 0.5, true),
    ];
    // scores[solution][check]
    let scores = [[6.0, 7.0, 8.0, 9.0], [10.0, 0.0, 5.0, 3.5], [2.0, 4.0, 6.0, 8.0]];
    let answer = |raw: f64, text: Option<&str>| gradekit::engine::ManualAnswer::Score {
        raw,
        feedback: text.map(str::to_owned),
    };
    let text = |s: usize, k: usize| (s == 0 && k == 0).then_some("use leftMotor");

    // one grader, all checks
    let config = c.write_config(json!({}));
    let checks = c.write_checks(all.clone());
    let mut single = ScriptedPrompter::new(
        (0..3)
            .flat_map(|s| (0..4).map(move |k| (s, k)))
            .map(|(s, k)| answer(scores[s][k], text(s, k))),
    );
    let (summary, events) = run(&config, &checks, Some(&mut single));
    ensure(summary.exit_code == 0, format!("single grader: {:?}", errors(&events)))?;

    // two graders, two checks each
    let mut dirs = Vec::new();
    for (g, ks) in [(1, [0usize, 1]), (2, [2, 3])] {
        let out = format!("out_g{g}");
        let cfg = c.write_config_as(&format!("config_g{g}.json"), json!({ "output_dir": out }));
        let chk = c.write_checks_as(
            &format!("checks_g{g}.json"),
            ks.iter().map(|k| all[*k].clone()).collect(),
        );
        let mut p = ScriptedPrompter::new(
            (0..3)
                .flat_map(|s| ks.map(move |k| (s, k)))
                .map(|(s, k)| answer(scores[s][k], text(s, k))),
        );
        let (summary, events) = run(&cfg, &chk, Some(&mut p));
        ensure(summary.exit_code == 0, format!("grader {g}: {:?}", errors(&events)))?;
        dirs.push(c.root().join(out).join("results"));
    }
    let merged = c.root().join("merged");
    let events = EventLog::new();
    ensure(
        cmd_merge(&dirs, &merged, &events) == 0,
        format!("merge: {:?}", errors(&events)),
    )?;
    let report_out = c.root().join("report");
    let events = EventLog::new();
    let code = cmd_report(&config, &checks, &merged, &report_out, &events);
    ensure(code == 0, format!("report exit {code}: {:?}", errors(&events)))?;
    for n in ["grades.csv", "feedback.csv", "detail.csv", "distribution.csv"] {
        let a = c.read_output(n);
        let b = fs::read_to_string(report_out.join(n)).map_err(|e| e.to_string())?;
        ensure(a == b, format!("{n} differs between merged and single-grader output"))?;
    }
    reports.keep("merge", &report_out);

    // a third grader disagrees on m1 for s1
    let cfg = c.write_config_as("config_g3.json", json!({ "output_dir": "out_g3" }));
    let chk = c.write_checks_as("checks_g3.json", vec![all[0].clone()]);
    let mut p = ScriptedPrompter::new([answer(5.0, text(0, 0)), answer(10.0, None), answer(2.0, None)]);
    run(&cfg, &chk, Some(&mut p));
    let g3 = c.root().join("out_g3/results");
    let events = EventLog::new();
    let code = cmd_merge(&[dirs[0].clone(), g3.clone()], &c.root().join("merged_bad"), &events);
    ensure(code == 1, format!("conflicting merge exited {code}"))?;
    let msg = errors(&events).join("\n");
    for needle in [
        dirs[0].display().to_string(),
        g3.display().to_string(),
        "score 0.6".into(),
        "score 0.5".into(),
    ] {
        ensure(
            msg.contains(&needle),
            format!("conflict message lacks {needle:?}: {msg}"),
        )?;
    }
    ensure(!c.root().join("merged_bad").exists(), "conflicting merge wrote output")?;
    Ok("merged two graders == single grader for all 4 CSVs; conflict lists both sources".into())
}

fn flag_pipeline(reports: &mut Reports) -> Verdict {
    let c = Corpus::new();
    c.model("m", &[("A.out", &tests_out(2, 0))]);
    let broken = ["s2", "s5"];
    for i in 1..=6 {
        let id = format!("s{i}");
        let mut files = vec![("A.out", tests_out(i % 3, 1))];
        if broken.contains(&id.as_str()) {
            files.push(("BROKEN", String::new()));
        }
        let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (*a, b.as_str())).collect();
        c.student(&id, &refs);
    }
    let checks = c.write_checks(vec![
        test_check("a", "A", 1.0),
        analysis_check("unused", &c.analyzer_command(), "unused", 1.0),
    ]);
    let config = c.write_config(json!({}));
    let (summary, events) = run(&config, &checks, None);
    ensure(
        summary.exit_code == 0,
        format!("exit {}: {:?}", summary.exit_code, errors(&events)),
    )?;

    let flagged: BTreeSet<String> = c
        .read_output("flagged_solutions.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_owned())
        .collect();
    let want: BTreeSet<String> = broken.iter().map(|s| s.to_string()).collect();
    ensure(flagged == want, format!("flagged_solutions.csv lists {flagged:?}"))?;
    let cells = grade_cells(&c.read_output("grades.csv"));
    ensure(cells.len() == 6, format!("{} grade rows", cells.len()))?;
    for (id, cell) in &cells {
        ensure(
            cell.is_empty() == want.contains(id),
            format!("{id} grade cell {cell:?}"),
        )?;
    }
    let executed: BTreeSet<&str> = summary.executions.iter().map(|(s, _)| s.as_str()).collect();
    ensure(
        broken.iter().all(|b| !executed.contains(b)),
        "a flagged solution was checked",
    )?;
    let touched = c
        .launch_log()
        .iter()
        .filter(|l| !l.starts_with("compile ") && broken.iter().any(|b| l.split(' ').nth(1) == Some(b)))
        .count();
    ensure(
        touched == 0,
        format!("{touched} check scripts ran on flagged solutions"),
    )?;
    ensure(
        c.root().join("output/compile_logs/s2.log").exists(),
        "no compile log for s2",
    )?;
    reports.keep("flag", &c.output());
    Ok("flagged = {s2, s5}; empty grade cells; zero check launches against them".into())
}

fn self_consistency(reports: &Reports) -> Verdict {
    let mut compared = 0;
    for (label, grades, detail) in &reports.0 {
        ensure(
            !grades.is_empty() && !detail.is_empty(),
            format!("{label}: missing CSVs"),
        )?;
        let recomputed = grades_from_detail(detail);
        let cells = grade_cells(grades);
        for (id, g) in &recomputed {
            let cell: f64 = cells
                .get(id)
                .ok_or(format!("{label}: {id} missing from grades.csv"))?
                .parse()
                .map_err(|e| format!("{label}: {id}: {e}"))?;
            let want = round4_half_even(*g);
            ensure(
                (cell - want).abs() <= 1e-9,
                format!("{label}/{id}: grades.csv {cell} vs detail {want}"),
            )?;
            compared += 1;
        }
    }
    ensure(compared > 0, "nothing compared")?;
    Ok(format!("{compared} grades across {} fixtures", reports.0.len()))
}

fn parallelism_bound() -> Verdict {
    let c = Corpus::new();
    let occupancy = c.root().join("occ");
    fs::create_dir_all(&occupancy).map_err(|e| e.to_string())?;
    let files: Vec<(String, String)> = (0..6).map(|i| (format!("C{i}.out"), tests_out(1, 0))).collect();
    let refs: Vec<(&str, &str)> = files.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    c.model("m", &refs);
    c.student("s", &refs);
    let checks = c.write_checks(
        (0..6)
            .map(|i| test_check(&format!("c{i}"), &format!("C{i}"), 1.0))
            .collect(),
    );
    let config = c.write_config(json!({
        "max_parallelism": 2,
        "test_command": ["env", format!("OCCUPANCY={}", occupancy.display()), "sh", c.script("runner.sh"), "{solution_dir}", "{test_class}"]
    }));
    let (summary, events) = run(&config, &checks, None);
    ensure(
        summary.exit_code == 0,
        format!("exit {}: {:?}", summary.exit_code, errors(&events)),
    )?;
    let log = fs::read_to_string(PathBuf::from(format!("{}.log", occupancy.display()))).map_err(|e| e.to_string())?;
    // sweep over entry/exit timestamps
    let mut marks: Vec<(u128, i32)> = log
        .lines()
        .map(|l| {
            let mut parts = l.split_whitespace();
            let t: u128 = parts.next().unwrap().parse().unwrap();
            (t, if parts.next() == Some("enter") { 1 } else { -1 })
        })
        .collect();
    marks.sort_by_key(|(t, d)| (*t, *d));
    let (mut cur, mut peak) = (0, 0);
    for (_, d) in &marks {
        cur += d;
        peak = peak.max(cur);
    }
    ensure(marks.len() == 24, format!("{} timestamps, expected 24", marks.len()))?;
    ensure(peak <= 2, format!("peak occupancy {peak}"))?;
    ensure(peak >= 2, "no two checks overlapped")?;
    Ok(format!("12 check runs, peak occupancy {peak}"))
}

fn main() -> ExitCode {
    let mut reports = Reports::default();
    let criteria: Vec<(&str, Verdict)> = vec![
        ("grade formula oracle", grade_formula_oracle()),
        ("variable-name worked example", worked_example()),
        ("validation gate", validation_gate(&mut reports)),
        ("timeout semantics", timeout_semantics()),
        ("static analysis interpolation", static_analysis_table()),
        ("restore and resume", restore_resume(&mut reports)),
        ("merge workflow", merge_workflow(&mut reports)),
        ("flag pipeline", flag_pipeline(&mut reports)),
        ("parallelism bound", parallelism_bound()),
    ];
    let consistency = ("self-consistency oracle", self_consistency(&reports));
    let mut failed = 0;
    for (name, verdict) in criteria.iter().chain(std::iter::once(&consistency)) {
        match verdict {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: 10/10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria failed");
        ExitCode::FAILURE
    }
}
