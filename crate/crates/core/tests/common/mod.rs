// SPDX-License-Identifier: Apache-2.0

//! Fixture corpus built from small shell scripts that speak the runner and
//! analyzer line protocols.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use tempfile::TempDir;

// Every script appends "<what> <solution>" to launch.log.
const COMPILE: &str = r#"#!/bin/sh
echo "compile $(basename "$1")" >> "$LOG"
if [ -f "$1/BROKEN" ]; then
    echo "syntax error in Main.java" >&2
    exit 1
fi
exit 0
"#;

const RUNNER: &str = r#"#!/bin/sh
echo "test $(basename "$1") $2" >> "$LOG"
f="$1/$2.out"
[ -f "$f" ] || { echo "unknown test class $2" >&2; exit 3; }
if [ -n "$OCCUPANCY" ]; then
    mkdir "$OCCUPANCY/$$"
    n=$(ls "$OCCUPANCY" | wc -l)
    echo "$(date +%s%N) enter $n" >> "$OCCUPANCY.log"
    sleep 0.3
    echo "$(date +%s%N) exit" >> "$OCCUPANCY.log"
    rmdir "$OCCUPANCY/$$"
fi
cat "$f"
[ -f "$1/$2.hang" ] && sleep 30
exit 0
"#;

const ANALYZER: &str = r#"#!/bin/sh
echo "analyze $(basename "$1")" >> "$LOG"
cat "$1/violations.txt" 2>/dev/null
exit 0
"#;

pub struct Corpus {
    pub dir: TempDir,
}

impl Corpus {
    pub fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let root = dir.path();
        for sub in ["models", "solutions", "bin"] {
            fs::create_dir_all(root.join(sub)).unwrap();
        }
        let log = root.join("launch.log");
        let with_log = |body: &str| body.replacen("#!/bin/sh\n", &format!("#!/bin/sh\nLOG='{}'\n", log.display()), 1);
        fs::write(root.join("bin/compile.sh"), with_log(COMPILE)).unwrap();
        fs::write(root.join("bin/runner.sh"), with_log(RUNNER)).unwrap();
        fs::write(root.join("bin/analyzer.sh"), with_log(ANALYZER)).unwrap();
        Corpus { dir }
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    fn solution_in(&self, parent: &str, id: &str, files: &[(&str, &str)]) -> PathBuf {
        let d = self.root().join(parent).join(id);
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join("Main.java"), format!("class Main {{ /* {id} */ }}\n")).unwrap();
        for (name, body) in files {
            fs::write(d.join(name), body).unwrap();
        }
        d
    }

    pub fn model(&self, id: &str, files: &[(&str, &str)]) -> PathBuf {
        self.solution_in("models", id, files)
    }

    pub fn student(&self, id: &str, files: &[(&str, &str)]) -> PathBuf {
        self.solution_in("solutions", id, files)
    }

    pub fn script(&self, name: &str) -> String {
        self.root().join("bin").join(name).display().to_string()
    }

    pub fn analyzer_command(&self) -> Value {
        json!(["sh", self.script("analyzer.sh"), "{solution_dir}"])
    }

    /// Writes config.json; `overrides` replaces top-level keys.
    pub fn write_config(&self, overrides: Value) -> PathBuf {
        self.write_config_as("config.json", overrides)
    }

    pub fn write_config_as(&self, file: &str, overrides: Value) -> PathBuf {
        let mut cfg = json!({
            "solutions_dir": "solutions",
            "model_solutions_dir": "models",
            "compile_command": ["sh", self.script("compile.sh"), "{solution_dir}"],
            "test_command": ["sh", self.script("runner.sh"), "{solution_dir}", "{test_class}"],
            "test_timeout_seconds": 10,
            "max_parallelism": 2
        });
        for (k, v) in overrides.as_object().unwrap() {
            cfg[k] = v.clone();
        }
        let path = self.root().join(file);
        fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        path
    }

    pub fn write_checks(&self, checks: Vec<Value>) -> PathBuf {
        self.write_checks_as("checks.json", checks)
    }

    pub fn write_checks_as(&self, file: &str, checks: Vec<Value>) -> PathBuf {
        let path = self.root().join(file);
        fs::write(
            &path,
            serde_json::to_string_pretty(&json!({ "checks": checks })).unwrap(),
        )
        .unwrap();
        path
    }

    pub fn output(&self) -> PathBuf {
        self.root().join("output")
    }

    pub fn results(&self) -> PathBuf {
        self.output().join("results")
    }

    pub fn read_output(&self, name: &str) -> String {
        fs::read_to_string(self.output().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    /// Lines of launch.log: one per script invocation.
    pub fn launch_log(&self) -> Vec<String> {
        fs::read_to_string(self.root().join("launch.log"))
            .map(|s| s.lines().map(str::to_owned).collect())
            .unwrap_or_default()
    }

    pub fn clear_launch_log(&self) {
        let _ = fs::remove_file(self.root().join("launch.log"));
    }
}

pub fn tests_out(pass: usize, fail: usize) -> String {
    let mut s = String::new();
    for i in 0..pass {
        s.push_str(&format!("TEST ok{i} PASS\n"));
    }
    for i in 0..fail {
        s.push_str(&format!("TEST bad{i} FAIL\n"));
    }
    s
}

pub fn test_check(name: &str, class: &str, weight: f64) -> Value {
    json!({
        "name": name, "kind": "TEST_SUITE", "weight": weight,
        "bands": [
            {"lower": 0.0, "upper": 0.5, "text": format!("{name}: many tests fail.")},
            {"lower": 0.5, "upper": 1.0, "text": format!("{name}: most tests pass.")}
        ],
        "params": {"test_class": class}
    })
}

pub fn analysis_check(name: &str, analyzer: &Value, rule: &str, weight: f64) -> Value {
    json!({
        "name": name, "kind": "STATIC_ANALYSIS", "weight": weight,
        "bands": [{"lower": 0.0, "upper": 1.0, "text": ""}],
        "params": {"analyzer_command": analyzer, "rule_id": rule, "min_violations": 0, "max_violations": 4}
    })
}

pub fn manual_check(name: &str, weight: f64, allow_text: bool) -> Value {
    json!({
        "name": name, "kind": "MANUAL", "weight": weight,
        "bands": [
            {"lower": 0.0, "upper": 0.5, "text": "Most of your variable names could be more informative."},
            {"lower": 0.5, "upper": 0.9, "text": "Some of your variable names could be more informative."},
            {"lower": 0.9, "upper": 1.0, "text": "Your variable names are informative."}
        ],
        "params": {"prompt": "How informative are the variable names?", "max_input_score": 10, "allow_text_feedback": allow_text}
    })
}

/// Independent grade recomputation from detail.csv: Σ score·weight / Σ weight
/// over the WEIGHT row, unrounded.
pub fn grades_from_detail(detail: &str) -> BTreeMap<String, f64> {
    let mut rdr = csv::Reader::from_reader(detail.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    let score_cols: Vec<usize> = (1..header.len()).filter(|i| header[*i].ends_with("_score")).collect();
    let mut weights: Vec<f64> = Vec::new();
    let mut grades = BTreeMap::new();
    for row in rdr.records() {
        let row = row.unwrap();
        if &row[0] == "WEIGHT" {
            weights = score_cols.iter().map(|&i| row[i].parse().unwrap()).collect();
            continue;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (k, &i) in score_cols.iter().enumerate() {
            let s: f64 = row[i].parse().unwrap();
            num += s * weights[k];
            den += weights[k];
        }
        grades.insert(row[0].to_owned(), num / den);
    }
    grades
}

/// `solution_id -> grade cell` from grades.csv.
pub fn grade_cells(grades: &str) -> BTreeMap<String, String> {
    let mut rdr = csv::Reader::from_reader(grades.as_bytes());
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_owned(), r[1].to_owned())
        })
        .collect()
}

/// Four fractional digits, ties to even, worked on the decimal string.
pub fn round4_half_even(x: f64) -> f64 {
    let s = format!("{x:.9}");
    let (int, frac) = s.split_once('.').unwrap();
    let keep: u64 = format!("{int}{}", &frac[..4]).parse().unwrap();
    let rest = &frac[4..];
    let up = rest > "50000" || (rest == "50000" && keep % 2 == 1);
    (keep + u64::from(up)) as f64 / 1e4
}
