// SPDX-License-Identifier: Apache-2.0

//! Final grades and the CSV outputs: grades, feedback, per-check detail and
//! score distribution.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{format_decimal, weighted_grade, CheckDefinition, CheckResult, ScoreError, Solution};
use crate::store::SolutionRecord;

pub const GRADES_CSV: &str = "grades.csv";
pub const FEEDBACK_CSV: &str = "feedback.csv";
pub const DETAIL_CSV: &str = "detail.csv";
pub const DISTRIBUTION_CSV: &str = "distribution.csv";
pub const WEIGHT_ROW: &str = "WEIGHT";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("solution '{solution_id}' has no result for check '{check_name}'")]
    MissingResult { solution_id: String, check_name: String },
    #[error("solution '{solution_id}': {source}")]
    Score {
        solution_id: String,
        #[source]
        source: ScoreError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradeRow {
    pub solution_id: String,
    pub grade: Option<f64>,
    pub flag_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradeReport {
    /// Sorted by solution id.
    pub rows: Vec<GradeRow>,
    /// Checks in configuration order.
    pub checks: Vec<CheckDefinition>,
}

impl GradeReport {
    pub fn graded(&self) -> impl Iterator<Item = &GradeRow> {
        self.rows.iter().filter(|r| r.grade.is_some())
    }
}

/// Computes the weighted grade of every non-flagged solution.
pub fn build_report(
    records: &BTreeMap<String, SolutionRecord>,
    defs: &[CheckDefinition],
    solutions: &[Solution],
) -> Result<GradeReport, ReportError> {
    let mut sorted: Vec<&Solution> = solutions.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rows = Vec::with_capacity(sorted.len());
    for s in sorted {
        if s.is_flagged() {
            rows.push(GradeRow {
                solution_id: s.id.clone(),
                grade: None,
                flag_reason: Some(s.flag_reason().unwrap_or_default().to_owned()),
            });
            continue;
        }
        let results = results_for(records, &s.id, defs)?;
        let grade = weighted_grade(&results, defs).map_err(|source| ReportError::Score {
            solution_id: s.id.clone(),
            source,
        })?;
        rows.push(GradeRow {
            solution_id: s.id.clone(),
            grade: Some(grade),
            flag_reason: None,
        });
    }
    Ok(GradeReport {
        rows,
        checks: defs.to_vec(),
    })
}

/// Every `(solution_id, check_name)` a report over `defs` would lack.
pub fn missing_results(
    records: &BTreeMap<String, SolutionRecord>,
    defs: &[CheckDefinition],
    solutions: &[Solution],
) -> Vec<(String, String)> {
    let mut missing = Vec::new();
    for s in solutions.iter().filter(|s| !s.is_flagged()) {
        for d in defs {
            if records.get(&s.id).and_then(|r| r.get(&d.name)).is_none() {
                missing.push((s.id.clone(), d.name.clone()));
            }
        }
    }
    missing.sort();
    missing
}

fn results_for(
    records: &BTreeMap<String, SolutionRecord>,
    solution_id: &str,
    defs: &[CheckDefinition],
) -> Result<Vec<CheckResult>, ReportError> {
    defs.iter()
        .map(|d| {
            records
                .get(solution_id)
                .and_then(|r| r.get(&d.name))
                .cloned()
                .ok_or_else(|| ReportError::MissingResult {
                    solution_id: solution_id.to_owned(),
                    check_name: d.name.clone(),
                })
        })
        .collect()
}

/// Four fractional digits, ties to even. The grade is first fixed at nine
/// digits so binary noise cannot decide a tie.
pub fn format_grade(grade: f64) -> String {
    let nanos = (grade.clamp(0.0, 1.0) * 1e9).round() as u64;
    let mut q = nanos / 100_000;
    let r = nanos % 100_000;
    if r > 50_000 || (r == 50_000 && q % 2 == 1) {
        q += 1;
    }
    format!("{}.{:04}", q / 10_000, q % 10_000)
}

/// Generated then manual feedback of one result, blank-line separated.
fn result_feedback(result: &CheckResult) -> Vec<&str> {
    let mut parts = Vec::new();
    if !result.generated_feedback.is_empty() {
        parts.push(result.generated_feedback.as_str());
    }
    if let Some(m) = result.manual_feedback.as_deref().filter(|m| !m.is_empty()) {
        parts.push(m);
    }
    parts
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub grades: PathBuf,
    pub feedback: PathBuf,
    pub detail: PathBuf,
    pub distribution: PathBuf,
}

fn writer(output_dir: &Path, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf), ReportError> {
    fs::create_dir_all(output_dir).map_err(|source| ReportError::Io {
        path: output_dir.to_owned(),
        source,
    })?;
    let path = output_dir.join(name);
    Ok((csv::Writer::from_path(&path)?, path))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<(), ReportError> {
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_owned(),
        source,
    })
}

fn entry<'a>(records: &'a BTreeMap<String, SolutionRecord>, id: &str, check: &str) -> Option<&'a CheckResult> {
    records.get(id).and_then(|r| r.get(check))
}

pub fn write_grades_csv(report: &GradeReport, output_dir: &Path) -> Result<PathBuf, ReportError> {
    let (mut w, path) = writer(output_dir, GRADES_CSV)?;
    w.write_record(["solution_id", "grade", "flag_reason"])?;
    for row in &report.rows {
        let grade = row.grade.map(format_grade).unwrap_or_default();
        w.write_record([
            row.solution_id.as_str(),
            &grade,
            row.flag_reason.as_deref().unwrap_or_default(),
        ])?;
    }
    finish(w, &path)?;
    Ok(path)
}

pub fn write_feedback_csv(
    report: &GradeReport,
    records: &BTreeMap<String, SolutionRecord>,
    output_dir: &Path,
) -> Result<PathBuf, ReportError> {
    let (mut w, path) = writer(output_dir, FEEDBACK_CSV)?;
    w.write_record(["solution_id", "feedback"])?;
    for row in &report.rows {
        let text = match &row.flag_reason {
            Some(reason) => reason.clone(),
            None => report
                .checks
                .iter()
                .filter_map(|d| entry(records, &row.solution_id, &d.name))
                .flat_map(result_feedback)
                .collect::<Vec<_>>()
                .join("\n\n"),
        };
        w.write_record([row.solution_id.as_str(), &text])?;
    }
    finish(w, &path)?;
    Ok(path)
}

pub fn write_detail_csv(
    report: &GradeReport,
    records: &BTreeMap<String, SolutionRecord>,
    output_dir: &Path,
) -> Result<PathBuf, ReportError> {
    let (mut w, path) = writer(output_dir, DETAIL_CSV)?;
    let mut header = vec!["solution_id".to_owned()];
    let mut weights = vec![WEIGHT_ROW.to_owned()];
    for d in &report.checks {
        header.push(format!("{}_score", d.name));
        header.push(format!("{}_feedback", d.name));
        weights.push(d.weight.to_string());
        weights.push(String::new());
    }
    w.write_record(&header)?;
    w.write_record(&weights)?;
    for row in report.graded() {
        let mut cells = vec![row.solution_id.clone()];
        for d in &report.checks {
            match entry(records, &row.solution_id, &d.name) {
                Some(r) => {
                    cells.push(format_decimal(r.base_score.value()));
                    cells.push(result_feedback(r).join("\n\n"));
                }
                None => cells.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&cells)?;
    }
    finish(w, &path)?;
    Ok(path)
}

/// Bucket index for `score` among ten equal-width buckets; 1.0 lands in the last.
pub fn bucket(score: f64) -> usize {
    ((score * 10.0 + 1e-9).floor() as usize).min(9)
}

pub fn write_distribution_csv(
    report: &GradeReport,
    records: &BTreeMap<String, SolutionRecord>,
    output_dir: &Path,
) -> Result<PathBuf, ReportError> {
    let (mut w, path) = writer(output_dir, DISTRIBUTION_CSV)?;
    let mut header = vec!["check_name".to_owned()];
    header.extend((0..10).map(|i| format!("{:.1}-{:.1}", i as f64 / 10.0, (i + 1) as f64 / 10.0)));
    w.write_record(&header)?;
    if report.graded().next().is_some() {
        for d in &report.checks {
            let mut counts = [0usize; 10];
            for row in report.graded() {
                if let Some(r) = entry(records, &row.solution_id, &d.name) {
                    counts[bucket(r.base_score.value())] += 1;
                }
            }
            let mut cells = vec![d.name.clone()];
            cells.extend(counts.iter().map(|c| c.to_string()));
            w.write_record(&cells)?;
        }
    }
    finish(w, &path)?;
    Ok(path)
}

/// Writes all four CSVs into `output_dir`.
pub fn write_reports(
    report: &GradeReport,
    records: &BTreeMap<String, SolutionRecord>,
    output_dir: &Path,
) -> Result<ReportPaths, ReportError> {
    Ok(ReportPaths {
        grades: write_grades_csv(report, output_dir)?,
        feedback: write_feedback_csv(report, records, output_dir)?,
        detail: write_detail_csv(report, records, output_dir)?,
        distribution: write_distribution_csv(report, records, output_dir)?,
    })
}
