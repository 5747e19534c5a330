// SPDX-License-Identifier: Apache-2.0

//! Per-solution JSON checkpoints: save, restore and multi-grader merge.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{format_decimal, parse_decimal, BaseScore, CheckDefinition, CheckResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("merge needs at least two input directories, got {0}")]
    TooFewInputs(usize),
    #[error("{} merge conflict(s):\n{}", .0.len(), format_conflicts(.0))]
    MergeConflict(Vec<MergeConflict>),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

/// All check results for one solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRecord {
    pub solution_id: String,
    pub schema_version: u32,
    entries: Vec<CheckResult>,
}

impl SolutionRecord {
    pub fn new(solution_id: impl Into<String>) -> Self {
        SolutionRecord {
            solution_id: solution_id.into(),
            schema_version: SCHEMA_VERSION,
            entries: Vec::new(),
        }
    }

    pub fn with_entries(solution_id: impl Into<String>, entries: impl IntoIterator<Item = CheckResult>) -> Self {
        let mut record = SolutionRecord::new(solution_id);
        for e in entries {
            record.upsert(e);
        }
        record
    }

    /// Inserts or replaces the entry for `result.check_name`; entries stay sorted by name.
    pub fn upsert(&mut self, result: CheckResult) {
        match self
            .entries
            .binary_search_by(|e| e.check_name.as_str().cmp(&result.check_name))
        {
            Ok(i) => self.entries[i] = result,
            Err(i) => self.entries.insert(i, result),
        }
    }

    pub fn remove(&mut self, check_name: &str) -> Option<CheckResult> {
        let i = self.entries.iter().position(|e| e.check_name == check_name)?;
        Some(self.entries.remove(i))
    }

    pub fn get(&self, check_name: &str) -> Option<&CheckResult> {
        self.entries
            .binary_search_by(|e| e.check_name.as_str().cmp(check_name))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn entries(&self) -> &[CheckResult] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordFile {
    schema_version: u32,
    solution_id: String,
    entries: Vec<EntryFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    check_name: String,
    base_score: String,
    generated_feedback: String,
    manual_feedback: Option<String>,
    completed_at: String,
}

/// Canonical JSON text of a record.
pub fn to_canonical_json(record: &SolutionRecord) -> String {
    let file = RecordFile {
        schema_version: record.schema_version,
        solution_id: record.solution_id.clone(),
        entries: record
            .entries
            .iter()
            .map(|e| EntryFile {
                check_name: e.check_name.clone(),
                base_score: format_decimal(e.base_score.value()),
                generated_feedback: e.generated_feedback.clone(),
                manual_feedback: e.manual_feedback.clone(),
                completed_at: e.completed_at.to_rfc3339_opts(SecondsFormat::Millis, true),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("record serializes");
    text.push('\n');
    text
}

pub fn from_json(text: &str) -> Result<SolutionRecord, String> {
    let file: RecordFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if file.schema_version > SCHEMA_VERSION {
        return Err(format!(
            "schema version {} is newer than supported version {SCHEMA_VERSION}",
            file.schema_version
        ));
    }
    let mut record = SolutionRecord::new(file.solution_id);
    record.schema_version = SCHEMA_VERSION;
    for e in file.entries {
        let raw = parse_decimal(&e.base_score)
            .ok_or_else(|| format!("check '{}': bad base_score '{}'", e.check_name, e.base_score))?;
        let base_score = BaseScore::clamp(raw).map_err(|err| err.to_string())?;
        let completed_at = DateTime::parse_from_rfc3339(&e.completed_at)
            .map_err(|err| format!("check '{}': bad completed_at: {err}", e.check_name))?
            .with_timezone(&Utc);
        if record.get(&e.check_name).is_some() {
            return Err(format!("duplicate entry for check '{}'", e.check_name));
        }
        record.upsert(CheckResult {
            check_name: e.check_name,
            base_score,
            generated_feedback: e.generated_feedback,
            manual_feedback: e.manual_feedback,
            completed_at,
        });
    }
    Ok(record)
}

pub fn record_path(results_dir: &Path, solution_id: &str) -> PathBuf {
    results_dir.join(format!("{solution_id}.json"))
}

/// Writes `<solution_id>.json` atomically: temporary file, then rename.
pub fn save_record(record: &SolutionRecord, results_dir: &Path) -> Result<PathBuf, StoreError> {
    save_record_with(record, results_dir, |from, to| fs::rename(from, to))
}

pub(crate) fn save_record_with(
    record: &SolutionRecord,
    results_dir: &Path,
    rename: impl FnOnce(&Path, &Path) -> io::Result<()>,
) -> Result<PathBuf, StoreError> {
    fs::create_dir_all(results_dir).map_err(io_err(results_dir))?;
    let dest = record_path(results_dir, &record.solution_id);
    let tmp = results_dir.join(format!(".{}.json.tmp", record.solution_id));
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(to_canonical_json(record).as_bytes())?;
        f.sync_all()
    };
    write().map_err(io_err(&tmp))?;
    if let Err(e) = rename(&tmp, &dest) {
        let _ = fs::remove_file(&tmp);
        return Err(StoreError::Io { path: dest, source: e });
    }
    Ok(dest)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreWarning {
    CorruptRecord { file: PathBuf, reason: String },
}

impl std::fmt::Display for StoreWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreWarning::CorruptRecord { file, reason } => {
                write!(f, "corrupt record {}: {reason}", file.display())
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadedRecords {
    pub records: BTreeMap<String, SolutionRecord>,
    pub warnings: Vec<StoreWarning>,
}

/// Loads every `<id>.json` in `results_dir`. A missing directory yields no
/// records; unreadable files are skipped with a warning.
pub fn load_records(results_dir: &Path) -> Result<LoadedRecords, StoreError> {
    let mut loaded = LoadedRecords::default();
    let entries = match fs::read_dir(results_dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(loaded),
        Err(e) => return Err(io_err(results_dir)(e)),
    };
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(results_dir))?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if name.starts_with('.') || path.extension().is_none_or(|e| e != "json") || !path.is_file() {
            continue;
        }
        paths.push(path);
    }
    paths.sort();
    for path in paths {
        let corrupt = |reason: String| StoreWarning::CorruptRecord {
            file: path.clone(),
            reason,
        };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                loaded.warnings.push(corrupt(e.to_string()));
                continue;
            }
        };
        match from_json(&text) {
            Ok(record) => {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                if stem != record.solution_id {
                    loaded.warnings.push(corrupt(format!(
                        "file name does not match solution_id '{}'",
                        record.solution_id
                    )));
                    continue;
                }
                loaded.records.insert(record.solution_id.clone(), record);
            }
            Err(reason) => loaded.warnings.push(corrupt(reason)),
        }
    }
    Ok(loaded)
}

/// `(solution_id, check_name)` for entries naming checks not in `defs`.
pub fn orphaned_entries(records: &BTreeMap<String, SolutionRecord>, defs: &[CheckDefinition]) -> Vec<(String, String)> {
    records
        .values()
        .flat_map(|r| {
            r.entries()
                .iter()
                .filter(|e| !defs.iter().any(|d| d.name == e.check_name))
                .map(|e| (r.solution_id.clone(), e.check_name.clone()))
        })
        .collect()
}

/// Two graders recorded different outcomes for the same check.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeConflict {
    pub solution_id: String,
    pub check_name: String,
    /// `(source label, result)` for every differing value.
    pub values: Vec<(String, CheckResult)>,
}

fn describe(result: &CheckResult) -> String {
    let mut s = format!("score {}", result.base_score);
    if !result.generated_feedback.is_empty() {
        s.push_str(&format!(", feedback {:?}", result.generated_feedback));
    }
    if let Some(m) = &result.manual_feedback {
        s.push_str(&format!(", comment {m:?}"));
    }
    s
}

fn format_conflicts(conflicts: &[MergeConflict]) -> String {
    conflicts
        .iter()
        .map(|c| {
            let sides: Vec<String> = c
                .values
                .iter()
                .map(|(src, r)| format!("{src}: {}", describe(r)))
                .collect();
            format!("  {}/{}: {}", c.solution_id, c.check_name, sides.join(" vs "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Unions labelled record sets. Identical outcomes are deduplicated keeping
/// the earliest timestamp; differing outcomes are all reported as conflicts.
pub fn merge_record_sets(
    sets: &[(String, BTreeMap<String, SolutionRecord>)],
) -> Result<BTreeMap<String, SolutionRecord>, Vec<MergeConflict>> {
    // (solution, check) -> values from each source
    let mut seen: BTreeMap<(String, String), Vec<(String, CheckResult)>> = BTreeMap::new();
    for (label, records) in sets {
        for record in records.values() {
            for e in record.entries() {
                seen.entry((record.solution_id.clone(), e.check_name.clone()))
                    .or_default()
                    .push((label.clone(), e.clone()));
            }
        }
    }
    let mut merged: BTreeMap<String, SolutionRecord> = BTreeMap::new();
    for (_, records) in sets {
        for id in records.keys() {
            merged
                .entry(id.clone())
                .or_insert_with(|| SolutionRecord::new(id.clone()));
        }
    }
    let mut conflicts = Vec::new();
    for ((solution_id, check_name), values) in seen {
        let first = &values[0].1;
        if values.iter().all(|(_, v)| v.same_outcome(first)) {
            let earliest = values
                .iter()
                .map(|(_, v)| v)
                .min_by_key(|v| v.completed_at)
                .expect("non-empty")
                .clone();
            merged.get_mut(&solution_id).expect("record created").upsert(earliest);
        } else {
            conflicts.push(MergeConflict {
                solution_id,
                check_name,
                values,
            });
        }
    }
    if conflicts.is_empty() {
        Ok(merged)
    } else {
        Err(conflicts)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Merged {
    pub records: BTreeMap<String, SolutionRecord>,
    pub warnings: Vec<StoreWarning>,
}

/// Loads and merges the record directories of several graders.
pub fn merge_records(inputs: &[PathBuf]) -> Result<Merged, StoreError> {
    if inputs.len() < 2 {
        return Err(StoreError::TooFewInputs(inputs.len()));
    }
    let mut sets = Vec::with_capacity(inputs.len());
    let mut warnings = Vec::new();
    for dir in inputs {
        if !dir.is_dir() {
            return Err(StoreError::Io {
                path: dir.clone(),
                source: io::Error::new(io::ErrorKind::NotFound, "not a directory"),
            });
        }
        let loaded = load_records(dir)?;
        warnings.extend(loaded.warnings);
        sets.push((dir.display().to_string(), loaded.records));
    }
    let records = merge_record_sets(&sets).map_err(StoreError::MergeConflict)?;
    Ok(Merged { records, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::now_millis;
    use chrono::Duration;
    use proptest::prelude::*;
    use tempfile::TempDir;

    fn result(name: &str, score: f64) -> CheckResult {
        CheckResult::new(name, BaseScore::clamp(score).unwrap(), "fb", None)
    }

    fn sample() -> SolutionRecord {
        let mut manual = result("names", 0.6);
        manual.manual_feedback = Some("use leftMotor".into());
        SolutionRecord::with_entries("alice", [result("tests", 1.0 / 3.0), manual])
    }

    #[test]
    fn round_trip() {
        let t = TempDir::new().unwrap();
        let rec = sample();
        let path = save_record(&rec, t.path()).unwrap();
        assert_eq!(path, t.path().join("alice.json"));
        let loaded = load_records(t.path()).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.records["alice"], rec);
    }

    #[test]
    fn canonical_layout() {
        let mut rec = SolutionRecord::new("bob");
        let mut r = result("b", 0.5);
        r.completed_at = DateTime::parse_from_rfc3339("2026-01-02T03:04:05.678Z")
            .unwrap()
            .with_timezone(&Utc);
        rec.upsert(r);
        let expected = r#"{
  "schema_version": 1,
  "solution_id": "bob",
  "entries": [
    {
      "check_name": "b",
      "base_score": "0.5",
      "generated_feedback": "fb",
      "manual_feedback": null,
      "completed_at": "2026-01-02T03:04:05.678Z"
    }
  ]
}
"#;
        assert_eq!(to_canonical_json(&rec), expected);
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let t = TempDir::new().unwrap();
        let rec = sample();
        let p = save_record(&rec, t.path()).unwrap();
        let first = fs::read(&p).unwrap();
        save_record(&rec, t.path()).unwrap();
        assert_eq!(first, fs::read(&p).unwrap());
        let names: Vec<_> = rec.entries().iter().map(|e| e.check_name.as_str()).collect();
        assert_eq!(names, ["names", "tests"]);
    }

    #[test]
    fn failed_rename_keeps_original() {
        let t = TempDir::new().unwrap();
        let original = sample();
        let p = save_record(&original, t.path()).unwrap();
        let before = fs::read(&p).unwrap();
        let mut changed = original.clone();
        changed.upsert(result("tests", 0.0));
        let err = save_record_with(&changed, t.path(), |_, _| Err(io::Error::other("simulated crash")));
        assert!(err.is_err());
        assert_eq!(fs::read(&p).unwrap(), before);
        let leftovers: Vec<_> = fs::read_dir(t.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn load_edge_cases() {
        let t = TempDir::new().unwrap();
        assert!(load_records(&t.path().join("missing")).unwrap().records.is_empty());
        assert!(load_records(t.path()).unwrap().records.is_empty());

        save_record(&sample(), t.path()).unwrap();
        let text = to_canonical_json(&SolutionRecord::with_entries("bob", [result("x", 1.0)]));
        fs::write(t.path().join("bob.json"), &text[..text.len() / 2]).unwrap();
        fs::write(t.path().join("notes.txt"), "ignored").unwrap();
        let loaded = load_records(t.path()).unwrap();
        assert_eq!(loaded.records.keys().collect::<Vec<_>>(), ["alice"]);
        assert_eq!(loaded.warnings.len(), 1);
        assert!(matches!(
            &loaded.warnings[0],
            StoreWarning::CorruptRecord { file, .. } if file.ends_with("bob.json")
        ));
    }

    #[test]
    fn newer_schema_rejected() {
        let text = to_canonical_json(&sample()).replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(from_json(&text).unwrap_err().contains("newer"));
    }

    #[test]
    fn orphans_reported() {
        let mut map = BTreeMap::new();
        map.insert("alice".to_owned(), sample());
        let orphans = orphaned_entries(&map, &[]);
        assert_eq!(orphans.len(), 2);
    }

    fn dir_with(records: &[SolutionRecord]) -> TempDir {
        let t = TempDir::new().unwrap();
        for r in records {
            save_record(r, t.path()).unwrap();
        }
        t
    }

    #[test]
    fn merge_disjoint_checks() {
        let a = dir_with(&[SolutionRecord::with_entries("s1", [result("m1", 0.6)])]);
        let b = dir_with(&[SolutionRecord::with_entries("s1", [result("m2", 0.8)])]);
        let merged = merge_records(&[a.path().into(), b.path().into()]).unwrap();
        let names: Vec<_> = merged.records["s1"]
            .entries()
            .iter()
            .map(|e| e.check_name.clone())
            .collect();
        assert_eq!(names, ["m1", "m2"]);
    }

    #[test]
    fn merge_dedupes_identical() {
        let r = result("m1", 0.6);
        let mut later = r.clone();
        later.completed_at = r.completed_at + Duration::seconds(5);
        let a = dir_with(&[SolutionRecord::with_entries("s1", [later])]);
        let b = dir_with(&[SolutionRecord::with_entries("s1", [r.clone()])]);
        let merged = merge_records(&[a.path().into(), b.path().into()]).unwrap();
        assert_eq!(merged.records["s1"].entries(), [r]);
    }

    #[test]
    fn merge_conflict_names_both_sources() {
        let a = dir_with(&[SolutionRecord::with_entries(
            "s1",
            [result("m1", 0.6), result("m2", 1.0)],
        )]);
        let b = dir_with(&[SolutionRecord::with_entries(
            "s1",
            [result("m1", 0.8), result("m2", 0.5)],
        )]);
        let err = merge_records(&[a.path().into(), b.path().into()]).unwrap_err();
        let StoreError::MergeConflict(conflicts) = &err else {
            panic!("expected conflict, got {err}");
        };
        assert_eq!(conflicts.len(), 2);
        let msg = err.to_string();
        assert!(msg.contains(&a.path().display().to_string()));
        assert!(msg.contains(&b.path().display().to_string()));
        assert!(msg.contains("score 0.6") && msg.contains("score 0.8"));
    }

    #[test]
    fn merge_needs_two_inputs() {
        let a = dir_with(&[]);
        assert!(matches!(
            merge_records(&[a.path().into()]),
            Err(StoreError::TooFewInputs(1))
        ));
    }

    fn arb_set() -> impl Strategy<Value = BTreeMap<String, SolutionRecord>> {
        // Scores are a function of (solution, check) so sets never conflict.
        proptest::collection::btree_set((0u8..4, 0u8..4), 0..8).prop_map(|pairs| {
            let base = now_millis();
            let mut map: BTreeMap<String, SolutionRecord> = BTreeMap::new();
            for (s, c) in pairs {
                let id = format!("s{s}");
                let mut r = result(&format!("c{c}"), f64::from(s * 4 + c) / 16.0);
                r.completed_at = base;
                map.entry(id.clone())
                    .or_insert_with(|| SolutionRecord::new(id))
                    .upsert(r);
            }
            map
        })
    }

    proptest! {
        #[test]
        fn save_load_round_trip(score in 0.0f64..=1.0, text in ".{0,40}", comment in proptest::option::of(".{1,40}")) {
            let t = TempDir::new().unwrap();
            let mut r = CheckResult::new("c", BaseScore::clamp(score).unwrap(), text, comment);
            r.completed_at = now_millis();
            let rec = SolutionRecord::with_entries("x", [r]);
            save_record(&rec, t.path()).unwrap();
            prop_assert_eq!(&load_records(t.path()).unwrap().records["x"], &rec);
        }

        #[test]
        fn merge_commutative_and_associative(a in arb_set(), b in arb_set(), c in arb_set()) {
            let l = |n: &str, m: &BTreeMap<String, SolutionRecord>| (n.to_owned(), m.clone());
            let ab = merge_record_sets(&[l("a", &a), l("b", &b)]).unwrap();
            let ba = merge_record_sets(&[l("b", &b), l("a", &a)]).unwrap();
            prop_assert_eq!(&ab, &ba);
            let ab_c = merge_record_sets(&[l("ab", &ab), l("c", &c)]).unwrap();
            let bc = merge_record_sets(&[l("b", &b), l("c", &c)]).unwrap();
            let a_bc = merge_record_sets(&[l("a", &a), l("bc", &bc)]).unwrap();
            prop_assert_eq!(ab_c, a_bc);
        }
    }
}
