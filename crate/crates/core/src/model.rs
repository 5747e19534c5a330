// SPDX-License-Identifier: Apache-2.0

//! Domain types and the pure scoring math shared by every other module.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::CommandTemplate;

/// Errors raised by the scoring math.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error("all weights are zero; grade is undefined")]
    AllWeightsZero,
    #[error("no result for check '{0}'")]
    MissingResult(String),
    #[error("no feedback band matches score {0}")]
    NoBandMatches(f64),
}

/// A normalized criterion score, always within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BaseScore(f64);

impl BaseScore {
    pub const ZERO: BaseScore = BaseScore(0.0);
    pub const ONE: BaseScore = BaseScore(1.0);

    /// Clamps a raw score into `[0, 1]`. Non-finite input is rejected.
    pub fn clamp(raw: f64) -> Result<Self, ScoreError> {
        if !raw.is_finite() {
            return Err(ScoreError::NonFinite(raw));
        }
        Ok(BaseScore(raw.clamp(0.0, 1.0)))
    }

    /// Ratio helper for proportions that are in range by construction.
    pub fn ratio(numerator: f64, denominator: f64) -> Self {
        if denominator <= 0.0 {
            return BaseScore::ZERO;
        }
        BaseScore::clamp(numerator / denominator).unwrap_or(BaseScore::ZERO)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Rounds to the nine fractional digits used by the persisted form.
    pub fn quantized(self) -> Self {
        BaseScore(parse_decimal(&format_decimal(self.0)).unwrap_or(self.0))
    }
}

impl fmt::Display for BaseScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_decimal(self.0))
    }
}

/// Formats a value with at most nine fractional digits, trailing zeros trimmed.
pub fn format_decimal(value: f64) -> String {
    let mut s = format!("{value:.9}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_owned();
    }
    s
}

pub fn parse_decimal(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Multiplier for a check's influence on the final grade.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Weight(f64);

#[derive(Debug, Clone, PartialEq, Error)]
#[error("weight must be a finite non-negative number, got {0}")]
pub struct InvalidWeight(pub f64);

impl Weight {
    pub fn new(value: f64) -> Result<Self, InvalidWeight> {
        if value.is_finite() && value >= 0.0 {
            Ok(Weight(value))
        } else {
            Err(InvalidWeight(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Weight {
    type Error = InvalidWeight;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Weight::new(value)
    }
}

impl From<Weight> for f64 {
    fn from(w: Weight) -> f64 {
        w.0
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_decimal(self.0))
    }
}

/// A score interval mapped to canned feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackBand {
    pub lower: f64,
    pub upper: f64,
    pub text: String,
}

impl FeedbackBand {
    pub fn new(lower: f64, upper: f64, text: impl Into<String>) -> Self {
        FeedbackBand {
            lower,
            upper,
            text: text.into(),
        }
    }

    /// A single band covering `[0, 1]`.
    pub fn full_range(text: impl Into<String>) -> Self {
        FeedbackBand::new(0.0, 1.0, text)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BandError {
    #[error("band [{lower}, {upper}) is outside [0, 1] or empty")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("band starting at {lower} overlaps or precedes the band ending at {previous_upper}")]
    Overlap { previous_upper: f64, lower: f64 },
}

/// Checks the band invariants: bounds inside `[0, 1]`, ordered, non-overlapping.
pub fn validate_bands(bands: &[FeedbackBand]) -> Result<(), BandError> {
    let mut previous_upper: Option<f64> = None;
    for band in bands {
        let in_range = band.lower.is_finite()
            && band.upper.is_finite()
            && band.lower >= 0.0
            && band.upper <= 1.0
            && band.lower < band.upper;
        if !in_range {
            return Err(BandError::InvalidBounds {
                lower: band.lower,
                upper: band.upper,
            });
        }
        if let Some(prev) = previous_upper {
            if band.lower < prev {
                return Err(BandError::Overlap {
                    previous_upper: prev,
                    lower: band.lower,
                });
            }
        }
        previous_upper = Some(band.upper);
    }
    Ok(())
}

/// Returns the text of the band containing `score`.
///
/// Bands are half-open `[lower, upper)` except the topmost one, which also
/// contains its upper bound.
pub fn band_feedback(score: BaseScore, bands: &[FeedbackBand]) -> Result<&str, ScoreError> {
    let s = score.value();
    let last = bands.len().checked_sub(1);
    bands
        .iter()
        .enumerate()
        .find(|(i, b)| s >= b.lower && (s < b.upper || (Some(*i) == last && s <= b.upper)))
        .map(|(_, b)| b.text.as_str())
        .ok_or(ScoreError::NoBandMatches(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckKind {
    TestSuite,
    StaticAnalysis,
    Manual,
}

impl CheckKind {
    pub fn is_automated(self) -> bool {
        !matches!(self, CheckKind::Manual)
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckKind::TestSuite => "TEST_SUITE",
            CheckKind::StaticAnalysis => "STATIC_ANALYSIS",
            CheckKind::Manual => "MANUAL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuiteParams {
    pub test_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_command: Option<CommandTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticAnalysisParams {
    pub analyzer_command: CommandTemplate,
    pub rule_id: String,
    pub min_violations: u64,
    pub max_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualParams {
    pub prompt: String,
    pub max_input_score: f64,
    #[serde(default)]
    pub allow_text_feedback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckParams {
    TestSuite(TestSuiteParams),
    StaticAnalysis(StaticAnalysisParams),
    Manual(ManualParams),
}

/// One grading criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckDefinition {
    pub name: String,
    pub weight: Weight,
    pub bands: Vec<FeedbackBand>,
    pub params: CheckParams,
}

impl CheckDefinition {
    pub fn kind(&self) -> CheckKind {
        match self.params {
            CheckParams::TestSuite(_) => CheckKind::TestSuite,
            CheckParams::StaticAnalysis(_) => CheckKind::StaticAnalysis,
            CheckParams::Manual(_) => CheckKind::Manual,
        }
    }

    pub fn is_automated(&self) -> bool {
        self.kind().is_automated()
    }

    /// Band lookup; gaps in the band list yield empty feedback.
    pub fn feedback_for(&self, score: BaseScore) -> String {
        band_feedback(score, &self.bands).map(str::to_owned).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolutionRole {
    Student,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolutionStatus {
    Pending,
    Compiled,
    Flagged,
}

pub const COMPILATION_FAILED: &str = "compilation failed";

/// One student or model submission.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub id: String,
    pub source_dir: PathBuf,
    pub role: SolutionRole,
    status: SolutionStatus,
    flag_reason: Option<String>,
}

impl Solution {
    pub fn new(id: impl Into<String>, source_dir: impl Into<PathBuf>, role: SolutionRole) -> Self {
        Solution {
            id: id.into(),
            source_dir: source_dir.into(),
            role,
            status: SolutionStatus::Pending,
            flag_reason: None,
        }
    }

    pub fn status(&self) -> SolutionStatus {
        self.status
    }

    pub fn flag_reason(&self) -> Option<&str> {
        self.flag_reason.as_deref()
    }

    pub fn is_flagged(&self) -> bool {
        self.status == SolutionStatus::Flagged
    }

    pub fn mark_compiled(&mut self) {
        self.status = SolutionStatus::Compiled;
        self.flag_reason = None;
    }

    pub fn flag(&mut self, reason: impl Into<String>) {
        self.status = SolutionStatus::Flagged;
        self.flag_reason = Some(reason.into());
    }
}

/// Outcome of one check on one solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub check_name: String,
    pub base_score: BaseScore,
    pub generated_feedback: String,
    pub manual_feedback: Option<String>,
    pub completed_at: DateTime<Utc>,
}

impl CheckResult {
    /// Builds a result stamped now. The score is quantized to its persisted
    /// precision so in-memory and restored results compare equal.
    pub fn new(
        check_name: impl Into<String>,
        base_score: BaseScore,
        generated_feedback: impl Into<String>,
        manual_feedback: Option<String>,
    ) -> Self {
        CheckResult {
            check_name: check_name.into(),
            base_score: base_score.quantized(),
            generated_feedback: generated_feedback.into(),
            manual_feedback: manual_feedback.filter(|t| !t.trim().is_empty()),
            completed_at: now_millis(),
        }
    }

    /// Equality ignoring the completion timestamp.
    pub fn same_outcome(&self, other: &CheckResult) -> bool {
        self.check_name == other.check_name
            && self.base_score == other.base_score
            && self.generated_feedback == other.generated_feedback
            && self.manual_feedback == other.manual_feedback
    }
}

/// Current UTC time truncated to the millisecond precision used on disk.
pub fn now_millis() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(3)
}

/// Weighted mean of base scores: `Σ w·s / Σ w` over all definitions.
///
/// Zero-weight checks are excluded from both sums. Every definition must
/// have a result; results for unknown checks are ignored.
pub fn weighted_grade(results: &[CheckResult], defs: &[CheckDefinition]) -> Result<f64, ScoreError> {
    let by_name: HashMap<&str, &CheckResult> = results.iter().map(|r| (r.check_name.as_str(), r)).collect();
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for def in defs {
        let result = by_name
            .get(def.name.as_str())
            .ok_or_else(|| ScoreError::MissingResult(def.name.clone()))?;
        let w = def.weight.value();
        if w == 0.0 {
            continue;
        }
        numerator += w * result.base_score.value();
        denominator += w;
    }
    if denominator == 0.0 {
        return Err(ScoreError::AllWeightsZero);
    }
    Ok((numerator / denominator).clamp(0.0, 1.0))
}
