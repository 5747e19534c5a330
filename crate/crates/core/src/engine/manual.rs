// SPDX-License-Identifier: Apache-2.0

//! MANUAL checks: ask the grader for a score and normalize it.

use crate::inspector::ProgramInput;
use crate::model::{BaseScore, CheckDefinition, CheckParams, CheckResult, FeedbackBand, ManualParams, Solution};

/// What the grader is being asked.
#[derive(Debug, Clone)]
pub struct ManualRequest<'a> {
    pub solution_id: &'a str,
    pub check_name: &'a str,
    pub params: &'a ManualParams,
    pub bands: &'a [FeedbackBand],
    /// Set when re-asking after rejected input.
    pub notice: Option<String>,
    /// Stdin of the program launched by the inspector, when there is one.
    pub program_input: Option<ProgramInput>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManualAnswer {
    Score {
        raw: f64,
        feedback: Option<String>,
    },
    /// Checkpoint and stop the run.
    Pause,
    /// Leave this solution without recording further results.
    SkipSolution,
}

/// Source of grader answers (terminal, HTTP session, scripted tests).
pub trait ManualPrompter {
    fn ask(&mut self, request: &ManualRequest<'_>) -> ManualAnswer;
}

impl<P: ManualPrompter + ?Sized> ManualPrompter for &mut P {
    fn ask(&mut self, request: &ManualRequest<'_>) -> ManualAnswer {
        (**self).ask(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interrupt {
    Pause,
    SkipSolution,
}

/// Whether `raw` is an acceptable answer for a check with limit `max`.
pub fn in_range(raw: f64, max: f64) -> bool {
    raw.is_finite() && (0.0..=max).contains(&raw)
}

/// Builds the result for an accepted manual answer. Shared by every input
/// path so terminal and HTTP entries produce identical records.
pub fn manual_result(def: &CheckDefinition, raw: f64, feedback: Option<String>) -> CheckResult {
    let CheckParams::Manual(params) = &def.params else {
        panic!("manual_result called with a {} check", def.kind());
    };
    let score = BaseScore::ratio(raw, params.max_input_score);
    let generated = def.feedback_for(score);
    let manual = if params.allow_text_feedback {
        feedback.map(|f| f.trim().to_owned())
    } else {
        None
    };
    CheckResult::new(&def.name, score, generated, manual)
}

/// Asks until the prompter supplies an in-range score or interrupts.
pub fn run_manual_check(
    def: &CheckDefinition,
    solution: &Solution,
    prompter: &mut dyn ManualPrompter,
    program_input: Option<ProgramInput>,
) -> Result<CheckResult, Interrupt> {
    let CheckParams::Manual(params) = &def.params else {
        panic!("run_manual_check called with a {} check", def.kind());
    };
    let mut request = ManualRequest {
        solution_id: &solution.id,
        check_name: &def.name,
        params,
        bands: &def.bands,
        notice: None,
        program_input,
    };
    loop {
        match prompter.ask(&request) {
            ManualAnswer::Score { raw, feedback } if in_range(raw, params.max_input_score) => {
                return Ok(manual_result(def, raw, feedback));
            }
            ManualAnswer::Score { raw, .. } => {
                request.notice = Some(format!(
                    "{raw} is out of range; enter a number between 0 and {}",
                    params.max_input_score
                ));
            }
            ManualAnswer::Pause => return Err(Interrupt::Pause),
            ManualAnswer::SkipSolution => return Err(Interrupt::SkipSolution),
        }
    }
}

/// Replays a fixed list of answers; handy for tests and dry runs.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPrompter {
    answers: std::collections::VecDeque<ManualAnswer>,
    pub asked: Vec<(String, String)>,
}

impl ScriptedPrompter {
    pub fn new(answers: impl IntoIterator<Item = ManualAnswer>) -> Self {
        ScriptedPrompter {
            answers: answers.into_iter().collect(),
            asked: Vec::new(),
        }
    }

    pub fn scores(raw: impl IntoIterator<Item = f64>) -> Self {
        Self::new(raw.into_iter().map(|raw| ManualAnswer::Score { raw, feedback: None }))
    }

    pub fn remaining(&self) -> usize {
        self.answers.len()
    }
}

impl ManualPrompter for ScriptedPrompter {
    fn ask(&mut self, request: &ManualRequest<'_>) -> ManualAnswer {
        self.asked
            .push((request.solution_id.to_owned(), request.check_name.to_owned()));
        // Running out of answers behaves like end of input.
        self.answers.pop_front().unwrap_or(ManualAnswer::Pause)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SolutionRole, Weight};

    fn def(allow_text: bool) -> CheckDefinition {
        CheckDefinition {
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
                allow_text_feedback: allow_text,
            }),
        }
    }

    fn solution() -> Solution {
        Solution::new("alice", "/tmp/alice", SolutionRole::Student)
    }

    #[test]
    fn six_of_ten() {
        let mut p = ScriptedPrompter::scores([6.0]);
        let r = run_manual_check(&def(false), &solution(), &mut p, None).unwrap();
        assert_eq!(r.base_score.value(), 0.6);
        assert_eq!(
            r.generated_feedback,
            "Some of your variable names could be more informative."
        );
        assert_eq!(r.manual_feedback, None);
    }

    #[test]
    fn zero_is_lower_bound() {
        let mut p = ScriptedPrompter::scores([0.0]);
        let r = run_manual_check(&def(false), &solution(), &mut p, None).unwrap();
        assert_eq!(r.base_score, BaseScore::ZERO);
    }

    #[test]
    fn out_of_range_reprompts() {
        let mut p = ScriptedPrompter::scores([11.0, -1.0, 10.0]);
        let r = run_manual_check(&def(false), &solution(), &mut p, None).unwrap();
        assert_eq!(r.base_score, BaseScore::ONE);
        assert_eq!(p.asked.len(), 3);
    }

    #[test]
    fn text_feedback_only_when_allowed() {
        let text = "a is not an informative variable name, leftMotor would be better.";
        let answer = ManualAnswer::Score {
            raw: 4.0,
            feedback: Some(text.into()),
        };
        let mut p = ScriptedPrompter::new([answer.clone()]);
        let r = run_manual_check(&def(true), &solution(), &mut p, None).unwrap();
        assert_eq!(r.manual_feedback.as_deref(), Some(text));
        let mut p = ScriptedPrompter::new([answer]);
        let r = run_manual_check(&def(false), &solution(), &mut p, None).unwrap();
        assert_eq!(r.manual_feedback, None);
    }

    #[test]
    fn blank_text_is_none() {
        let mut p = ScriptedPrompter::new([ManualAnswer::Score {
            raw: 4.0,
            feedback: Some("   ".into()),
        }]);
        let r = run_manual_check(&def(true), &solution(), &mut p, None).unwrap();
        assert_eq!(r.manual_feedback, None);
    }

    #[test]
    fn interrupts() {
        let mut p = ScriptedPrompter::new([ManualAnswer::Pause]);
        assert_eq!(
            run_manual_check(&def(false), &solution(), &mut p, None),
            Err(Interrupt::Pause)
        );
        let mut p = ScriptedPrompter::new([ManualAnswer::SkipSolution]);
        assert_eq!(
            run_manual_check(&def(false), &solution(), &mut p, None),
            Err(Interrupt::SkipSolution)
        );
    }
}
