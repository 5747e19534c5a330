// SPDX-License-Identifier: Apache-2.0

//! Terminal prompt for manual checks.

use std::io::{self, BufRead, Write};

use crate::engine::{ManualAnswer, ManualPrompter, ManualRequest};
use crate::inspector::ProgramInput;
use crate::model::format_decimal;

/// Command that switches to forwarding lines to the running program.
pub const PROGRAM_INPUT_CMD: &str = "i";
/// Line that ends program-input mode.
pub const PROGRAM_INPUT_END: &str = ".";

/// Prompt text, score limit and the feedback bands as a rubric hint.
pub fn render_prompt(request: &ManualRequest<'_>) -> String {
    let mut s = format!("\n[{}] {}\n", request.solution_id, request.check_name);
    s.push_str(&request.params.prompt);
    s.push('\n');
    let max = request.params.max_input_score;
    let visible: Vec<_> = request.bands.iter().filter(|b| !b.text.is_empty()).collect();
    if !visible.is_empty() {
        s.push_str("Rubric:\n");
        for b in visible {
            s.push_str(&format!(
                "  {}-{}: {}\n",
                format_decimal(b.lower * max),
                format_decimal(b.upper * max),
                b.text
            ));
        }
    }
    if let Some(notice) = &request.notice {
        s.push_str(notice);
        s.push('\n');
    }
    let input_hint = if request.program_input.is_some() {
        format!(", {PROGRAM_INPUT_CMD} = type into program")
    } else {
        String::new()
    };
    s.push_str(&format!(
        "Score 0-{} (p = pause, s = skip solution{input_hint}): ",
        format_decimal(max)
    ));
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum PromptInput {
    Score(f64),
    Pause,
    Skip,
    ProgramInput,
    Invalid(String),
}

pub fn parse_input(line: &str) -> PromptInput {
    let t = line.trim();
    match t {
        "p" | "P" => PromptInput::Pause,
        "s" | "S" => PromptInput::Skip,
        PROGRAM_INPUT_CMD => PromptInput::ProgramInput,
        _ => match t.parse::<f64>() {
            Ok(v) if v.is_finite() => PromptInput::Score(v),
            _ => PromptInput::Invalid(t.to_owned()),
        },
    }
}

/// Forwards lines to the program until `.` or end of input. Returns false on
/// end of input.
pub fn forward_program_input<R: BufRead, W: Write>(
    input: &mut R,
    out: &mut W,
    program: Option<&ProgramInput>,
) -> io::Result<bool> {
    let Some(program) = program else {
        writeln!(out, "no program is running for this solution")?;
        return Ok(true);
    };
    writeln!(
        out,
        "Lines are sent to the program; a single '{PROGRAM_INPUT_END}' returns to grading."
    )?;
    loop {
        let Some(line) = read_line(input)? else {
            return Ok(false);
        };
        if line.trim() == PROGRAM_INPUT_END {
            return Ok(true);
        }
        if let Err(e) = program.send_line(&line) {
            writeln!(out, "could not send to program: {e}")?;
            return Ok(true);
        }
    }
}

pub(crate) fn read_line<R: BufRead>(input: &mut R) -> io::Result<Option<String>> {
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    while line.ends_with('\n') || line.ends_with('\r') {
        line.pop();
    }
    Ok(Some(line))
}

/// Reads answers from a line-oriented stream such as stdin.
pub struct LinePrompter<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> LinePrompter<R, W> {
    pub fn new(input: R, output: W) -> Self {
        LinePrompter { input, output }
    }

    pub fn into_output(self) -> W {
        self.output
    }

    fn ask_io(&mut self, request: &ManualRequest<'_>) -> io::Result<ManualAnswer> {
        write!(self.output, "{}", render_prompt(request))?;
        self.output.flush()?;
        loop {
            let Some(line) = read_line(&mut self.input)? else {
                return Ok(ManualAnswer::Pause);
            };
            match parse_input(&line) {
                PromptInput::Pause => return Ok(ManualAnswer::Pause),
                PromptInput::Skip => return Ok(ManualAnswer::SkipSolution),
                PromptInput::Score(raw) => {
                    let feedback = if request.params.allow_text_feedback
                        && crate::engine::manual::in_range(raw, request.params.max_input_score)
                    {
                        write!(self.output, "Feedback (empty for none): ")?;
                        self.output.flush()?;
                        read_line(&mut self.input)?.filter(|f| !f.trim().is_empty())
                    } else {
                        None
                    };
                    return Ok(ManualAnswer::Score { raw, feedback });
                }
                PromptInput::ProgramInput => {
                    if !forward_program_input(&mut self.input, &mut self.output, request.program_input.as_ref())? {
                        return Ok(ManualAnswer::Pause);
                    }
                    write!(self.output, "Score: ")?;
                }
                PromptInput::Invalid(text) => {
                    write!(self.output, "'{text}' is not a number; try again: ")?;
                }
            }
            self.output.flush()?;
        }
    }
}

impl<R: BufRead, W: Write> ManualPrompter for LinePrompter<R, W> {
    fn ask(&mut self, request: &ManualRequest<'_>) -> ManualAnswer {
        // A broken terminal is treated like end of input.
        self.ask_io(request).unwrap_or(ManualAnswer::Pause)
    }
}
