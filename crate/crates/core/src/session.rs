// SPDX-License-Identifier: Apache-2.0

//! Live manual-grading session shared by the terminal prompt and the local
//! HTTP interface.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::{self, BufRead};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::manual::in_range;
use crate::engine::{ManualAnswer, ManualPrompter, ManualRequest};
use crate::inspector::{source_files, Console, ProgramInput};
use crate::model::{format_decimal, FeedbackBand};
use crate::prompt::{forward_program_input, parse_input, read_line, render_prompt, PromptInput};

/// Size of the program-output tail kept for the UI.
pub const OUTPUT_RING_BYTES: usize = 16 * 1024;
pub const DEFAULT_PORT: u16 = 7878;

const INDEX_HTML: &str = include_str!("../assets/index.html");
const HTTP_WORKERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionPhase {
    Config,
    Compile,
    Validate,
    Restore,
    Grade,
    Report,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurrentCheck {
    pub name: String,
    pub prompt: String,
    pub max_input_score: f64,
    pub allow_text_feedback: bool,
    pub bands: Vec<FeedbackBand>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub solutions_done: usize,
    pub solutions_total: usize,
    pub checks_done_for_current: usize,
    pub checks_total_for_current: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionState {
    pub run_id: String,
    pub phase: SessionPhase,
    pub current_solution_id: Option<String>,
    pub current_check: Option<CurrentCheck>,
    pub progress: Progress,
    pub recent_program_output: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SourceFile {
    pub path: String,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Terminal,
    Api,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubmitError {
    #[error("check '{0}' is not awaiting a score")]
    StaleCheck(String),
    #[error("score {raw} is outside 0-{max}")]
    OutOfRange { raw: f64, max: f64 },
}

impl SubmitError {
    pub fn code(&self) -> &'static str {
        match self {
            SubmitError::StaleCheck(_) => "STALE_CHECK",
            SubmitError::OutOfRange { .. } => "OUT_OF_RANGE",
        }
    }
}

struct Pending {
    check_name: String,
    max_input_score: f64,
    allow_text_feedback: bool,
    program_input: Option<ProgramInput>,
    answer: Option<(ManualAnswer, Source)>,
}

#[derive(Debug, Clone)]
pub struct PendingCheck {
    pub check_name: String,
    pub max_input_score: f64,
    pub allow_text_feedback: bool,
    pub program_input: Option<ProgramInput>,
}

struct Inner {
    state: SessionState,
    pending: Option<Pending>,
    output: VecDeque<u8>,
    terminal_closed: bool,
}

/// Single source of truth for the session; every score, from either input
/// path, passes through [`SessionHub::submit`].
pub struct SessionHub {
    inner: Mutex<Inner>,
    changed: Condvar,
    solutions: Mutex<BTreeMap<String, PathBuf>>,
}

impl SessionHub {
    pub fn new(run_id: impl Into<String>) -> Arc<Self> {
        Arc::new(SessionHub {
            inner: Mutex::new(Inner {
                state: SessionState {
                    run_id: run_id.into(),
                    phase: SessionPhase::Config,
                    current_solution_id: None,
                    current_check: None,
                    progress: Progress::default(),
                    recent_program_output: String::new(),
                },
                pending: None,
                output: VecDeque::new(),
                terminal_closed: false,
            }),
            changed: Condvar::new(),
            solutions: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn snapshot(&self) -> SessionState {
        let inner = self.inner.lock().unwrap();
        let mut state = inner.state.clone();
        let (a, b) = inner.output.as_slices();
        let bytes = [a, b].concat();
        state.recent_program_output = String::from_utf8_lossy(&bytes).into_owned();
        state
    }

    fn update(&self, f: impl FnOnce(&mut Inner)) {
        let mut inner = self.inner.lock().unwrap();
        f(&mut inner);
        self.changed.notify_all();
    }

    pub fn set_phase(&self, phase: SessionPhase) {
        self.update(|i| {
            i.state.phase = phase;
            if phase == SessionPhase::Done {
                i.state.current_solution_id = None;
                i.state.current_check = None;
                i.state.progress.solutions_done = i.state.progress.solutions_total;
            }
        });
    }

    /// Solutions whose sources may be served.
    pub fn register_solution(&self, id: &str, dir: PathBuf) {
        self.solutions.lock().unwrap().insert(id.to_owned(), dir);
    }

    pub fn set_solutions_total(&self, total: usize) {
        self.update(|i| i.state.progress.solutions_total = total);
    }

    pub fn begin_solution(&self, id: &str, checks_total: usize) {
        self.update(|i| {
            i.state.current_solution_id = Some(id.to_owned());
            i.state.progress.checks_done_for_current = 0;
            i.state.progress.checks_total_for_current = checks_total;
            i.output.clear();
        });
    }

    pub fn check_done(&self) {
        self.update(|i| {
            let p = &mut i.state.progress;
            p.checks_done_for_current = (p.checks_done_for_current + 1).min(p.checks_total_for_current);
        });
    }

    pub fn solution_done(&self) {
        self.update(|i| {
            let p = &mut i.state.progress;
            p.solutions_done += 1;
        });
    }

    /// Appends program output, keeping only the last [`OUTPUT_RING_BYTES`].
    pub fn push_output(&self, text: &str) {
        let mut inner = self.inner.lock().unwrap();
        inner.output.extend(text.as_bytes());
        let excess = inner.output.len().saturating_sub(OUTPUT_RING_BYTES);
        inner.output.drain(..excess);
        // Do not start in the middle of a UTF-8 sequence.
        while inner.output.front().is_some_and(|b| b & 0xC0 == 0x80) {
            inner.output.pop_front();
        }
    }

    pub fn sources(&self, id: &str) -> Option<io::Result<Vec<SourceFile>>> {
        let dir = self.solutions.lock().unwrap().get(id)?.clone();
        Some(source_files(&dir).and_then(|files| {
            files
                .into_iter()
                .map(|rel| {
                    let bytes = fs::read(dir.join(&rel))?;
                    Ok(SourceFile {
                        path: rel.to_string_lossy().into_owned(),
                        content: String::from_utf8_lossy(&bytes).into_owned(),
                    })
                })
                .collect()
        }))
    }

    /// Offers a score for the pending check. The first accepted answer wins;
    /// `check_name` of `None` means whatever check is current.
    pub fn submit(
        &self,
        source: Source,
        check_name: Option<&str>,
        raw: f64,
        feedback: Option<String>,
    ) -> Result<(), SubmitError> {
        let mut inner = self.inner.lock().unwrap();
        let stale = || SubmitError::StaleCheck(check_name.unwrap_or("").to_owned());
        let pending = inner.pending.as_mut().ok_or_else(stale)?;
        if pending.answer.is_some() || check_name.is_some_and(|c| c != pending.check_name) {
            return Err(stale());
        }
        if !in_range(raw, pending.max_input_score) {
            return Err(SubmitError::OutOfRange {
                raw,
                max: pending.max_input_score,
            });
        }
        pending.answer = Some((ManualAnswer::Score { raw, feedback }, source));
        self.changed.notify_all();
        Ok(())
    }

    /// Pause or skip from the terminal. Returns false when nothing is pending.
    pub fn interrupt(&self, answer: ManualAnswer) -> bool {
        let mut inner = self.inner.lock().unwrap();
        match inner.pending.as_mut() {
            Some(p) if p.answer.is_none() => {
                p.answer = Some((answer, Source::Terminal));
                self.changed.notify_all();
                true
            }
            _ => false,
        }
    }

    /// End of terminal input: the current and any later prompt pause.
    pub fn close_terminal(&self) {
        self.update(|i| {
            i.terminal_closed = true;
            if let Some(p) = i.pending.as_mut() {
                if p.answer.is_none() {
                    p.answer = Some((ManualAnswer::Pause, Source::Terminal));
                }
            }
        });
    }

    /// The check awaiting an answer, if any.
    pub fn pending_check(&self) -> Option<PendingCheck> {
        let inner = self.inner.lock().unwrap();
        inner
            .pending
            .as_ref()
            .filter(|p| p.answer.is_none())
            .map(|p| PendingCheck {
                check_name: p.check_name.clone(),
                max_input_score: p.max_input_score,
                allow_text_feedback: p.allow_text_feedback,
                program_input: p.program_input.clone(),
            })
    }

    /// Blocks until a check is pending or `timeout` passes.
    pub fn wait_for_pending(&self, timeout: Duration) -> Option<String> {
        let inner = self.inner.lock().unwrap();
        let (inner, _) = self
            .changed
            .wait_timeout_while(inner, timeout, |i| {
                !i.pending.as_ref().is_some_and(|p| p.answer.is_none())
            })
            .unwrap();
        inner.pending.as_ref().map(|p| p.check_name.clone())
    }

    /// Publishes `request` and blocks until either input path answers.
    pub fn ask(&self, request: &ManualRequest<'_>) -> (ManualAnswer, Source) {
        let mut inner = self.inner.lock().unwrap();
        if inner.terminal_closed {
            return (ManualAnswer::Pause, Source::Terminal);
        }
        inner.pending = Some(Pending {
            check_name: request.check_name.to_owned(),
            max_input_score: request.params.max_input_score,
            allow_text_feedback: request.params.allow_text_feedback,
            program_input: request.program_input.clone(),
            answer: None,
        });
        inner.state.current_solution_id = Some(request.solution_id.to_owned());
        inner.state.current_check = Some(CurrentCheck {
            name: request.check_name.to_owned(),
            prompt: request.params.prompt.clone(),
            max_input_score: request.params.max_input_score,
            allow_text_feedback: request.params.allow_text_feedback,
            bands: request.bands.to_vec(),
        });
        self.changed.notify_all();
        let mut inner = self
            .changed
            .wait_while(inner, |i| i.pending.as_ref().is_some_and(|p| p.answer.is_none()))
            .unwrap();
        let answer = inner
            .pending
            .take()
            .and_then(|p| p.answer)
            .unwrap_or((ManualAnswer::Pause, Source::Terminal));
        inner.state.current_check = None;
        self.changed.notify_all();
        answer
    }
}

/// Prompter backed by the hub; the terminal side is [`spawn_terminal_reader`].
pub struct HubPrompter {
    hub: Arc<SessionHub>,
    console: Console,
}

impl HubPrompter {
    pub fn new(hub: Arc<SessionHub>, console: Console) -> Self {
        HubPrompter { hub, console }
    }
}

impl ManualPrompter for HubPrompter {
    fn ask(&mut self, request: &ManualRequest<'_>) -> ManualAnswer {
        {
            let mut c = self.console.lock().unwrap();
            let _ = write!(c, "{}", render_prompt(request));
            let _ = c.flush();
        }
        let (answer, source) = self.hub.ask(request);
        if let (ManualAnswer::Score { raw, .. }, Source::Api) = (&answer, source) {
            let mut c = self.console.lock().unwrap();
            let _ = writeln!(c, "\n{} entered via web interface", format_decimal(*raw));
        }
        answer
    }
}

/// Reads grader input lines and feeds them to the hub. End of input pauses.
pub fn spawn_terminal_reader<R: BufRead + Send + 'static>(
    hub: Arc<SessionHub>,
    mut input: R,
    console: Console,
) -> JoinHandle<()> {
    thread::spawn(move || {
        let say = |msg: &str| {
            let mut c = console.lock().unwrap();
            let _ = write!(c, "{msg}");
            let _ = c.flush();
        };
        loop {
            let Ok(Some(line)) = read_line(&mut input) else {
                hub.close_terminal();
                return;
            };
            let Some(pending) = hub.pending_check() else {
                if !line.trim().is_empty() {
                    say("no manual check is waiting for input\n");
                }
                continue;
            };
            match parse_input(&line) {
                PromptInput::Pause => {
                    hub.interrupt(ManualAnswer::Pause);
                }
                PromptInput::Skip => {
                    hub.interrupt(ManualAnswer::SkipSolution);
                }
                PromptInput::ProgramInput => {
                    let mut out = Vec::new();
                    let more = forward_program_input(&mut input, &mut out, pending.program_input.as_ref());
                    say(&String::from_utf8_lossy(&out));
                    if !matches!(more, Ok(true)) {
                        hub.close_terminal();
                        return;
                    }
                    say("Score: ");
                }
                PromptInput::Invalid(text) => say(&format!("'{text}' is not a number; try again: ")),
                PromptInput::Score(raw) if !in_range(raw, pending.max_input_score) => say(&format!(
                    "{} is out of range; enter a number between 0 and {}: ",
                    format_decimal(raw),
                    format_decimal(pending.max_input_score)
                )),
                PromptInput::Score(raw) => {
                    let mut feedback = None;
                    if pending.allow_text_feedback {
                        say("Feedback (empty for none): ");
                        match read_line(&mut input) {
                            Ok(Some(f)) if !f.trim().is_empty() => feedback = Some(f),
                            Ok(Some(_)) => {}
                            _ => {
                                hub.close_terminal();
                                return;
                            }
                        }
                    }
                    match hub.submit(Source::Terminal, Some(&pending.check_name), raw, feedback) {
                        Ok(()) => {}
                        Err(SubmitError::StaleCheck(_)) => {
                            say("this check was already answered via the web interface\n")
                        }
                        Err(e) => say(&format!("{e}; try again: ")),
                    }
                }
            }
        }
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreBody {
    check_name: String,
    raw_score: f64,
    #[serde(default)]
    text_feedback: Option<String>,
}

#[derive(Serialize)]
struct ApiError<'a> {
    error: &'a str,
    message: String,
}

type HttpResponse = tiny_http::Response<io::Cursor<Vec<u8>>>;

fn json_response(status: u16, body: &impl Serialize) -> HttpResponse {
    let bytes = serde_json::to_vec(body).expect("response serializes");
    tiny_http::Response::from_data(bytes)
        .with_status_code(status)
        .with_header(tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header"))
}

fn error_response(status: u16, code: &str, message: impl Into<String>) -> HttpResponse {
    json_response(
        status,
        &ApiError {
            error: code,
            message: message.into(),
        },
    )
}

fn handle(hub: &SessionHub, request: &mut tiny_http::Request) -> HttpResponse {
    use tiny_http::Method;
    let url = request.url().split('?').next().unwrap_or("").to_owned();
    let segments: Vec<&str> = url.trim_matches('/').split('/').collect();
    match (request.method(), segments.as_slice()) {
        (Method::Get, [""]) => tiny_http::Response::from_data(INDEX_HTML.as_bytes().to_vec()).with_header(
            tiny_http::Header::from_bytes("Content-Type", "text/html; charset=utf-8").expect("static header"),
        ),
        (Method::Get, ["api", "state"]) => json_response(200, &hub.snapshot()),
        (Method::Get, ["api", "solutions", id, "sources"]) => match hub.sources(id) {
            None => error_response(404, "UNKNOWN_SOLUTION", format!("no solution '{id}'")),
            Some(Ok(files)) => json_response(200, &files),
            Some(Err(e)) => error_response(500, "IO_ERROR", e.to_string()),
        },
        (Method::Post, ["api", "score"]) => {
            let mut body = String::new();
            if let Err(e) = request.as_reader().read_to_string(&mut body) {
                return error_response(400, "BAD_REQUEST", e.to_string());
            }
            let body: ScoreBody = match serde_json::from_str(&body) {
                Ok(b) => b,
                Err(e) => return error_response(400, "BAD_REQUEST", e.to_string()),
            };
            let feedback = body.text_feedback.filter(|f| !f.trim().is_empty());
            match hub.submit(Source::Api, Some(&body.check_name), body.raw_score, feedback) {
                Ok(()) => json_response(200, &serde_json::json!({ "accepted": true })),
                Err(e @ SubmitError::StaleCheck(_)) => error_response(409, e.code(), e.to_string()),
                Err(e @ SubmitError::OutOfRange { .. }) => error_response(422, e.code(), e.to_string()),
            }
        }
        (_, [""] | ["api", "state" | "score"] | ["api", "solutions", _, "sources"]) => {
            error_response(405, "METHOD_NOT_ALLOWED", "method not allowed")
        }
        _ => error_response(404, "NOT_FOUND", format!("no route for {url}")),
    }
}

/// The running HTTP server; stops when dropped.
pub struct ApiServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl ApiServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for ApiServer {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Serves the session on `127.0.0.1:port` (0 picks a free port).
pub fn serve(hub: Arc<SessionHub>, port: u16) -> io::Result<ApiServer> {
    let server = tiny_http::Server::http(("127.0.0.1", port)).map_err(io::Error::other)?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| io::Error::other("server is not bound to an IP address"))?;
    let server = Arc::new(server);
    let workers = (0..HTTP_WORKERS)
        .map(|_| {
            let server = Arc::clone(&server);
            let hub = Arc::clone(&hub);
            thread::spawn(move || {
                while let Ok(mut request) = server.recv() {
                    let loopback = request.remote_addr().is_some_and(|a| a.ip().is_loopback());
                    if !loopback {
                        // Dropping the request closes the connection unanswered.
                        continue;
                    }
                    let response = handle(&hub, &mut request);
                    let _ = request.respond(response);
                }
            })
        })
        .collect();
    Ok(ApiServer { server, addr, workers })
}
