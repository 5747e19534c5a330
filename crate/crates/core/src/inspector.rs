// SPDX-License-Identifier: Apache-2.0

//! Solution inspector: runs the student's program in the background and opens
//! its sources in an editor while manual checks are answered.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::command::{group_alive, kill_group, CommandTemplate, Substitutions, FILE, FILES};
use crate::events::{EventLog, Level, Phase};
use crate::model::{now_millis, Solution};

/// A program that exits non-zero within this window counts as a failed launch.
pub const LAUNCH_PROBE: Duration = Duration::from_millis(500);
/// Time between the graceful signal and the forced kill.
pub const KILL_GRACE: Duration = Duration::from_secs(2);

pub const PROGRAM_LOGS: &str = "program_logs";
pub const PROGRAM_PREFIX: &str = "[program] ";

#[derive(Debug, Error)]
pub enum InspectorError {
    #[error("an inspection session for '{0}' is already open")]
    SessionActive(String),
}

pub type OutputSink = Arc<dyn Fn(&str) + Send + Sync>;
pub type Console = Arc<Mutex<dyn Write + Send>>;

/// Write end of the launched program's stdin.
#[derive(Clone, Default)]
pub struct ProgramInput(Arc<Mutex<Option<ChildStdin>>>);

impl fmt::Debug for ProgramInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ProgramInput")
    }
}

impl ProgramInput {
    pub fn send_line(&self, line: &str) -> io::Result<()> {
        let mut guard = self.0.lock().unwrap();
        let stdin = guard
            .as_mut()
            .ok_or_else(|| io::Error::new(io::ErrorKind::BrokenPipe, "program input closed"))?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()
    }

    pub fn close(&self) {
        self.0.lock().unwrap().take();
    }
}

/// Settings the inspector needs from the run configuration.
#[derive(Clone)]
pub struct InspectorConfig {
    pub run_command: Option<CommandTemplate>,
    pub editor_command: Option<CommandTemplate>,
    pub log_dir: PathBuf,
    pub console: Option<Console>,
    pub output_sink: Option<OutputSink>,
}

impl InspectorConfig {
    pub fn new(log_dir: impl Into<PathBuf>) -> Self {
        InspectorConfig {
            run_command: None,
            editor_command: None,
            log_dir: log_dir.into(),
            console: None,
            output_sink: None,
        }
    }
}

struct LaunchedProgram {
    child: Child,
    input: ProgramInput,
    tee: Vec<JoinHandle<()>>,
}

impl LaunchedProgram {
    fn pid(&self) -> u32 {
        self.child.id()
    }
}

/// One open inspection of a solution.
pub struct InspectionSession {
    pub solution_id: String,
    pub opened_files: Vec<PathBuf>,
    pub started_at: DateTime<Utc>,
    pub warnings: Vec<String>,
    program: Option<LaunchedProgram>,
    closed: bool,
}

impl fmt::Debug for InspectionSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InspectionSession")
            .field("solution_id", &self.solution_id)
            .field("program_pid", &self.program_pid())
            .field("opened_files", &self.opened_files)
            .field("closed", &self.closed)
            .finish()
    }
}

/// Non-hidden regular files under `dir`, relative to it, sorted.
pub fn source_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        for entry in fs::read_dir(dir.join(&rel))? {
            let entry = entry?;
            if entry.file_name().to_string_lossy().starts_with('.') {
                continue;
            }
            let child = rel.join(entry.file_name());
            let ty = entry.file_type()?;
            if ty.is_dir() {
                stack.push(child);
            } else if ty.is_file() {
                files.push(child);
            }
        }
    }
    files.sort();
    Ok(files)
}

impl InspectionSession {
    /// Launches the program and editor as configured. Launch and editor
    /// problems are recorded as warnings; the session always opens.
    pub fn open(solution: &Solution, cfg: &InspectorConfig) -> InspectionSession {
        let mut session = InspectionSession {
            solution_id: solution.id.clone(),
            opened_files: Vec::new(),
            started_at: now_millis(),
            warnings: Vec::new(),
            program: None,
            closed: false,
        };
        if let Some(run) = &cfg.run_command {
            match launch(run, solution, cfg) {
                Ok((program, warning)) => {
                    session.program = Some(program);
                    session.warnings.extend(warning);
                }
                Err(e) => session.warnings.push(format!("program launch failed: {e}")),
            }
        }
        if let Some(editor) = &cfg.editor_command {
            match source_files(&solution.source_dir) {
                Ok(rel) => {
                    let files: Vec<PathBuf> = rel.iter().map(|f| solution.source_dir.join(f)).collect();
                    session.warnings.extend(open_editor(editor, solution, &files));
                    session.opened_files = files;
                }
                Err(e) => session
                    .warnings
                    .push(format!("editor failed: cannot list sources: {e}")),
            }
        }
        session
    }

    pub fn program_pid(&self) -> Option<u32> {
        self.program.as_ref().map(LaunchedProgram::pid)
    }

    pub fn program_input(&self) -> Option<ProgramInput> {
        self.program.as_ref().map(|p| p.input.clone())
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Whether the launched program (or anything in its process group) still runs.
    pub fn program_running(&mut self) -> bool {
        match self.program.as_mut() {
            Some(p) => {
                let leader_alive = matches!(p.child.try_wait(), Ok(None));
                leader_alive || group_alive(p.child.id())
            }
            None => false,
        }
    }

    /// Terminates the program's process group: SIGTERM, then SIGKILL after
    /// [`KILL_GRACE`]. Editors are left running. Idempotent.
    pub fn close(&mut self) {
        if self.closed {
            return;
        }
        self.closed = true;
        let Some(mut program) = self.program.take() else {
            return;
        };
        program.input.close();
        let pid = program.child.id();
        kill_group(pid, libc::SIGTERM);
        let deadline = Instant::now() + KILL_GRACE;
        loop {
            let _ = program.child.try_wait();
            if !group_alive(pid) {
                break;
            }
            if Instant::now() >= deadline {
                kill_group(pid, libc::SIGKILL);
                break;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = program.child.wait();
        // Killed helpers linger as zombies until their new parent reaps them.
        let reap_deadline = Instant::now() + Duration::from_millis(500);
        while group_alive(pid) && Instant::now() < reap_deadline {
            thread::sleep(Duration::from_millis(10));
        }
        let until = Instant::now() + Duration::from_secs(1);
        for handle in program.tee {
            while !handle.is_finished() && Instant::now() < until {
                thread::sleep(Duration::from_millis(5));
            }
            if handle.is_finished() {
                let _ = handle.join();
            }
        }
    }
}

impl Drop for InspectionSession {
    fn drop(&mut self) {
        self.close();
    }
}

fn launch(
    run: &CommandTemplate,
    solution: &Solution,
    cfg: &InspectorConfig,
) -> io::Result<(LaunchedProgram, Option<String>)> {
    let argv = run.render(&Substitutions::new().solution_dir(&solution.source_dir));
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty run command"))?;
    fs::create_dir_all(&cfg.log_dir)?;
    let log = Arc::new(Mutex::new(File::create(
        cfg.log_dir.join(format!("{}.log", solution.id)),
    )?));
    let mut child = Command::new(program)
        .args(args)
        .current_dir(&solution.source_dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()?;
    let input = ProgramInput(Arc::new(Mutex::new(child.stdin.take())));
    let mut tee = Vec::new();
    if let Some(out) = child.stdout.take() {
        tee.push(spawn_tee(out, Arc::clone(&log), cfg));
    }
    if let Some(err) = child.stderr.take() {
        tee.push(spawn_tee(err, Arc::clone(&log), cfg));
    }

    let mut warning = None;
    let probe_end = Instant::now() + LAUNCH_PROBE;
    while Instant::now() < probe_end {
        match child.try_wait() {
            Ok(Some(status)) => {
                if !status.success() {
                    warning = Some(format!(
                        "program launch failed: exited with {}",
                        status
                            .code()
                            .map_or_else(|| "a signal".to_owned(), |c| format!("code {c}"))
                    ));
                }
                break;
            }
            Ok(None) => thread::sleep(Duration::from_millis(10)),
            Err(_) => break,
        }
    }
    Ok((LaunchedProgram { child, input, tee }, warning))
}

fn spawn_tee<R: Read + Send + 'static>(source: R, log: Arc<Mutex<File>>, cfg: &InspectorConfig) -> JoinHandle<()> {
    let console = cfg.console.clone();
    let sink = cfg.output_sink.clone();
    thread::spawn(move || {
        let mut reader = BufReader::new(source);
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) | Err(_) => break,
                Ok(_) => {}
            }
            let line = String::from_utf8_lossy(&buf);
            let line = line.trim_end_matches(['\n', '\r']);
            let _ = writeln!(log.lock().unwrap(), "{line}");
            if let Some(console) = &console {
                let _ = writeln!(console.lock().unwrap(), "{PROGRAM_PREFIX}{line}");
            }
            if let Some(sink) = &sink {
                sink(&format!("{line}\n"));
            }
        }
    })
}

fn open_editor(editor: &CommandTemplate, solution: &Solution, files: &[PathBuf]) -> Vec<String> {
    let base = Substitutions::new().solution_dir(&solution.source_dir);
    let invocations: Vec<Vec<String>> = if editor.contains(FILES) {
        vec![editor.render(&base.files(files))]
    } else if editor.contains(FILE) {
        files.iter().map(|f| editor.render(&base.clone().file(f))).collect()
    } else {
        vec![editor.render(&base)]
    };
    let mut warnings = Vec::new();
    for argv in invocations {
        let Some((program, args)) = argv.split_first() else {
            continue;
        };
        match Command::new(program)
            .args(args)
            .current_dir(&solution.source_dir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
        {
            Ok(mut child) => {
                // Reap in the background; the editor may outlive the session.
                thread::spawn(move || {
                    let _ = child.wait();
                });
            }
            Err(e) => warnings.push(format!("editor failed: {program}: {e}")),
        }
    }
    warnings
}

/// Enforces a single active session and logs open/close events.
pub struct Inspector {
    cfg: InspectorConfig,
    events: EventLog,
    phase: Phase,
    active: Option<InspectionSession>,
}

impl Inspector {
    pub fn new(cfg: InspectorConfig, events: EventLog) -> Self {
        Inspector {
            cfg,
            events,
            phase: Phase::Grade,
            active: None,
        }
    }

    /// Phase attributed to the session's log events.
    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn open_session(&mut self, solution: &Solution) -> Result<&InspectionSession, InspectorError> {
        if let Some(active) = &self.active {
            return Err(InspectorError::SessionActive(active.solution_id.clone()));
        }
        let session = InspectionSession::open(solution, &self.cfg);
        self.events.log(
            Level::Info,
            self.phase,
            Some(&solution.id),
            None,
            "inspection session opened",
        );
        for w in &session.warnings {
            self.events
                .log(Level::Warn, self.phase, Some(&solution.id), None, w.clone());
        }
        Ok(self.active.insert(session))
    }

    pub fn active(&self) -> Option<&InspectionSession> {
        self.active.as_ref()
    }

    /// Closes the active session, if any.
    pub fn close_session(&mut self) {
        if let Some(mut session) = self.active.take() {
            session.close();
            self.events.log(
                Level::Info,
                self.phase,
                Some(&session.solution_id),
                None,
                "inspection session closed",
            );
        }
    }
}

impl Drop for Inspector {
    fn drop(&mut self) {
        self.close_session();
    }
}
