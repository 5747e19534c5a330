// SPDX-License-Identifier: Apache-2.0

//! Command templates and subprocess execution with wall-clock timeouts.
//!
//! Every command runs as an argument vector (no shell) in its own process
//! group, so a timeout or teardown can kill helpers the command spawned.

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SOLUTION_DIR: &str = "{solution_dir}";
pub const TEST_CLASS: &str = "{test_class}";
pub const FILE: &str = "{file}";
pub const FILES: &str = "{files}";

/// An argument vector with `{placeholder}` substitution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommandTemplate(Vec<String>);

impl CommandTemplate {
    pub fn new<I, S>(args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CommandTemplate(args.into_iter().map(Into::into).collect())
    }

    /// Splits on whitespace; used for the editor override variable.
    pub fn from_whitespace(s: &str) -> Self {
        CommandTemplate::new(s.split_whitespace())
    }

    pub fn args(&self) -> &[String] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, placeholder: &str) -> bool {
        self.0.iter().any(|a| a.contains(placeholder))
    }

    /// Substitutes placeholders verbatim. An argument that is exactly
    /// `{files}` expands into one argument per file.
    pub fn render(&self, vars: &Substitutions) -> Vec<String> {
        let mut out = Vec::with_capacity(self.0.len());
        for arg in &self.0 {
            if arg == FILES {
                out.extend(vars.files.iter().cloned());
                continue;
            }
            let mut rendered = arg.clone();
            for (key, value) in &vars.values {
                if rendered.contains(key.as_str()) {
                    rendered = rendered.replace(key.as_str(), value);
                }
            }
            if rendered.contains(FILES) {
                rendered = rendered.replace(FILES, &vars.files.join(" "));
            }
            out.push(rendered);
        }
        out
    }
}

/// Placeholder values for [`CommandTemplate::render`].
#[derive(Debug, Clone, Default)]
pub struct Substitutions {
    values: BTreeMap<String, String>,
    files: Vec<String>,
}

impl Substitutions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solution_dir(mut self, dir: &Path) -> Self {
        self.values.insert(SOLUTION_DIR.to_owned(), dir.display().to_string());
        self
    }

    pub fn test_class(mut self, class: &str) -> Self {
        self.values.insert(TEST_CLASS.to_owned(), class.to_owned());
        self
    }

    pub fn file(mut self, file: &Path) -> Self {
        self.values.insert(FILE.to_owned(), file.display().to_string());
        self
    }

    pub fn files(mut self, files: &[PathBuf]) -> Self {
        self.files = files.iter().map(|f| f.display().to_string()).collect();
        self
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("empty command")]
    Empty,
    #[error("command not found: {0}")]
    NotFound(String),
    #[error("failed to spawn '{program}': {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error("failed waiting for '{program}': {source}")]
    Wait {
        program: String,
        #[source]
        source: io::Error,
    },
}

/// Captured result of one finished (or killed) command.
#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub stdout: String,
    pub stderr: String,
    /// `None` when the process was killed by a signal.
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub duration: Duration,
}

impl ProcessOutput {
    pub fn success(&self) -> bool {
        self.exit_code == Some(0)
    }
}

/// Executes commands and counts launches.
#[derive(Debug, Clone, Default)]
pub struct CommandRunner {
    launches: Arc<AtomicU64>,
}

const POLL_INTERVAL: Duration = Duration::from_millis(5);
const READER_GRACE: Duration = Duration::from_secs(1);

impl CommandRunner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of processes spawned through this runner (and its clones).
    pub fn launches(&self) -> u64 {
        self.launches.load(Ordering::SeqCst)
    }

    /// Runs `argv` in `cwd`, killing its whole process group once `timeout` elapses.
    pub fn run(&self, argv: &[String], cwd: &Path, timeout: Option<Duration>) -> Result<ProcessOutput, CommandError> {
        let program = argv.first().ok_or(CommandError::Empty)?;
        let mut cmd = Command::new(program);
        cmd.args(&argv[1..])
            .current_dir(cwd)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        let start = Instant::now();
        let mut child = spawn(&mut cmd, program)?;
        self.launches.fetch_add(1, Ordering::SeqCst);

        let stdout = capture(child.stdout.take());
        let stderr = capture(child.stderr.take());

        let deadline = timeout.map(|t| start + t);
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {}
                Err(source) => {
                    kill_group(child.id(), libc::SIGKILL);
                    return Err(CommandError::Wait {
                        program: program.clone(),
                        source,
                    });
                }
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                timed_out = true;
                kill_group(child.id(), libc::SIGKILL);
                break child.wait().map_err(|source| CommandError::Wait {
                    program: program.clone(),
                    source,
                })?;
            }
            thread::sleep(POLL_INTERVAL);
        };
        let duration = start.elapsed();
        // Stragglers left in the group would keep the pipes open.
        kill_group(child.id(), libc::SIGKILL);

        Ok(ProcessOutput {
            stdout: stdout.finish(),
            stderr: stderr.finish(),
            exit_code: exit_code(status),
            timed_out,
            duration,
        })
    }
}

fn spawn(cmd: &mut Command, program: &str) -> Result<Child, CommandError> {
    cmd.spawn().map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            CommandError::NotFound(program.to_owned())
        } else {
            CommandError::Spawn {
                program: program.to_owned(),
                source,
            }
        }
    })
}

fn exit_code(status: ExitStatus) -> Option<i32> {
    status.code()
}

/// Sends `signal` to the process group led by `pid`. Errors are ignored:
/// the group may already be gone.
pub fn kill_group(pid: u32, signal: libc::c_int) {
    let Ok(pgid) = libc::pid_t::try_from(pid) else {
        return;
    };
    // SAFETY: killpg has no memory-safety preconditions.
    unsafe {
        libc::killpg(pgid, signal);
    }
}

/// Whether any non-zombie process in the group led by `pid` is still running.
pub fn group_alive(pid: u32) -> bool {
    let Ok(pgid) = libc::pid_t::try_from(pid) else {
        return false;
    };
    // SAFETY: signal 0 performs only the existence/permission check.
    if unsafe { libc::killpg(pgid, 0) } != 0 {
        return false;
    }
    // killpg also succeeds for zombies nobody has reaped yet; /proc tells them apart.
    match std::fs::read_dir("/proc") {
        Ok(entries) => entries.flatten().any(|e| {
            e.file_name()
                .to_str()
                .is_some_and(|name| name.bytes().all(|b| b.is_ascii_digit()))
                && std::fs::read_to_string(e.path().join("stat"))
                    .ok()
                    .and_then(|stat| parse_stat(&stat))
                    .is_some_and(|(state, group)| group == pgid && state != 'Z' && state != 'X')
        }),
        Err(_) => true,
    }
}

/// `(state, process group)` from a `/proc/<pid>/stat` line.
fn parse_stat(stat: &str) -> Option<(char, libc::pid_t)> {
    // The command name may contain spaces and parentheses; fields resume after the last ')'.
    let rest = &stat[stat.rfind(')')? + 1..];
    let mut fields = rest.split_whitespace();
    let state = fields.next()?.chars().next()?;
    let _ppid = fields.next()?;
    let pgrp = fields.next()?.parse().ok()?;
    Some((state, pgrp))
}

/// Background reader that keeps whatever was produced before a kill.
struct Capture {
    buf: Arc<Mutex<Vec<u8>>>,
    handle: Option<JoinHandle<()>>,
}

fn capture<R: Read + Send + 'static>(source: Option<R>) -> Capture {
    let buf = Arc::new(Mutex::new(Vec::new()));
    let handle = source.map(|mut r| {
        let sink = Arc::clone(&buf);
        thread::spawn(move || {
            let mut chunk = [0u8; 8192];
            loop {
                match r.read(&mut chunk) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => sink.lock().unwrap().extend_from_slice(&chunk[..n]),
                }
            }
        })
    });
    Capture { buf, handle }
}

impl Capture {
    fn finish(mut self) -> String {
        if let Some(handle) = self.handle.take() {
            let until = Instant::now() + READER_GRACE;
            while !handle.is_finished() && Instant::now() < until {
                thread::sleep(POLL_INTERVAL);
            }
            if handle.is_finished() {
                let _ = handle.join();
            }
        }
        let bytes = self.buf.lock().unwrap();
        String::from_utf8_lossy(&bytes).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn render_substitutes_verbatim() {
        let t = CommandTemplate::new(["run", "--dir={solution_dir}", "{test_class}", "$HOME"]);
        let vars = Substitutions::new()
            .solution_dir(Path::new("/s/alice"))
            .test_class("TestA");
        assert_eq!(t.render(&vars), ["run", "--dir=/s/alice", "TestA", "$HOME"]);
    }

    #[test]
    fn render_expands_file_list() {
        let t = CommandTemplate::new(["edit", "{files}"]);
        let vars = Substitutions::new().files(&[PathBuf::from("a.rs"), PathBuf::from("b.rs")]);
        assert_eq!(t.render(&vars), ["edit", "a.rs", "b.rs"]);
    }

    #[test]
    fn runs_and_captures() {
        let runner = CommandRunner::new();
        let out = runner
            .run(&sh("echo hi; echo err >&2; exit 3"), Path::new("/"), None)
            .unwrap();
        assert_eq!(out.stdout, "hi\n");
        assert_eq!(out.stderr, "err\n");
        assert_eq!(out.exit_code, Some(3));
        assert!(!out.timed_out);
        assert_eq!(runner.launches(), 1);
    }

    #[test]
    fn missing_binary() {
        let err = CommandRunner::new()
            .run(&["/definitely/not/here".to_owned()], Path::new("/"), None)
            .unwrap_err();
        assert!(matches!(err, CommandError::NotFound(_)));
    }

    #[test]
    fn timeout_keeps_partial_output() {
        let start = Instant::now();
        let out = CommandRunner::new()
            .run(
                &sh("echo early; sleep 30; echo late"),
                Path::new("/"),
                Some(Duration::from_millis(300)),
            )
            .unwrap();
        assert!(out.timed_out);
        assert_eq!(out.stdout, "early\n");
        assert!(start.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn timeout_kills_grandchildren() {
        let out = CommandRunner::new()
            .run(
                &sh("sleep 30 & sleep 30; wait"),
                Path::new("/"),
                Some(Duration::from_millis(200)),
            )
            .unwrap();
        assert!(out.timed_out);
        assert!(out.duration < Duration::from_secs(2));
    }
}
