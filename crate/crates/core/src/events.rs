// SPDX-License-Identifier: Apache-2.0

//! Structured run log: one line per event, mirrored to `events.log`.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::SecondsFormat;

use crate::model::now_millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Info,
    Warn,
    Error,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Info => "INFO",
            Level::Warn => "WARN",
            Level::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Config,
    Compile,
    Validate,
    Restore,
    Grade,
    Report,
    Merge,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Config => "config",
            Phase::Compile => "compile",
            Phase::Validate => "validate",
            Phase::Restore => "restore",
            Phase::Grade => "grade",
            Phase::Report => "report",
            Phase::Merge => "merge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub level: Level,
    pub phase: Phase,
    pub solution: Option<String>,
    pub check: Option<String>,
    pub message: String,
}

impl Event {
    /// Tab-separated `level phase solution check message`; `-` marks absent fields.
    pub fn to_line(&self) -> String {
        let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.level,
            self.phase,
            self.solution.as_deref().map(clean).unwrap_or_else(|| "-".into()),
            self.check.as_deref().map(clean).unwrap_or_else(|| "-".into()),
            clean(&self.message)
        )
    }
}

#[derive(Default)]
struct Inner {
    events: Vec<Event>,
    file: Option<File>,
    console: Option<Box<dyn Write + Send>>,
}

/// Shared, thread-safe event sink.
#[derive(Clone, Default)]
pub struct EventLog {
    inner: Arc<Mutex<Inner>>,
}

impl fmt::Debug for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventLog")
            .field("events", &self.inner.lock().unwrap().events.len())
            .finish()
    }
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Echoes WARN and ERROR events to `console`.
    pub fn with_console(self, console: Box<dyn Write + Send>) -> Self {
        self.inner.lock().unwrap().console = Some(console);
        self
    }

    /// Starts mirroring to `path`, replaying events recorded so far.
    pub fn attach_file(&self, path: &Path) -> io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut file = File::create(path)?;
        let mut inner = self.inner.lock().unwrap();
        for e in &inner.events {
            writeln!(file, "{}\t{}", stamp(), e.to_line())?;
        }
        inner.file = Some(file);
        Ok(())
    }

    pub fn record(&self, event: Event) {
        let mut inner = self.inner.lock().unwrap();
        let line = event.to_line();
        if let Some(file) = inner.file.as_mut() {
            let _ = writeln!(file, "{}\t{}", stamp(), line);
        }
        if event.level >= Level::Warn {
            if let Some(console) = inner.console.as_mut() {
                let _ = writeln!(console, "{line}");
            }
        }
        inner.events.push(event);
    }

    pub fn log(
        &self,
        level: Level,
        phase: Phase,
        solution: Option<&str>,
        check: Option<&str>,
        message: impl Into<String>,
    ) {
        self.record(Event {
            level,
            phase,
            solution: solution.map(str::to_owned),
            check: check.map(str::to_owned),
            message: message.into(),
        });
    }

    pub fn info(&self, phase: Phase, message: impl Into<String>) {
        self.log(Level::Info, phase, None, None, message);
    }

    pub fn warn(&self, phase: Phase, message: impl Into<String>) {
        self.log(Level::Warn, phase, None, None, message);
    }

    pub fn error(&self, phase: Phase, message: impl Into<String>) {
        self.log(Level::Error, phase, None, None, message);
    }

    pub fn events(&self) -> Vec<Event> {
        self.inner.lock().unwrap().events.clone()
    }

    pub fn has_errors(&self) -> bool {
        self.inner
            .lock()
            .unwrap()
            .events
            .iter()
            .any(|e| e.level == Level::Error)
    }

    pub fn count(&self, level: Level) -> usize {
        self.inner
            .lock()
            .unwrap()
            .events
            .iter()
            .filter(|e| e.level == level)
            .count()
    }
}

fn stamp() -> String {
    now_millis().to_rfc3339_opts(SecondsFormat::Millis, true)
}
