// SPDX-License-Identifier: Apache-2.0

use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand};

use gradekit::config::Mode;
use gradekit::events::EventLog;
use gradekit::inspector::Console;
use gradekit::model::now_millis;
use gradekit::pipeline::{cmd_merge, cmd_report, cmd_run, Interaction, RunRequest, EXIT_USAGE};
use gradekit::prompt::LinePrompter;
use gradekit::session::{serve, spawn_terminal_reader, HubPrompter, SessionHub, DEFAULT_PORT};

const EDITOR_ENV: &str = "GRADEKIT_EDITOR";

#[derive(Parser)]
#[command(
    name = "gradekit",
    version,
    about = "Hybrid automated and manual grading of programming assignments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile, validate checks, grade and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checks: PathBuf,
        /// auto, manual or all
        #[arg(long)]
        mode: Option<Mode>,
        /// Also serve the grading session on 127.0.0.1.
        #[arg(long)]
        serve: bool,
        #[arg(long, default_value_t = DEFAULT_PORT, requires = "serve")]
        port: u16,
    },
    /// Combine result directories from several graders.
    Merge {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Rebuild the CSV reports from stored results.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checks: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(config: PathBuf, checks: PathBuf, mode: Option<Mode>, serve_port: Option<u16>, events: &EventLog) -> i32 {
    let request = RunRequest {
        config,
        checks,
        mode,
        editor_override: std::env::var(EDITOR_ENV).ok(),
    };
    let console: Console = Arc::new(Mutex::new(io::stdout()));

    let summary = match serve_port {
        None => {
            let stdin = io::stdin();
            let mut prompter = LinePrompter::new(stdin.lock(), io::stdout());
            let interaction = Interaction {
                prompter: Some(&mut prompter),
                hub: None,
                console: Some(console),
            };
            cmd_run(&request, interaction, events)
        }
        Some(port) => {
            let run_id = now_millis().format("%Y%m%dT%H%M%S%.3fZ").to_string();
            let hub = SessionHub::new(run_id);
            let server = match serve(Arc::clone(&hub), port) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("cannot serve on 127.0.0.1:{port}: {e}");
                    return EXIT_USAGE;
                }
            };
            eprintln!("grading session at http://{}/", server.addr());
            spawn_terminal_reader(Arc::clone(&hub), BufReader::new(io::stdin()), Arc::clone(&console));
            let mut prompter = HubPrompter::new(Arc::clone(&hub), Arc::clone(&console));
            let interaction = Interaction {
                prompter: Some(&mut prompter),
                hub: Some(hub),
                console: Some(console),
            };
            let summary = cmd_run(&request, interaction, events);
            drop(server);
            summary
        }
    };

    if summary.paused {
        eprintln!("paused; run the same command again to resume");
    } else if let Some(paths) = &summary.reports {
        eprintln!("grades written to {}", paths.grades.display());
    }
    summary.exit_code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let events = EventLog::new().with_console(Box::new(io::stderr()));
    let code = match cli.command {
        Command::Run {
            config,
            checks,
            mode,
            serve,
            port,
        } => run(config, checks, mode, serve.then_some(port), &events),
        Command::Merge { inputs, output } => cmd_merge(&inputs, &output, &events),
        Command::Report {
            config,
            checks,
            results,
            output,
        } => cmd_report(&config, &checks, &results, &output, &events),
    };
    ExitCode::from(code as u8)
}
