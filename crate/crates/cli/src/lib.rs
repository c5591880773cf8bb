//! `lanekeep` command-line front end.
//!
//! [`run`] parses arguments, executes one command and returns the process exit code:
//! 0 on success, 1 for usage errors, 2 for runtime failures.

pub mod compare;
pub mod controllers;
pub mod settings;
pub mod tracks;

mod commands;

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use settings::{ControllerKind, RunFlags, Toggle};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "lanekeep", version, about = "Lateral vehicle control: train, evaluate and compare steering controllers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a DDPG agent; writes a checkpoint and `training_log.csv` into --out.
    Train(RunFlags),
    /// Score a controller over one or more episodes; --out receives the step trace CSV.
    Eval(RunFlags),
    /// Score LQR, MPC and DDPG over the preset matrix with a seed bank.
    Compare(RunFlags),
    /// Serve the environment over TCP on 127.0.0.1.
    Serve {
        #[command(flatten)]
        flags: RunFlags,
        /// Exit after this many sessions instead of serving forever.
        #[arg(long)]
        sessions: Option<u64>,
    },
    /// List, emit or validate tracks.
    Tracks {
        #[command(subcommand)]
        action: tracks::TracksCommand,
    },
}

/// Runs the CLI with explicit output streams; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Train(f) => commands::train(&f.resolve()?, out),
        Command::Eval(f) => commands::eval(&f.resolve()?, out),
        Command::Compare(f) => compare::cmd_compare(&f.resolve()?, out),
        Command::Serve { flags, sessions } => commands::serve(&flags.resolve()?, sessions, out),
        Command::Tracks { action } => tracks::cmd_tracks(action, out),
    }
}
