//! `wordsynth`: dataset generation, vocabulary building, training,
//! evaluation, ablation, encoding dumps and single-sample inspection.

mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wordsynth::Error;

use args::Command;

#[derive(Debug, Parser)]
#[command(name = "wordsynth", version, about = "Synthetic word images and whole-word recognisers", args_conflicts_with_subcommands = true)]
struct Cli {
    /// Re-run a command from a resolved `run.toml` written by an earlier run.
    #[arg(long, value_name = "FILE")]
    replay: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

/// Failure classes with distinct exit codes.
pub enum Failure {
    Usage(String),
    Io(String),
    Config(String),
    HeadMismatch(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Config(_) => 4,
            Failure::HeadMismatch(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Config(m) | Failure::HeadMismatch(m) | Failure::Other(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Image(_) | Error::Checkpoint(_) => Failure::Io(msg),
            Error::Config(_)
            | Error::Parse { .. }
            | Error::InvalidWord { .. }
            | Error::EmptyLexicon
            | Error::OutOfLexicon(_)
            | Error::MissingPalettes(_)
            | Error::MissingNaturalCrops
            | Error::NoClusterSources
            | Error::Font(_)
            | Error::MissingGlyph { .. } => Failure::Config(msg),
            Error::HeadMismatch { .. } => Failure::HeadMismatch(msg),
            _ => Failure::Other(msg),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let first = e.to_string().lines().next().unwrap_or("usage error").to_string();
            eprintln!("{first}");
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let command = match (cli.replay, cli.command) {
        (Some(path), _) => commands::load_run_config(&path),
        (None, Some(c)) => Ok(c),
        (None, None) => Err(Failure::Usage("error: a subcommand or --replay is required".into())),
    };
    match command.and_then(commands::run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.message().replace('\n', " ");
            if msg.starts_with("error:") {
                eprintln!("{msg}");
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(f.code())
        }
    }
}
