mod args;
mod run;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use run::UsageError;

/// Exit code and error kind for a failed run.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return (2, "usage");
        }
        if let Some(e) = cause.downcast_ref::<doorsim_core::Error>() {
            use doorsim_core::Error as E;
            match e {
                E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => return (3, "missing_file"),
                E::Io { .. } => return (1, "io"),
                E::Schema { .. } | E::Version { .. } | E::Range { .. } | E::Checkpoint(_) => return (4, "schema"),
                E::NumericalBlowup { .. } => return (5, "numerical_blowup"),
                E::Contract(_) => return (2, "usage"),
                E::Episode { .. } => continue,
            }
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == std::io::ErrorKind::NotFound {
                return (3, "missing_file");
            }
        }
        if cause.is::<serde_json::Error>() {
            return (4, "schema");
        }
    }
    (1, "error")
}

/// Error chain joined with `: `, skipping causes already spelled out by
/// their parent.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn emit(code: u8, kind: &str, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "exit_code": code, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Gen(a) => run::cmd_gen(a),
        Command::Train(a) => run::cmd_train(a),
        Command::Eval(a) => run::cmd_eval(a),
        Command::Replay(a) => run::cmd_replay(a),
        Command::Config(a) => run::cmd_config(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            _ => return emit(2, "usage", e.to_string().trim_end()),
        },
    };
    let result = match cli.threads {
        Some(0) => Err(UsageError("--threads must be at least 1".into()).into()),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(e.into()),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            emit(code, kind, &message(&err))
        }
    }
}
