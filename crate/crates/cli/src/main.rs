//! Command-line front end: classify, reduce, lyap, sweep and cf.

mod job;
mod output;

use std::process::ExitCode;

use clap::Parser;

use job::{Cli, Failure};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| job::run(&cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Precondition(body))) => {
            emit_error(&cli, &body);
            ExitCode::from(2)
        }
        Ok(Err(Failure::Internal(body))) => {
            emit_error(&cli, &body);
            ExitCode::from(1)
        }
        Err(_) => {
            let body = serde_json::json!({"status": "internal_error", "reason": "panic"});
            emit_error(&cli, &body);
            ExitCode::from(1)
        }
    }
}

fn emit_error(cli: &Cli, body: &serde_json::Value) {
    let text = serde_json::to_string_pretty(body).expect("json value");
    eprintln!("almred: {}", body["message"].as_str().unwrap_or("failed"));
    if let Err(e) = output::write_text(cli.common().out.as_deref(), &text) {
        eprintln!("almred: cannot write output: {e}");
    }
}
