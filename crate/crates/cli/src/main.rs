mod cli;
mod commands;
mod config;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use crate::cli::Cli;
use crate::config::Resolved;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = cli.command.args();
    let resolved = match Resolved::resolve(cli.command.name(), &args.common, &args.network) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("linecode: config error: {e}");
            return ExitCode::from(2);
        }
    };
    let output = match commands::run(&resolved) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("linecode: {e}");
            return ExitCode::from(2);
        }
    };
    let written = match &resolved.out {
        Some(path) => {
            std::fs::write(path, &output.text).map_err(|e| format!("{}: {e}", path.display()))
        }
        None => std::io::stdout()
            .write_all(output.text.as_bytes())
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("linecode: {e}");
        return ExitCode::from(2);
    }
    if output.failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
