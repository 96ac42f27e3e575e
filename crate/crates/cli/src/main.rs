use std::io::Write;
use std::process::ExitCode;

use avitrack_cli::{run, Cli, CliError};
use clap::error::ErrorKind;
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp
            | ErrorKind::DisplayVersion
            | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => e.exit(),
            _ => {
                let text = e.to_string();
                let first = text.lines().next().unwrap_or("invalid arguments");
                let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
                eprintln!("{}", err.to_json_line());
                return ExitCode::from(err.exit_code());
            }
        },
    };
    match run(&cli) {
        Ok(report) => {
            let line = serde_json::to_string(&report).expect("report serializes");
            // a closed stdout is not a failure; the artifacts are on disk
            let _ = writeln!(std::io::stdout(), "{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code())
        }
    }
}
