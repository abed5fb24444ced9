use std::process::ExitCode;

use clap::Parser;
use spotcheck_cli::{run, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "spotcheck", version, about = "Spot-checking mechanisms for peer grading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = RunConfig::resolve(&cli.overrides).and_then(|cfg| run(cli.command, &cfg));
    match outcome {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("spotcheck: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
