use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = seqrand::cli::Cli::parse();
    ExitCode::from(seqrand::cli::main_with(&cli))
}
