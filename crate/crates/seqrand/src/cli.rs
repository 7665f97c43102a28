//! The `seqrand` command line.
//!
//! Each command reads one JSON config, computes a table and writes it to
//! `--out` (or stdout). Exit codes: 0 on success, 1 when a check fails, 2 on
//! any configuration or I/O error. On a failed check the table is still
//! written.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::report::{
    bound_report, bound_table, lower_bound_table, mixability_table, variance_table, Format, LowerBoundConfig,
    MixabilityConfig, RowStatus, RunConfig, Table, VarianceCheckConfig,
};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "seqrand", version, about = "Sequential randomized aggregation experiments and bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mixability constants per loss, closed form and numeric.
    Mixability(CommonArgs),
    /// Checks the variance inequality over configured samples.
    VarianceCheck(CommonArgs),
    /// Monte-Carlo excess risk against upper and lower bounds.
    Run(CommonArgs),
    /// Hypercube lower bounds, exact and closed form.
    LowerBound(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; required by `run`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; the table goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Mixability(a) | Command::VarianceCheck(a) | Command::Run(a) | Command::LowerBound(a) => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Mixability(_) => "mixability",
            Command::VarianceCheck(_) => "variance-check",
            Command::Run(_) => "run",
            Command::LowerBound(_) => "lower-bound",
        }
    }
}

/// A computed table plus the failed checks it revealed.
#[derive(Debug)]
pub struct CommandOutput {
    pub table: Table,
    pub failures: Vec<String>,
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Validates the config and computes the command's table.
pub fn compute(command: &Command) -> Result<CommandOutput, Error> {
    let args = command.args();
    match command {
        Command::Mixability(_) => {
            let cfg: MixabilityConfig = read_config(&args.config)?;
            Ok(CommandOutput { table: mixability_table(&cfg)?, failures: Vec::new() })
        }
        Command::VarianceCheck(_) => {
            let cfg: VarianceCheckConfig = read_config(&args.config)?;
            let (table, failures) = variance_table(&cfg)?;
            Ok(CommandOutput { table, failures })
        }
        Command::Run(_) => {
            let cfg: RunConfig = read_config(&args.config)?;
            let seed = args.seed.ok_or_else(|| Error::Config("`run` needs --seed".into()))?;
            let rows = bound_report(&cfg, seed)?;
            let failures = rows
                .iter()
                .filter(|r| r.status == RowStatus::Violated)
                .map(|r| format!("{} n={}: bound sandwich violated", r.setting, r.n))
                .collect();
            Ok(CommandOutput { table: bound_table(&rows), failures })
        }
        Command::LowerBound(_) => {
            let cfg: LowerBoundConfig = read_config(&args.config)?;
            Ok(CommandOutput { table: lower_bound_table(&cfg)?, failures: Vec::new() })
        }
    }
}

/// Runs the command, writes its output and returns the exit code.
pub fn main_with(cli: &Cli) -> u8 {
    let args = cli.command.args();
    let result = compute(&cli.command).and_then(|out| {
        let text = out.table.render(args.format, args.seed)?;
        match &args.out {
            Some(path) => {
                fs::write(path, text)?;
                println!(
                    "{}: {} rows written to {}",
                    cli.command.name(),
                    out.table.rows.len(),
                    path.display()
                );
            }
            None => print!("{text}"),
        }
        Ok(out.failures)
    });
    match result {
        Ok(failures) if failures.is_empty() => 0,
        Ok(failures) => {
            for f in &failures {
                eprintln!("seqrand: {f}");
            }
            1
        }
        Err(e) => {
            eprintln!("seqrand: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["seqrand", "run", "--config", "c.json", "--seed", "7", "--format", "json"]).unwrap();
        assert_eq!(cli.command.name(), "run");
        assert_eq!(cli.command.args().seed, Some(7));
        assert_eq!(cli.command.args().format, Format::Json);
        let cli = Cli::try_parse_from(["seqrand", "lower-bound", "--config", "c.json"]).unwrap();
        assert_eq!(cli.command.args().format, Format::Csv);
        assert!(Cli::try_parse_from(["seqrand", "mixability"]).is_err());
        assert!(Cli::try_parse_from(["seqrand", "train", "--config", "c.json"]).is_err());
    }

    #[test]
    fn run_requires_seed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, "{}").unwrap();
        let cli = Cli::try_parse_from(["seqrand", "run", "--config", path.to_str().unwrap()]).unwrap();
        assert!(matches!(compute(&cli.command), Err(Error::Config(_))));
    }

    #[test]
    fn missing_config_exits_two() {
        let cli = Cli::try_parse_from(["seqrand", "mixability", "--config", "/nonexistent/seqrand.json"]).unwrap();
        assert_eq!(main_with(&cli), 2);
    }
}
