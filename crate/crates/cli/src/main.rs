//! `wbcp`: synthetic data generation, experiment runs, per-point prediction
//! and the validation suite.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use wbcp::WbcpError;

use config::FileConfig;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
    /// At least one validation check failed.
    CheckFailed,
}

impl From<WbcpError> for CliError {
    fn from(e: WbcpError) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "wbcp",
    version,
    about = "Weighted Bayesian conformal prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate the synthetic spatial dataset (synthetic.csv, meta.json).
    Generate(commands::GenerateArgs),
    /// Run conformal methods over a dataset and write report files.
    Experiment(commands::ExperimentArgs),
    /// Threshold posterior and interval at one or more locations.
    Predict(commands::PredictArgs),
    /// Run the empirical validation suite.
    Validate(commands::ValidateArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file: a JSON object or `key = value` lines, keyed by flag name.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, env = "WBCP_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::Generate(a) => &a.common,
            Cmd::Experiment(a) => &a.common,
            Cmd::Predict(a) => &a.common,
            Cmd::Validate(a) => &a.common,
        }
    }
}

/// Parses flags, then fills anything unset from the config file.
fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let cmd = Cli::command();
    let matches = cmd.clone().try_get_matches_from(&args)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let Some(path) = &cli.command.common().config else {
        return Ok(cli);
    };
    let (name, sub_matches) = matches.subcommand().expect("subcommand required");
    let sub = cmd.find_subcommand(name).expect("known subcommand");
    let file = FileConfig::load(path).map_err(|e| config_error(&e))?;
    let mut merged = args;
    file.extend_args(sub, sub_matches, &mut merged)
        .map_err(|e| config_error(&e))?;
    Cli::try_parse_from(merged)
}

fn config_error(e: &CliError) -> clap::Error {
    let msg = match e {
        CliError::Input(m) | CliError::Internal(m) => m.clone(),
        CliError::CheckFailed => String::new(),
    };
    Cli::command().error(clap::error::ErrorKind::ValueValidation, msg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.command.common().threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Cmd::Generate(a) => commands::generate(&a),
        Cmd::Experiment(a) => commands::experiment(&a),
        Cmd::Predict(a) => commands::predict(&a),
        Cmd::Validate(a) => commands::validate(&a),
    }
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Input(m) => eprintln!("error: {m}"),
                CliError::Internal(m) => eprintln!("internal error: {m}"),
                CliError::CheckFailed => eprintln!("validation failed"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flag_beats_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.txt");
        std::fs::write(&path, "alpha = 0.2\nbeta = 0.8\n").unwrap();
        let cli = parse(
            [
                "wbcp",
                "experiment",
                "--alpha",
                "0.05",
                "--config",
                path.to_str().unwrap(),
            ]
            .map(OsString::from)
            .to_vec(),
        )
        .unwrap();
        let Cmd::Experiment(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.method.alpha, 0.05);
        assert_eq!(a.method.beta, 0.8);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"alpah": 0.2}"#).unwrap();
        let err = parse(
            ["wbcp", "experiment", "--config", path.to_str().unwrap()]
                .map(OsString::from)
                .to_vec(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("alpah"));
    }
}
