//! `t2iat` command-line entry point.
//!
//! Exit codes: 0 success, 2 validation error, 3 I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Options;
use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "t2iat", version, about = "Text-to-image association test runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write prompts.json with the six prompt groups of every test.
    BuildPrompts(Common),
    /// Generate a synthetic store with a planted bias into --out.
    Synth(Common),
    /// Check stores against the T2AT format and write validation.json.
    ValidateStore(Validate),
    /// Run every configured bias test; writes <test>.json and results.csv.
    RunTest(Common),
    /// Occupation gender-association profiles.
    Occupations(Common),
    /// Text versus image association per occupation.
    Amplification(Common),
    /// Rank agreement between machine scores and human ratings.
    HumanCompare(Common),
}

#[derive(Args)]
struct Flags {
    /// Seed for every random draw; recorded in all outputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Strict `>` p-values with the "<1/N" display instead of add-one smoothing.
    #[arg(long)]
    paper_convention: bool,
    /// Number of random permutations (sampled mode).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    permutations: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Validate {
    /// Config whose store paths are validated.
    #[arg(long, required_unless_present = "store")]
    config: Option<PathBuf>,
    /// Store directory or CSV file; may be repeated.
    #[arg(long)]
    store: Vec<PathBuf>,
    #[command(flatten)]
    flags: Flags,
}

impl From<Flags> for Options {
    fn from(f: Flags) -> Self {
        Options {
            seed: f.seed,
            paper_convention: f.paper_convention,
            permutations: f.permutations,
            out: f.out,
        }
    }
}

fn run(cli: Cli) -> t2iat::Result<()> {
    let common = |c: Common| -> t2iat::Result<(RunConfig, Options)> {
        Ok((RunConfig::load(&c.config)?, c.flags.into()))
    };
    match cli.command {
        Command::BuildPrompts(c) => common(c).and_then(|(cfg, o)| commands::build_prompts(&cfg, &o)),
        Command::Synth(c) => common(c).and_then(|(cfg, o)| commands::synth(&cfg, &o)),
        Command::RunTest(c) => common(c).and_then(|(cfg, o)| commands::run_test(&cfg, &o)),
        Command::Occupations(c) => common(c).and_then(|(cfg, o)| commands::occupations(&cfg, &o)),
        Command::Amplification(c) => common(c).and_then(|(cfg, o)| commands::amplification_cmd(&cfg, &o)),
        Command::HumanCompare(c) => common(c).and_then(|(cfg, o)| commands::human_compare(&cfg, &o)),
        Command::ValidateStore(v) => {
            let mut stores = v.store;
            if let Some(path) = &v.config {
                stores.extend(commands::stores_in_config(&RunConfig::load(path)?));
            }
            commands::validate_stores(&stores, &v.flags.into())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("t2iat: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}
