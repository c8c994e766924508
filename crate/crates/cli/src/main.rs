//! Command-line front-end: reads a `[section]`/`key = value` config,
//! runs one experiment, and writes `report.json`, CSV tables, and
//! `manifest.json` into the output directory.
//!
//! Exit codes: 0 when the experiment verdict is pass, 1 on a fail verdict,
//! 2 on errors or an inconclusive verdict.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use stabledom::config::{self, Command};
use stabledom::report::{self, Manifest};
use stabledom::{experiments, Error, Result, Verdict};

#[derive(Parser)]
#[command(
    name = "stabledom",
    version,
    about = "Heat-kernel experiments for truncated heavy-tailed jump kernels"
)]
struct Cli {
    /// Experiment to run: check-assumptions, iterate, density, simulate,
    /// verify-bounds, or sweep-s3.
    command: String,

    /// Path to the experiment config file.
    #[arg(long)]
    config: PathBuf,

    /// Output directory; defaults to the config's [output] dir key.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Overrides the seed from the config's [run] section.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(cli: &Cli) -> Result<Verdict> {
    let command: Command = cli.command.parse()?;
    let text = fs::read_to_string(&cli.config).map_err(|e| {
        Error::InvalidParam(format!("cannot read config {}: {e}", cli.config.display()))
    })?;
    let mut cfg = config::parse(command, &text)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }

    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    fs::create_dir_all(&out_dir).map_err(|e| {
        Error::InvalidParam(format!("cannot create {}: {e}", out_dir.display()))
    })?;

    let outcome = experiments::run(&cfg)?;
    report::write_json(&out_dir, "report.json", &outcome.report)?;
    for (name, body) in &outcome.tables {
        report::write_csv(&out_dir, name, body)?;
    }
    let manifest = Manifest::new(command.name(), &text, cfg.run.seed);
    report::write_json(&out_dir, "manifest.json", &manifest)?;

    let label = match outcome.verdict {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Inconclusive => "inconclusive",
    };
    println!("{command}: {label} (artifacts in {})", out_dir.display());
    Ok(outcome.verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Verdict::Pass) => ExitCode::from(0),
        Ok(Verdict::Fail) => ExitCode::from(1),
        Ok(Verdict::Inconclusive) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
