//! `tightbind`: run lattice scenarios, compare them against the direct
//! integrator, sample quasienergy bands and map localisation points.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod build;
mod config;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use tightbind::Exec;

use crate::output::OutputDir;
use crate::pipeline::{Job, Verdict};

#[derive(Parser)]
#[command(name = "tightbind", version, about = "Driven tight-binding lattice scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form outputs listed in the scenario (plus the oracle check if enabled).
    Run(Common),
    /// Closed form vs direct integration at checkpoint times.
    Compare(Common),
    /// Quasienergy band, with the monodromy check if the oracle is enabled.
    Band(Common),
    /// Drift rate γ_n over a sweep of f₁/ω.
    LocalizationMap(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (.toml, or .json)
    config: PathBuf,
    /// Parent directory for outputs; each scenario writes to `<out-dir>/<name>`.
    #[arg(long, env = "TIGHTBIND_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the oracle comparison tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Evaluate grids on one thread.
    #[arg(long)]
    sequential: bool,
}

fn execute(command: Command) -> Result<Verdict> {
    let (common, action): (Common, fn(&mut Job) -> Result<Verdict>) = match command {
        Command::Run(c) => (c, pipeline::run),
        Command::Compare(c) => (c, pipeline::compare),
        Command::Band(c) => (c, pipeline::band),
        Command::LocalizationMap(c) => (c, pipeline::localization_map),
    };
    let mut loaded = config::load(&common.config)?;
    if let Some(seed) = common.seed {
        loaded.scenario.seed = seed;
    }
    if let Some(tol) = common.tolerance {
        loaded.scenario.oracle.tolerance = tol;
    }
    loaded.validate()?;
    let model = build::build(&loaded)?;
    let s = &loaded.scenario;
    let out = OutputDir::create(&common.out_dir.join(&s.name), &s.name, &s.hash())?;
    let mut job = Job {
        loaded: &loaded,
        model,
        out,
        exec: if common.sequential { Exec::Sequential } else { Exec::default() },
    };
    let verdict = action(&mut job)?;
    eprintln!("{}: wrote {} files to {}", s.name, job.out.written().len(), job.out.root().display());
    Ok(verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Diverged) => {
            eprintln!("error: closed form and oracle disagree beyond tolerance");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
