//! `acoustolab`: runs one experiment from a JSON config and writes CSV data
//! plus a JSON summary into the output directory.
//!
//! Exit status: 0 on success, 2 when `--expect` does not match the computed
//! verdict, 1 on any error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use acoustolab::ExperimentConfig;
use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use crate::output::Summary;

#[derive(Debug, Parser)]
#[command(name = "acoustolab", version, about = "Damped acoustic system lab")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for parallel sweeps and sampling.
    #[arg(long, global = true, env = "ACOUSTOLAB_WORKERS")]
    workers: Option<usize>,

    /// Exit with status 2 unless the verdict matches.
    #[arg(long, global = true, value_enum)]
    expect: Option<Expect>,

    /// Also write the assembled operator as `matrix.txt`.
    #[arg(long, global = true)]
    dump_matrix: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Expect {
    Satisfied,
    Violated,
    Bounded,
}

impl Expect {
    pub fn as_str(self) -> &'static str {
        match self {
            Expect::Satisfied => "satisfied",
            Expect::Violated => "violated",
            Expect::Bounded => "bounded",
        }
    }
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Time-step the damped system and fit the decay rate.
    Simulate,
    /// Resolvent norm over a frequency grid.
    ResolventSweep,
    /// Near-null vector of `A_d - i mu`.
    Quasimode,
    /// Trace sampled generalized rays.
    Rays,
    /// Check the geometric control condition.
    Gcc,
    /// Phase-space diagnostics of quasimodes.
    Husimi,
    /// Write the operator triplets.
    DumpMatrix,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ResolventSweep => "resolvent-sweep",
            Command::Quasimode => "quasimode",
            Command::Rays => "rays",
            Command::Gcc => "gcc",
            Command::Husimi => "husimi",
            Command::DumpMatrix => "dump-matrix",
        }
    }

    fn accepts(self, e: Expect) -> bool {
        match self {
            Command::Gcc => matches!(e, Expect::Satisfied | Expect::Violated),
            Command::ResolventSweep => e == Expect::Bounded,
            _ => false,
        }
    }
}

pub struct RunContext {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub expect: Option<Expect>,
    pub dump_matrix: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// `Ok(false)` signals a verdict mismatch.
fn run(cli: Cli) -> anyhow::Result<bool> {
    let started = Instant::now();
    let Some(path) = &cli.config else { bail!("--config PATH is required") };
    let config = ExperimentConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let command = cli.command;
    if let Some(e) = cli.expect {
        if !command.accepts(e) {
            bail!("--expect {} does not apply to `{}`", e.as_str(), command.name());
        }
    }
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let ctx = RunContext { config, out, expect: cli.expect, dump_matrix: cli.dump_matrix };
    let mut summary = Summary::new(command.name(), &ctx.config, rayon::current_num_threads());
    let result = match command {
        Command::Simulate => commands::simulate(&ctx, &mut summary),
        Command::ResolventSweep => commands::resolvent_sweep(&ctx, &mut summary),
        Command::Quasimode => commands::quasimode(&ctx, &mut summary),
        Command::Rays => commands::rays(&ctx, &mut summary),
        Command::Gcc => commands::gcc(&ctx, &mut summary),
        Command::Husimi => commands::husimi(&ctx, &mut summary),
        Command::DumpMatrix => commands::dump_matrix(&ctx, &mut summary),
    };
    summary.timing("total", started);
    let verdict_ok = match &result {
        Ok(verdict) => {
            let ok = match (ctx.expect, verdict) {
                (Some(e), Some(v)) => e.as_str() == v,
                (Some(_), None) => false,
                (None, _) => true,
            };
            summary.finish(if ok { "ok" } else { "verdict_failure" }, verdict.as_deref(), None);
            ok
        }
        Err(e) => {
            summary.finish("error", None, Some(format!("{e:#}")));
            false
        }
    };
    summary.write(&ctx.out)?;
    result.map(|_| verdict_ok)
}
