mod commands;
mod recipe;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{Ctx, Flags};
use recipe::Recipe;
use report::Out;

/// Derived-from-Anosov torus maps: cone certification, semiconjugacy, fibers
/// and mixing experiments.
///
/// Exit codes: 0 when the command's check passes, 2 when it ran and failed,
/// 1 on configuration or runtime errors.
#[derive(Parser)]
#[command(name = "saddlelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML recipe describing the map.
    #[arg(long)]
    recipe: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "saddlelab-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid points per axis (meaning depends on the command).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    pairs: Option<usize>,
    /// Worker threads (falls back to SADDLELAB_JOBS). Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a map: linear part, supports, local derivatives, FD check.
    MakeMap(Common),
    /// SH-Saddle, fibers, degree spot checks and mixing, in order.
    Pipeline(Common),
    /// SH-Saddle certification on a grid of base points.
    CertifySh(Common),
    /// Semiconjugacy to the linear part on a grid; writes the binary field.
    Semiconj(Common),
    /// Fiber analysis of the semiconjugacy against --rho.
    Fibers(Common),
    /// Mixing experiment over random ball pairs.
    Mix(Common),
    /// Re-apply the recipe's surgeries and report fixed-point indices.
    Surgery(Common),
    /// Fixed points of the linear part of period dividing --period.
    FixedPoints {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        period: u32,
    },
    /// Random C¹-small bump perturbations, re-certified and re-mixed.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 1e-3)]
        c1: f64,
    },
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::MakeMap(c) => ("make-map", c),
            Command::Pipeline(c) => ("pipeline", c),
            Command::CertifySh(c) => ("certify-sh", c),
            Command::Semiconj(c) => ("semiconj", c),
            Command::Fibers(c) => ("fibers", c),
            Command::Mix(c) => ("mix", c),
            Command::Surgery(c) => ("surgery", c),
            Command::FixedPoints { common, .. } => ("fixed-points", common),
            Command::Sweep { common, .. } => ("sweep", common),
        }
    }
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SADDLELAB_JOBS") {
        Ok(s) if !s.trim().is_empty() => Ok(Some(s.trim().parse().context("SADDLELAB_JOBS must be a positive integer")?)),
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (name, common) = cli.command.parts();
    if let Some(j) = jobs(common.jobs)? {
        anyhow::ensure!(j > 0, "--jobs must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let recipe = Recipe::load(&common.recipe)?;
    let map = recipe.model()?;
    let flags = Flags {
        seed: common.seed,
        grid: common.grid,
        horizon: common.horizon,
        tol: common.tol,
        rho: common.rho,
        pairs: common.pairs,
    };
    let mut ctx = Ctx { command: name, recipe: &recipe, flags: &flags, out: Out::new(&common.out)? };
    let pass = match &cli.command {
        Command::MakeMap(_) => commands::make_map(&mut ctx, &map)?,
        Command::Pipeline(_) => commands::pipeline(&mut ctx, &map)?,
        Command::CertifySh(_) => commands::certify_sh(&mut ctx, &map)?,
        Command::Semiconj(_) => commands::semiconj(&mut ctx, &map)?,
        Command::Fibers(_) => commands::fibers(&mut ctx, &map)?,
        Command::Mix(_) => commands::mix(&mut ctx, &map)?,
        Command::Surgery(_) => commands::surgery(&mut ctx, &map)?,
        Command::FixedPoints { period, .. } => commands::fixed_points(&mut ctx, &map, *period)?,
        Command::Sweep { count, c1, .. } => commands::sweep(&mut ctx, &map, *count, *c1)?,
    };
    for p in &ctx.out.written {
        println!("wrote {}", p.display());
    }
    println!("{name}: {}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("saddlelab: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
