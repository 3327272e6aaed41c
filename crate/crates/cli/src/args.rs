use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mfbwalk", version, about = "Random walks with a multiple-function barrier at every multiple of N")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expected arrivals at every site of the window.
    Visits(Common),
    /// Absorption probability at each barrier of the window.
    AbsorbDist(Common),
    /// Probability of ever reaching one site from another.
    Reach {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        from: i64,
        #[arg(long, allow_negative_numbers = true)]
        to: i64,
    },
    /// Mean number of steps before absorption, per starting site.
    MeanTime(Common),
    /// Mean steps before absorption split by absorbing barrier (needs i0 = 0).
    BarrierTime {
        #[command(flatten)]
        common: Common,
        /// On balanced models, use the numeric generating-function derivative.
        #[arg(long)]
        numeric_fallback: bool,
        /// Exit 3 if any formula discrepancy is found.
        #[arg(long)]
        strict_formulas: bool,
    },
    /// Monte-Carlo simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Compare closed forms against oracles.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
        /// Golden file to diff against (or to write with --bless).
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Write the fresh oracle values to the golden file.
        #[arg(long, requires = "golden")]
        bless: bool,
        /// Exit 3 if any formula discrepancy is found.
        #[arg(long)]
        strict_formulas: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Barrier range `a..b` (inclusive); covers sites `a*N ..= b*N`.
    #[arg(long, default_value = "-3..3", value_parser = parse_window, allow_hyphen_values = true)]
    pub window: RangeInclusive<i64>,
    #[arg(long, value_enum, default_value_t = Output::Json)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model JSON file with fields p, q, r, p0, q0, r0, s0, N, i0.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub p: Option<f64>,
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub q: Option<f64>,
    #[arg(long, conflicts_with = "model")]
    pub r: Option<f64>,
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub p0: Option<f64>,
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub q0: Option<f64>,
    #[arg(long, conflicts_with = "model")]
    pub r0: Option<f64>,
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub s0: Option<f64>,
    #[arg(long = "N", conflicts_with = "model", required_unless_present = "model")]
    pub n: Option<i64>,
    #[arg(long, conflicts_with = "model", default_value_t = 0)]
    pub i0: i64,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Monte-Carlo walks (verify skips the simulation when 0).
    #[arg(long, default_value_t = 0)]
    pub walks: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Walks still alive after this many steps are censored.
    #[arg(long, default_value_t = 1_000_000)]
    pub step_cap: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

fn parse_window(s: &str) -> Result<RangeInclusive<i64>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a..b, got {s:?}"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let a: i64 = a.trim().parse().map_err(|e| format!("bad start {a:?}: {e}"))?;
    let b: i64 = b.trim().parse().map_err(|e| format!("bad end {b:?}: {e}"))?;
    if a > b {
        return Err(format!("empty window {a}..{b}"));
    }
    Ok(a..=b)
}
