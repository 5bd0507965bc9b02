use std::path::PathBuf;

use clap::{ArgGroup, Parser, Subcommand};
use depwise::taskgen::{NoiseKind, MAX_K};

#[derive(Debug, Parser)]
#[command(
    name = "depwise",
    version,
    about = "Depth-wise graph reasoning over generated spatial stories"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a JSONL dataset of stories.
    Gen(GenArgs),
    /// Train a depth-wise model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint or the parameter-free exact model.
    Eval(EvalArgs),
    /// Run randomized property suites.
    Prop(PropArgs),
    /// Train the breadth baseline at several depths next to one depth-wise model.
    Sweep(SweepArgs),
    /// Trace the exact model on a single story.
    Demo(DemoArgs),
}

#[derive(Debug, clap::Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hop count, either `N` or an inclusive range `A-B`.
    #[arg(long, value_parser = parse_hops)]
    pub k: Hops,
    #[arg(long, default_value = "none", value_parser = parse_noise)]
    pub noise: NoiseKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Validation set; without it 10% of `--data` is held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// JSON run configuration (model width, aggregator, optimizer settings).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_ckpt: PathBuf,
    /// Per-epoch CSV; defaults to the checkpoint path with `.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
#[command(group(ArgGroup::new("model").required(true).args(["ckpt", "exact"])))]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub exact: bool,
    /// Write the per-(k, noise) table here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct PropArgs {
    /// One of tpr, grad, noise, snapshot, bfs, parser, or all.
    #[arg(long, default_value = "all", value_parser = parse_suite)]
    pub suite: String,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    /// Training stories; 10% are held out for validation.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// JSON sweep configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
#[command(group(ArgGroup::new("input").required(true).args(["story_file", "inline_text"])))]
pub struct DemoArgs {
    #[arg(long)]
    pub story_file: Option<PathBuf>,
    #[arg(long)]
    pub inline_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hops {
    pub lo: usize,
    pub hi: usize,
}

impl Hops {
    pub fn values(self) -> Vec<usize> {
        (self.lo..=self.hi).collect()
    }
}

fn parse_hop(s: &str) -> Result<usize, String> {
    let k: usize = s.trim().parse().map_err(|_| format!("`{s}` is not a hop count"))?;
    if !(1..=MAX_K).contains(&k) {
        return Err(format!("hop count {k} is outside 1..={MAX_K}"));
    }
    Ok(k)
}

pub fn parse_hops(s: &str) -> Result<Hops, String> {
    let (lo, hi) = match s.split_once('-') {
        Some((a, b)) => (parse_hop(a)?, parse_hop(b)?),
        None => {
            let k = parse_hop(s)?;
            (k, k)
        }
    };
    if lo > hi {
        return Err(format!("empty hop range {lo}-{hi}"));
    }
    Ok(Hops { lo, hi })
}

fn parse_noise(s: &str) -> Result<NoiseKind, String> {
    s.parse().map_err(|e: depwise::Error| e.to_string())
}

fn parse_suite(s: &str) -> Result<String, String> {
    if s == "all" || depwise::props::SUITES.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!(
            "unknown suite `{s}` (expected one of {:?} or all)",
            depwise::props::SUITES
        ))
    }
}
