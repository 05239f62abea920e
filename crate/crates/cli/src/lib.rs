//! Command-line front end for multi-label node classification experiments.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use multifix::baselines::Method;
use multifix::model::Variant;

use crate::config::{Ablation, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "multifix", version, about = "Multi-label node classification with feature, label and positional propagation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset directory (edges.tsv, labels.tsv, optional features and splits)
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset
    Generate {
        #[arg(long)]
        homophily: Option<f64>,
        /// Fraction of feature columns left unshuffled
        #[arg(long)]
        feat_quality: Option<f64>,
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Train and evaluate over all splits
    Train {
        #[arg(long, value_enum)]
        ablate: Vec<Ablation>,
    },
    /// Evaluate saved probabilities
    Eval {
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        probs: Option<PathBuf>,
    },
    /// Run a reference method over the same splits
    Baseline {
        #[arg(long, value_parser = parse_method)]
        method: Method,
    },
    /// Export loss dynamics and atypical nodes of a run
    Dynamics {
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Train the full model and its single-module ablations
    Ablate {
        #[arg(long, value_enum)]
        ablate: Vec<Ablation>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: multifix::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: multifix::Error| e.to_string())
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        let c = &self.common;
        let mut o = Overrides {
            seed: c.seed,
            out: c.out.clone(),
            data: c.data.clone(),
            variant: c.variant,
            threads: threads_from_env(),
            ..Default::default()
        };
        match &self.command {
            Command::Generate {
                homophily,
                feat_quality,
                nodes,
            } => {
                o.homophily = *homophily;
                o.feat_quality = *feat_quality;
                o.nodes = *nodes;
            }
            Command::Train { ablate } => o.ablate = ablate.clone(),
            _ => {}
        }
        o
    }
}

/// Worker thread cap from `GMFX_THREADS`.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("GMFX_THREADS").ok()?.trim().parse().ok().filter(|&t| t > 0)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.common.config.as_deref(), &cli.overrides())?;
    match &cli.command {
        Command::Generate { .. } => commands::cmd_generate(&cfg),
        Command::Train { .. } => commands::cmd_train(&cfg).map(drop),
        Command::Eval { run, probs } => commands::cmd_eval(&cfg, run.as_deref(), probs.as_deref()).map(drop),
        Command::Baseline { method } => commands::cmd_baseline(&cfg, *method).map(drop),
        Command::Dynamics { run, k } => commands::cmd_dynamics(&cfg, run.as_deref(), k.unwrap_or(cfg.atypical_k)),
        Command::Ablate { ablate } => commands::cmd_ablate(&cfg, ablate).map(drop),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    run(&cli)
}
