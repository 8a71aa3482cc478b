use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use indexer_cli::commands::{self, CommandError, Outcome};
use indexer_cli::config::{Overrides, Settings};
use serde::Serialize;

/// Chunked lightning-indexer top-k: parity, sweeps, ablations and memory model.
#[derive(Debug, Parser)]
#[command(name = "csa-indexer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare the chunked path against the materialize reference.
    Parity(CommonArgs),
    /// Sweep one of c_S, c_T or k.
    Sweep(SweepArgs),
    /// Production vs A1, A2, A2-control and A3.
    Ablate(AblateArgs),
    /// Analytic byte counts over a list of sequence lengths.
    Memmodel(MemmodelArgs),
    /// Dump synthetic inputs to a flat binary file.
    Gen(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Key-value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seq: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long = "head-dim")]
    head_dim: Option<usize>,
    #[arg(long)]
    ratio: Option<usize>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    cs: Option<usize>,
    #[arg(long)]
    ct: Option<usize>,
    #[arg(long, value_parser = ["fp32", "fp16"])]
    mode: Option<String>,
    #[arg(long, value_parser = ["none", "a1", "a2"])]
    ablation: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "budget-bytes")]
    budget_bytes: Option<u64>,
    #[arg(long = "threshold-bytes")]
    threshold_bytes: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Process query tiles concurrently.
    #[arg(long)]
    parallel: bool,
    /// Skip key tiles that lie entirely in the causal future.
    #[arg(long = "causal-skip")]
    causal_skip: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// cs, ct or k.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated values for the swept axis.
    #[arg(long)]
    values: Option<String>,
    /// Sequence length at which recall is measured.
    #[arg(long = "recall-seq")]
    recall_seq: Option<usize>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Key-tile size for A2 and its control (default k / 2).
    #[arg(long = "a2-ct")]
    a2_ct: Option<usize>,
}

#[derive(Debug, Args)]
struct MemmodelArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated sequence lengths.
    #[arg(long)]
    seqs: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            batch: self.batch,
            seq: self.seq,
            heads: self.heads,
            head_dim: self.head_dim,
            ratio: self.ratio,
            topk: self.topk,
            cs: self.cs,
            ct: self.ct,
            mode: self.mode.clone(),
            ablation: self.ablation.clone(),
            seed: self.seed,
            budget_bytes: self.budget_bytes,
            threshold_bytes: self.threshold_bytes,
            out: self.out.clone(),
            parallel: self.parallel.then_some(true),
            causal_skip: self.causal_skip.then_some(true),
            ..Overrides::default()
        }
    }

    fn settings(&self, extra: Overrides) -> Result<Settings, CommandError> {
        let file = match &self.config {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        let merged = file.layered(&self.overrides().layered(&extra));
        Ok(Settings::resolve(&merged)?)
    }
}

fn finish<R: Serialize>(outcome: Outcome<R>, csv_path: &Path) -> Result<bool, CommandError> {
    commands::write_csv(csv_path, &outcome.rows)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    println!("wrote {}", csv_path.display());
    Ok(outcome.passed)
}

fn out_path(s: &Settings, default: &str) -> PathBuf {
    s.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: Cli) -> Result<bool, CommandError> {
    match cli.command {
        Command::Parity(args) => {
            let s = args.settings(Overrides::default())?;
            finish(commands::parity(&s)?, &out_path(&s, "parity.csv"))
        }
        Command::Sweep(args) => {
            let extra = Overrides {
                axis: args.axis.clone(),
                values: args.values.clone(),
                recall_seq: args.recall_seq,
                ..Overrides::default()
            };
            let s = args.common.settings(extra)?;
            finish(commands::sweep(&s)?, &out_path(&s, "sweep.csv"))
        }
        Command::Ablate(args) => {
            let extra = Overrides {
                a2_ct: args.a2_ct,
                ..Overrides::default()
            };
            let s = args.common.settings(extra)?;
            finish(commands::ablate(&s)?.outcome, &out_path(&s, "ablate.csv"))
        }
        Command::Memmodel(args) => {
            let extra = Overrides {
                seqs: args.seqs.clone(),
                ..Overrides::default()
            };
            let s = args.common.settings(extra)?;
            finish(commands::memmodel(&s)?, &out_path(&s, "memmodel.csv"))
        }
        Command::Gen(args) => {
            let s = args.settings(Overrides::default())?;
            let path = out_path(&s, "inputs.bin");
            for line in commands::gen(&s, &path)?.summary {
                println!("{line}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
