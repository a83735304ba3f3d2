use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use stateguard_core::pipeline::{
    cmd_dataset, cmd_eval, cmd_ingest, cmd_predict, cmd_train, render_report_text, PipelineConfig, PipelineError,
};
use stateguard_core::synth::{generate_corpus, write_corpus, SynthConfig};
use stateguard_core::train::history_table;

#[derive(Parser, Debug)]
#[command(name = "stateguard", version, about = "Graph-based state-derailment defect detection for Solidity ASTs")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

/// Flags mirror the configuration file; values from `--config` win.
#[derive(Args, Debug)]
struct Flags {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Label-set TSV replacing the built-in one.
    #[arg(long, global = true)]
    label_set: Option<PathBuf>,
    /// Fail on the first unusable source unit instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true)]
    embedding_dim: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long, global = true, value_delimiter = ',')]
    hidden_dims: Option<Vec<usize>>,
    #[arg(long, global = true)]
    freeze_embedding: bool,
    #[arg(long, global = true)]
    min_count: Option<usize>,
    /// Append a hashed name bucket to node tokens (0 disables).
    #[arg(long, global = true)]
    name_buckets: Option<u32>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    train_fraction: Option<f64>,
    #[arg(long, global = true)]
    no_stratify: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse ASTs (or compile sources) and write one merged graph per project.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Also write `<project>.edges.txt`.
        #[arg(long)]
        dump_edges: bool,
    },
    /// Build a normalized dataset from graph bundles.
    Dataset {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        /// Defaults to `<output-dir>/dataset.sgds`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on a dataset; writes the checkpoint, history and metrics.
    Train { dataset: PathBuf },
    /// Evaluate a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        dataset: PathBuf,
    },
    /// Ingest projects and write one defect report per project.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Generate a labeled synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        projects: usize,
        #[arg(long, default_value_t = 0.3)]
        cross_rate: f64,
        #[arg(long, default_value_t = 0.15)]
        minimal_rate: f64,
    },
}

fn build_config(flags: &Flags, dump_edges: bool) -> anyhow::Result<PipelineConfig> {
    let mut c = PipelineConfig::default();
    if let Some(v) = &flags.output_dir {
        c.output_dir = v.clone();
    }
    if let Some(v) = flags.seed {
        c.seed = v;
    }
    if let Some(v) = &flags.label_set {
        c.label_set = Some(v.clone());
    }
    c.strict |= flags.strict;
    c.dump_edges |= dump_edges;
    if let Some(v) = flags.embedding_dim {
        c.embedding_dim = v;
    }
    if let Some(v) = &flags.hidden_dims {
        c.hidden_dims = v.clone();
    }
    if flags.freeze_embedding {
        c.train_embedding = false;
    }
    if let Some(v) = flags.min_count {
        c.min_count = v;
    }
    if let Some(v) = flags.name_buckets {
        c.name_buckets = v;
    }
    if let Some(v) = flags.epochs {
        c.epochs = v;
    }
    if let Some(v) = flags.patience {
        c.patience = v;
    }
    if let Some(v) = flags.threshold {
        c.threshold = v;
    }
    if let Some(v) = flags.lr {
        c.learning.base_lr = v;
    }
    if let Some(v) = flags.train_fraction {
        c.split.train_fraction = v;
    }
    if flags.no_stratify {
        c.split.stratified = false;
    }
    let c = match &flags.config {
        Some(path) => c.overlay_file(path)?,
        None => c,
    };
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let dump_edges = matches!(cli.command, Command::Ingest { dump_edges: true, .. });
    let config = build_config(&cli.flags, dump_edges)?;
    match cli.command {
        Command::Ingest { paths, .. } => {
            let summary = cmd_ingest(&paths, &config)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for p in &summary.written {
                println!("{}", p.display());
            }
        }
        Command::Dataset { bundles, out } => {
            let out = out.unwrap_or_else(|| config.output_dir.join("dataset.sgds"));
            let d = cmd_dataset(&bundles, &out, &config)?;
            println!("{}: {} graphs, {} nodes, {} edges, vocabulary {}", out.display(), d.num_graphs(), d.num_nodes(), d.edge_list.len(), d.vocabulary.len());
        }
        Command::Train { dataset } => {
            let s = cmd_train(&dataset, &config)?;
            print!("{}", history_table(&s.history));
            println!("best epoch: {}", s.best_epoch);
            println!("checkpoint: {}", s.checkpoint.display());
        }
        Command::Eval { checkpoint, dataset } => {
            let m = cmd_eval(&checkpoint, &dataset, &config)?;
            println!("{}", serde_json::to_string_pretty(&m).context("serializing metrics")?);
        }
        Command::Predict { checkpoint, paths } => {
            for r in cmd_predict(&checkpoint, &paths, &config)? {
                println!("{}", render_report_text(&r));
            }
        }
        Command::Synth { out, projects, cross_rate, minimal_rate } => {
            let synth = SynthConfig { projects, seed: config.seed, cross_contract_rate: cross_rate, minimal_rate };
            anyhow::ensure!((0.0..=1.0).contains(&cross_rate) && (0.0..=1.0).contains(&minimal_rate), "rates must lie in [0, 1]");
            let dirs = write_corpus(&generate_corpus(&synth), &out).with_context(|| format!("writing {}", out.display()))?;
            println!("{} projects written to {}", dirs.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<PipelineError>().map_or(1, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
