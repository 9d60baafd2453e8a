//! `dvsnc`: generate, filter, encode, train and benchmark from the command line.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dvs_nearchip::{FilterConfig, SensorGeometry};
use error::Failure;

#[derive(Debug, Parser)]
#[command(name = "dvsnc", version, about = "Near-chip DVS filtering, coding and detection")]
struct Cli {
    /// `key = value` filter configuration; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Filter settings shared by the subcommands that run the pipeline.
#[derive(Debug, Default, Args)]
struct FilterArgs {
    #[arg(long)]
    tau_us: Option<u64>,
    #[arg(long)]
    agg_threshold: Option<u32>,
    #[arg(long)]
    agg_limit: Option<u32>,
    #[arg(long)]
    pool: Option<u16>,
    #[arg(long)]
    refractory_us: Option<u64>,
    #[arg(long)]
    no_coincidence: bool,
    #[arg(long)]
    no_aggregation: bool,
    /// Aggregation trigger count: `full` or `pooled`.
    #[arg(long)]
    trigger: Option<String>,
}

/// Sensor size for inputs that do not carry one (packet streams).
#[derive(Debug, Args)]
struct SensorArgs {
    #[arg(long, default_value_t = 480)]
    width: u16,
    #[arg(long, default_value_t = 320)]
    height: u16,
}

impl SensorArgs {
    fn geometry(&self) -> Result<SensorGeometry, Failure> {
        Ok(SensorGeometry::new(self.width, self.height)?)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long = "lr", default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long = "filter-lr", default_value_t = 0.002)]
    filter_learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 200)]
    filters: usize,
    #[arg(long, default_value_t = 10)]
    kernel: usize,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Evenly spaced training frames taken from each clip.
    #[arg(long, default_value_t = 8)]
    frames_per_clip: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset of EVS1 clips.
    Gen {
        #[arg(long)]
        pos: usize,
        #[arg(long)]
        neg: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        duration_us: Option<u64>,
        #[arg(long)]
        edge_rate: Option<f64>,
        #[arg(long)]
        noise_rate: Option<f64>,
        /// Fraction of negative clips without any object.
        #[arg(long)]
        empty_fraction: Option<f64>,
    },
    /// Run the filter over an event file; writes frames, or packets with --dict.
    Filter {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        /// Huffman dictionary; output becomes a packet stream.
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Require packet output (fails without --dict).
        #[arg(long)]
        packets: bool,
    },
    /// Build a Huffman dictionary from frame files.
    Dict {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Deframe and decode a packet stream into a frame file.
    Decode {
        input: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        sensor: SensorArgs,
    },
    /// Train a detector from a label manifest of event or frame files.
    Train {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score every frame or packet: one `time score decision` line each.
    Detect {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        sensor: SensorArgs,
    },
    /// Ablation study on a synthetic dataset; writes report.csv and report.svg.
    Bench {
        #[arg(long, default_value_t = 100)]
        pos: usize,
        #[arg(long, default_value_t = 100)]
        neg: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
        /// Comma-separated variant names (`-raw` suffix disables Huffman).
        #[arg(long, value_delimiter = ',', default_value = "full,co-off,ag-off,mp-4,mp-8,mp-16")]
        variants: Vec<String>,
        /// Bandwidth only, no detector training.
        #[arg(long)]
        no_f1: bool,
        #[arg(long)]
        duration_us: Option<u64>,
        #[arg(long)]
        noise_rate: Option<f64>,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
}

/// Defaults, then the config file, then flags.
fn filter_config(file: Option<&PathBuf>, args: &FilterArgs) -> Result<FilterConfig, Failure> {
    let mut cfg = FilterConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::from(e).at(path.display()))?;
        cfg.apply_kv(&text).map_err(|e| Failure::from(e).at(path.display()))?;
    }
    if let Some(v) = args.tau_us {
        cfg.tau_us = v;
    }
    if let Some(v) = args.agg_threshold {
        cfg.agg_event_threshold = v;
    }
    if let Some(v) = args.agg_limit {
        cfg.agg_window_limit = v;
    }
    if let Some(v) = args.pool {
        cfg.pool = v;
    }
    if let Some(v) = args.refractory_us {
        cfg.refractory_us = v;
    }
    if args.no_coincidence {
        cfg.coincidence = false;
    }
    if args.no_aggregation {
        cfg.aggregation = false;
    }
    if let Some(t) = &args.trigger {
        cfg.trigger = t.parse()?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dvsnc: {f}");
            ExitCode::from(f.code)
        }
    }
}
