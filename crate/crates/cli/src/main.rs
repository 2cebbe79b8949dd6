use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sled_core::batch::{self, file_stem};
use sled_core::config::{Mode, PipelineConfig};
use sled_core::{pipeline, preprocess, synth};

#[derive(Parser)]
#[command(name = "sled", version, about = "Unsupervised skin lesion segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one image and write its mask, score map and overlay.
    Segment {
        image: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Segment every image in a directory, optionally scoring against ground truth.
    Batch {
        in_dir: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Score existing masks against ground truth.
    Eval {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus of img_###.png / gt_###.png pairs.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 768)]
        width: usize,
        #[arg(long, default_value_t = 560)]
        height: usize,
    },
}

fn load_config(path: Option<&Path>, mode: Option<Mode>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(mode) = mode {
        cfg.mode = mode;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_mean(summary: &batch::BatchSummary) {
    if let Some(m) = summary.mean {
        println!(
            "mean AC {:.4} SE {:.4} SP {:.4} DI {:.4} JA {:.4}",
            m.ac, m.se, m.sp, m.di, m.ja
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment { image, config, mode, out } => {
            let cfg = load_config(config.as_deref(), mode)?;
            let raw = preprocess::load_image(&image)?;
            let seg = pipeline::segment(&raw, &cfg)?;
            for w in &seg.output.warnings {
                log::warn!("{}: {w}", image.display());
            }
            batch::write_outputs(&out, &file_stem(&image), &raw, &seg)?;
            println!("{}: {} lesion pixels", image.display(), seg.mask_original.count());
        }
        Command::Batch { in_dir, gt, out, config, mode, jobs } => {
            let cfg = load_config(config.as_deref(), mode)?;
            if jobs == Some(0) {
                anyhow::bail!("--jobs must be at least 1");
            }
            let summary = batch::run_batch(&in_dir, gt.as_deref(), &out, &cfg, jobs)?;
            println!("{} images, {} failed", summary.n_images, summary.failures);
            print_mean(&summary);
        }
        Command::Eval { pred_dir, gt_dir, out } => {
            let summary = batch::eval_dirs(&pred_dir, &gt_dir, &out)?;
            println!("{} masks, {} failed", summary.n_images, summary.failures);
            print_mean(&summary);
        }
        Command::Synth { n, out, seed, width, height } => {
            synth::write_corpus(&out, n, seed, width, height)?;
            println!("wrote {n} pairs to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
