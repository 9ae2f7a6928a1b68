//! `ciaf`: codec-assisted video super-resolution from the command line.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 verification failure.
//! `verify` instead exits with the number of failed suites.

mod bench;
mod frames;
mod report;
mod stats;
mod synth;
mod upscale;
mod verify;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use ciaf::{init_random_weights, save_weights, ModelConfig, Variant};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "ciaf", version, about = "Codec-information-assisted video super-resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    /// Recurrent baseline without alignment.
    #[value(alias = "baseline")]
    Baseline,
    /// Hidden state aligned with codec motion vectors.
    #[value(alias = "mv_aligned")]
    Mv,
    /// Motion alignment plus residual-gated sparse body.
    #[value(name = "mv-res", alias = "mv_residual_sparse")]
    MvRes,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Baseline => Variant::Baseline,
            VariantArg::Mv => Variant::MvAligned,
            VariantArg::MvRes => Variant::MvResidualSparse,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Super-resolve a PNG frame folder using its codec sidecar.
    Upscale {
        frames_dir: PathBuf,
        sidecar: PathBuf,
        weights: PathBuf,
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "mv-res")]
        variant: VariantArg,
        /// Folder of HR ground-truth PNGs; adds PSNR-Y and SSIM to the report.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Report path (default: <OUT_DIR>/report.json).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the per-frame body masks to <OUT_DIR>/masks.
        #[arg(long)]
        emit_masks: bool,
    },
    /// Time dense vs sparse body Resblocks over synthetic masks and write CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 0.9], value_parser = parse_rate)]
        rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [64], value_parser = clap::value_parser!(u64).range(1..))]
        sizes: Vec<u64>,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
        repeats: u64,
        #[arg(long, default_value_t = 7)]
        blocks: usize,
        #[arg(long, default_value_t = 128)]
        channels: usize,
        /// Side of the square mask tiles; 1 gives pixel-level random masks.
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
        tile: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run the oracle-equivalence suites; exits with the number of failures.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt one weight on the sparse path to check the suite catches it.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Per-frame and mean sparse rate of the residual masks in a sidecar.
    MaskStats {
        sidecar: PathBuf,
        /// JSON path (default: stdout).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Folder to write one mask PNG per frame into.
        #[arg(long)]
        emit_masks: Option<PathBuf>,
    },
    /// Stack one pixel row of every frame into a temporal-profile image.
    Profile {
        frames_dir: PathBuf,
        #[arg(long)]
        row: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a randomly initialised weights file.
    InitWeights {
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 7)]
        blocks: usize,
        #[arg(long, default_value_t = 128)]
        channels: usize,
    },
    /// Generate a synthetic clip: LR and ground-truth PNGs plus a sidecar.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        frames: u64,
        #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..=u16::MAX as u64))]
        width: u64,
        #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..=u16::MAX as u64))]
        height: u64,
        #[arg(long, value_enum, default_value = "pan")]
        motion: synth::Motion,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_rate(s: &str) -> Result<f64, String> {
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&r) {
        Ok(r)
    } else {
        Err(format!("sparse rate {r} is outside [0, 1]"))
    }
}

/// Wraps errors caused by argument values that clap cannot check on its own.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn model_config(blocks: usize, channels: usize) -> Result<ModelConfig> {
    let cfg = ModelConfig {
        num_resblocks: blocks,
        channels,
        ..ModelConfig::new(Variant::MvResidualSparse)
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Upscale {
            frames_dir,
            sidecar,
            weights,
            out_dir,
            variant,
            gt,
            report,
            emit_masks,
        } => {
            upscale::run(upscale::UpscaleArgs {
                frames_dir: &frames_dir,
                sidecar: &sidecar,
                weights: &weights,
                out_dir: &out_dir,
                variant: variant.into(),
                gt: gt.as_deref(),
                report,
                emit_masks,
            })?;
            Ok(0)
        }
        Command::Bench {
            rates,
            sizes,
            repeats,
            blocks,
            channels,
            tile,
            seed,
            report,
        } => {
            model_config(blocks, channels)?;
            let args = bench::BenchArgs {
                rates,
                sizes: sizes.into_iter().map(|s| s as usize).collect(),
                repeats: repeats as usize,
                blocks,
                channels,
                tile: tile as usize,
                seed,
            };
            let outcome = match &report {
                Some(p) => bench::run(
                    &args,
                    fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
                )?,
                None => bench::run(&args, std::io::stdout().lock())?,
            };
            if outcome.formula_mismatches > 0 {
                eprintln!(
                    "{} of {} rows: sparse MACs differ from the analytic formula",
                    outcome.formula_mismatches, outcome.rows
                );
                return Ok(EXIT_VERIFY);
            }
            Ok(0)
        }
        Command::Verify { seed, inject_fault } => {
            let suites = verify::run(seed, inject_fault)?;
            let failed = suites.iter().filter(|s| !s.pass).count();
            for s in &suites {
                println!("[{}] {}: {}", if s.pass { "PASS" } else { "FAIL" }, s.name, s.detail);
            }
            println!("{} of {} suites passed", suites.len() - failed, suites.len());
            Ok(failed as u8)
        }
        Command::MaskStats {
            sidecar,
            report,
            emit_masks,
        } => {
            stats::mask_stats(&sidecar, report.as_deref(), emit_masks.as_deref())?;
            Ok(0)
        }
        Command::Profile { frames_dir, row, out } => {
            stats::profile(&frames_dir, row, &out)?;
            Ok(0)
        }
        Command::InitWeights {
            out,
            seed,
            blocks,
            channels,
        } => {
            let cfg = model_config(blocks, channels)?;
            let bytes = save_weights(&init_random_weights(&cfg, seed))?;
            fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
            Ok(0)
        }
        Command::Synth {
            out_dir,
            frames,
            width,
            height,
            motion,
            seed,
        } => {
            synth::run(&synth::SynthArgs {
                out_dir: &out_dir,
                frames: frames as usize,
                width: width as usize,
                height: height as usize,
                scale: 4,
                motion,
                seed,
            })?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<UsageError>() { EXIT_USAGE } else { EXIT_DATA })
        }
    }
}
