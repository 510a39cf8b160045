use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use vtbench::bench::{
    ablation_sweep, gen_blobs_with, load_idx, run_matrix, train_model, write_idx, write_results,
    BlobParams, ExperimentSpec, ResultFormat, SweepParam,
};
use vtbench::check::run_checks;
use vtbench::diffnet::{save_model, Arch, TrainConfig};
use vtbench::tensor::Rng;

#[derive(Parser)]
#[command(
    name = "vtbench",
    version,
    about = "Transfer attacks on small differentiable models"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Idx,
    Blobs,
}

#[derive(clap::Args)]
struct BlobArgs {
    /// Number of blob images.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 28)]
    side: usize,
    /// Bump height in units of the pixel noise.
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
}

impl BlobArgs {
    fn params(&self) -> BlobParams {
        let d = BlobParams::default();
        BlobParams {
            separation: self.separation.unwrap_or(d.separation),
            noise: self.noise.unwrap_or(d.noise),
            ..d
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write it as JSON.
    Train {
        #[arg(long, value_parser = parse_arch)]
        arch: Arch,
        #[arg(long, value_enum, default_value = "blobs")]
        data: DataKind,
        /// IDX image file (with --data idx).
        #[arg(long, required_if_eq("data", "idx"))]
        images: Option<PathBuf>,
        /// IDX label file (with --data idx).
        #[arg(long, required_if_eq("data", "idx"))]
        labels: Option<PathBuf>,
        #[command(flatten)]
        blobs: BlobArgs,
        /// Seed of the generated blobs; defaults to 1000 + seed.
        #[arg(long)]
        data_seed: Option<u64>,
        /// Seed for initialization and minibatch order.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainConfig::default().lr)]
        lr: f64,
        #[arg(long, default_value_t = TrainConfig::default().batch)]
        batch: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a blob dataset as a pair of IDX files.
    GenBlobs {
        #[command(flatten)]
        blobs: BlobArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Run the attack matrix of an experiment file.
    Attack {
        #[arg(long)]
        spec: PathBuf,
        /// Output path; a .json extension selects JSON.
        #[arg(long)]
        out: PathBuf,
        /// Round adversarial images to 8 bits before evaluation.
        #[arg(long)]
        quantize: bool,
    },
    /// Re-run the matrix over values of beta or the sample count.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quantize: bool,
    },
    /// Run the invariant self-check.
    Check {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    s.parse().map_err(|e: vtbench::Error| e.to_string())
}

fn load_spec(path: &PathBuf, quantize: bool) -> Result<(ExperimentSpec, PathBuf)> {
    let (mut spec, base) =
        ExperimentSpec::load(path).with_context(|| format!("loading {}", path.display()))?;
    spec.quantize |= quantize;
    Ok((spec, base))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Train {
            arch,
            data,
            images,
            labels,
            blobs,
            data_seed,
            seed,
            epochs,
            lr,
            batch,
            out,
        } => {
            let ds = match data {
                DataKind::Idx => {
                    let (Some(images), Some(labels)) = (images, labels) else {
                        bail!("--data idx needs --images and --labels");
                    };
                    load_idx(&images, &labels)?
                }
                DataKind::Blobs => {
                    let mut rng = Rng::new(data_seed.unwrap_or(1000 + seed), 0);
                    gen_blobs_with(blobs.n, blobs.classes, blobs.side, blobs.params(), &mut rng)?
                }
            };
            let (model, report) = train_model(arch, &ds, seed, TrainConfig { epochs, lr, batch })?;
            save_model(&model, &out)?;
            let last = report
                .epoch_losses
                .last()
                .copied()
                .unwrap_or(report.initial_loss);
            eprintln!(
                "{arch}: loss {:.4} -> {last:.4}, train accuracy {:.4}, wrote {}",
                report.initial_loss,
                report.final_accuracy,
                out.display()
            );
        }
        Cmd::GenBlobs {
            blobs,
            seed,
            images,
            labels,
        } => {
            let ds = gen_blobs_with(
                blobs.n,
                blobs.classes,
                blobs.side,
                blobs.params(),
                &mut Rng::new(seed, 0),
            )?;
            write_idx(&ds, &images, &labels)?;
        }
        Cmd::Attack {
            spec,
            out,
            quantize,
        } => {
            let (spec, base) = load_spec(&spec, quantize)?;
            let table = run_matrix(&spec, &base)?;
            write_results(&table, &out, ResultFormat::from_path(&out))?;
            eprintln!("{} rows written to {}", table.rows.len(), out.display());
        }
        Cmd::Sweep {
            spec,
            param,
            values,
            out,
            quantize,
        } => {
            let (spec, base) = load_spec(&spec, quantize)?;
            let sweep = ablation_sweep(&spec, &base, param, &values)?;
            sweep.write(&out, ResultFormat::from_path(&out))?;
            eprintln!(
                "{} values swept, written to {}",
                sweep.entries.len(),
                out.display()
            );
        }
        Cmd::Check { seed } => {
            let outcomes = run_checks(seed);
            for o in &outcomes {
                println!("{o}");
            }
            if outcomes.iter().any(|o| !o.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
