//! Command-line front end for the compressive ISM pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use cism::pipeline::{cmd_experiment, cmd_fuse, cmd_psf, cmd_reconstruct, cmd_simulate, PipelineConfig};
use cism::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cism",
    version,
    about = "Compressive image scanning microscopy pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the per-element PSF stack.
    Psf(Common),
    /// Simulate a phantom and its noisy and noiseless ISM datasets.
    Simulate(Common),
    /// Skip-sample and TV-reconstruct every element of a dataset.
    Reconstruct {
        /// CISMS stack to reconstruct.
        dataset: PathBuf,
        /// Sample every scan point instead of the skip pattern.
        #[arg(long)]
        full_mask: bool,
        #[command(flatten)]
        common: Common,
    },
    /// APR-fuse a dataset into confocal and ISM images.
    Fuse {
        /// CISMS stack to fuse.
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the seeded multi-sample comparison and write table.csv.
    Experiment(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines); defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Master seed; overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(PipelineConfig, PathBuf), Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        let out = cfg.output_dir.clone();
        Ok((cfg, out))
    }

    fn pool(&self) -> Result<rayon::ThreadPool, Error> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.jobs {
            if n == 0 {
                return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        builder
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Psf(common) => {
            let (cfg, out) = common.load()?;
            let stack = common.pool()?.install(|| cmd_psf(&cfg, &out))?;
            println!("wrote {} PSFs to {}", stack.psfs.len(), out.display());
        }
        Command::Simulate(common) => {
            let (cfg, out) = common.load()?;
            common.pool()?.install(|| cmd_simulate(&cfg, &out))?;
            println!("wrote phantom and datasets to {}", out.display());
        }
        Command::Reconstruct {
            dataset,
            full_mask,
            common,
        } => {
            let (mut cfg, out) = common.load()?;
            cfg.full_mask |= full_mask;
            let (_, reports) = common.pool()?.install(|| cmd_reconstruct(&cfg, &dataset, &out))?;
            let converged = reports.iter().filter(|r| r.converged).count();
            println!(
                "reconstructed {} elements ({converged} converged) into {}",
                reports.len(),
                out.display()
            );
        }
        Command::Fuse { dataset, common } => {
            let (cfg, out) = common.load()?;
            common.pool()?.install(|| cmd_fuse(&cfg, &dataset, &out))?;
            println!("wrote confocal and ISM images to {}", out.display());
        }
        Command::Experiment(common) => {
            let (cfg, out) = common.load()?;
            let summary = common.pool()?.install(|| {
                cmd_experiment(&cfg, &out, &|r| {
                    eprintln!(
                        "sample {:3}: confocal {:.2} %, ism {:.2} %",
                        r.sample_id,
                        100.0 * r.err_confocal,
                        100.0 * r.err_ism
                    )
                })
            })?;
            print!("{}", summary.table_csv());
            let (conv, total) = summary.converged();
            println!("converged reconstructions: {conv}/{total}");
            println!("results in {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
