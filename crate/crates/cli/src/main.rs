use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use easrn_cli::dataset::{generate_dataset, replay_manifest, DatasetPolicy};
use easrn_cli::deblur::{run_deblur, DeblurOptions};
use easrn_cli::eval::{evaluate_pairs, report_json};
use easrn_cli::imageio::{write_atomic, BitDepth};
use easrn_cli::{CliError, Result};
use easrn_core::graph::{save_weights, GraphConfig, GraphWeights};

#[derive(Parser)]
#[command(name = "easrn", version, about = "Blur-pair synthesis, deblurring and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize blurred/sharp pairs from a directory of sharp images.
    Gen(GenArgs),
    /// Regenerate a dataset from its manifest and compare checksums.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Restore an image (or every image in a directory) with a weight file.
    Deblur {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write every scale's input x_i and output y_i into this directory.
        #[arg(long)]
        dump_intermediates: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        scales: usize,
        #[arg(long)]
        bit_depth: Option<u8>,
    },
    /// Score restored images against ground truth with matching file names.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        /// JSON report path; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a freshly initialized weight file.
    InitWeights {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Paper)]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplier on the He-normal standard deviation; 0 gives all-zero weights.
        #[arg(long, default_value_t = 1.0)]
        gain: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
    Toy,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    input_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random crops per source image.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    oe_fraction: f64,
    #[arg(long, default_value_t = 30.0)]
    max_shift: f64,
    #[arg(long, default_value_t = 0.02)]
    sigma_max: f64,
    #[arg(long, default_value_t = 512)]
    crop: usize,
    #[arg(long, default_value_t = 3)]
    scales: usize,
    #[arg(long, default_value_t = 0.0)]
    max_rotation: f64,
    #[arg(long)]
    no_flips: bool,
    #[arg(long)]
    no_gamma: bool,
    #[arg(long, default_value_t = 16)]
    bit_depth: u8,
    /// Keep verified pairs from an interrupted run in the same out-dir.
    #[arg(long)]
    resume: bool,
}

impl GenArgs {
    fn policy(&self) -> Result<DatasetPolicy> {
        Ok(DatasetPolicy {
            crops_per_image: self.count,
            crop_size: self.crop,
            scales: self.scales,
            flips: !self.no_flips,
            gamma: !self.no_gamma,
            oe_fraction: self.oe_fraction,
            max_shift: self.max_shift,
            max_rotation: self.max_rotation,
            sigma_max: self.sigma_max,
            bit_depth: BitDepth::from_bits(self.bit_depth)?,
            ..DatasetPolicy::new(&self.input_dir, self.seed)
        })
    }
}

/// Runs the command and returns the exit status for partial failures.
fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Gen(args) => {
            let s = generate_dataset(&args.policy()?, &args.out_dir, args.resume)?;
            eprintln!("generated {} pairs, reused {}, failed {}", s.generated, s.reused, s.failed);
            Ok(u8::from(s.failed > 0))
        }
        Command::Replay { manifest, out_dir } => {
            let s = replay_manifest(&manifest, &out_dir)?;
            eprintln!("{} records match, {} differ", s.matched, s.mismatched.len());
            for i in &s.mismatched {
                eprintln!("  mismatch at item {i}");
            }
            Ok(u8::from(!s.mismatched.is_empty()))
        }
        Command::Deblur {
            weights,
            input,
            output,
            dump_intermediates,
            scales,
            bit_depth,
        } => {
            let opts = DeblurOptions {
                weights,
                input,
                output,
                dump_intermediates,
                scales,
                bit_depth: bit_depth.map(BitDepth::from_bits).transpose()?,
            };
            let n = run_deblur(&opts)?;
            eprintln!("wrote {n} image(s)");
            Ok(0)
        }
        Command::Eval { pred_dir, gt_dir, report } => {
            let r = evaluate_pairs(&pred_dir, &gt_dir)?;
            let json = report_json(&r);
            match report {
                Some(path) => write_atomic(&path, format!("{json}\n").as_bytes())?,
                None => println!("{json}"),
            }
            eprintln!("{} pairs: mean PSNR {:.3} dB, mean SSIM {:.4}", r.count, r.mean_psnr, r.mean_ssim);
            Ok(u8::from(!r.failures.is_empty()))
        }
        Command::InitWeights {
            output,
            preset,
            seed,
            gain,
        } => {
            let cfg = match preset {
                Preset::Paper => GraphConfig::paper(),
                Preset::Toy => GraphConfig::toy(),
            };
            if !(gain >= 0.0 && gain.is_finite()) {
                return Err(CliError::Config(format!("gain must be non-negative, got {gain}")));
            }
            let w = if gain == 0.0 { GraphWeights::zeros(&cfg) } else { GraphWeights::seeded(&cfg, seed, gain) };
            save_weights(&w, &output)?;
            eprintln!("wrote {} parameters to {}", w.parameter_count(), output.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
