//! `irle` — reproducible runs of the low-light enhancement core.
//!
//! Exit codes: 0 success, 1 input I/O (missing or undecodable files),
//! 2 validation (bad config, dimension mismatches, degenerate inputs).
//! All randomness flows through explicit `--seed` flags.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "irle",
    version,
    about = "Internally referenced low-light enhancement toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the pseudo ground truth and export every intermediate.
    PseudoGt {
        /// Input RGB PNG.
        input: PathBuf,
        /// JSON run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Spectral consistency loss between two images, printed as JSON.
    Sisc {
        img1: PathBuf,
        img2: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Cross-frequency correlation matrix and band energies as CSV.
    Cfc {
        input: PathBuf,
        /// Number of radial frequency bands.
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Optional path for a log-scaled spectrum PNG.
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Full stage-1 loss report for a prediction against its input.
    Losses {
        r_hat: PathBuf,
        i_low: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed of the sub-sampling used by the spectral term.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Split an image into two sub-images with independent noise.
    Subsample {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Luminance-distribution comparison across image directories.
    Analyze {
        /// Image directory; repeat with one --label per directory.
        #[arg(long = "dir", required = true)]
        dirs: Vec<PathBuf>,
        /// Label for the matching --dir.
        #[arg(long = "label", required = true)]
        labels: Vec<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one gain-aware block over an image with seeded weights.
    GafmDemo {
        input: PathBuf,
        /// Illumination estimate; its luminance becomes the gain prior.
        l_hat: PathBuf,
        /// 0 selects all-zero weights (identity modulation).
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Load modulation weights from a file instead of seeding them.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> irle_core::Result<()> {
    match cli.command {
        Command::PseudoGt { input, config, out } => {
            commands::cmd_pseudo_gt(&input, config.as_deref(), &out)
        }
        Command::Sisc { img1, img2, config } => commands::cmd_sisc(&img1, &img2, config.as_deref()),
        Command::Cfc {
            input,
            k,
            out,
            spectrum,
        } => commands::cmd_cfc(&input, k, &out, spectrum.as_deref()),
        Command::Losses {
            r_hat,
            i_low,
            config,
            seed,
        } => commands::cmd_losses(&r_hat, &i_low, config.as_deref(), seed),
        Command::Subsample { input, seed, out } => commands::cmd_subsample(&input, seed, &out),
        Command::Analyze {
            dirs,
            labels,
            out,
            config,
        } => commands::cmd_analyze(&dirs, &labels, &out, config.as_deref()),
        Command::GafmDemo {
            input,
            l_hat,
            seed,
            out,
            config,
            weights,
        } => commands::cmd_gafm_demo(
            &input,
            &l_hat,
            seed,
            &out,
            config.as_deref(),
            weights.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
