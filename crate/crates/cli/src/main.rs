//! `secvid`: operator commands for private single-frame video
//! classification. Alice deals her video, Bob deals his model and frame
//! selection, a dealer provisions preprocessing material, and three party
//! servers classify without ever seeing a plaintext input.

mod config;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use secvid_core::Error;

#[derive(Parser)]
#[command(name = "secvid", version, about = "Privacy-preserving video classification over three-party MPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DealCommon {
    /// Output directory for the per-party share files.
    #[arg(long)]
    out: PathBuf,
    /// Session identifier binding all artifacts of one execution.
    #[arg(long)]
    session: String,
    /// Hex seed for reproducible dealing (random when omitted).
    #[arg(long)]
    seed: Option<String>,
    /// Overwrite existing share files.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Split a plaintext video tensor (N x h x w x c) into three share files.
    DealVideo {
        /// Input tensor container (real or ring dtype).
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        common: DealCommon,
    },
    /// Split the model weights into three share files.
    DealModel {
        /// Model manifest (public shapes).
        #[arg(long)]
        manifest: PathBuf,
        /// Flat weight tensor container matching the manifest.
        #[arg(long)]
        weights: PathBuf,
        #[command(flatten)]
        common: DealCommon,
    },
    /// Build the one-hot frame-selection matrix and deal it.
    DealSelection {
        /// Comma-separated 1-based frame indices, e.g. 2,4.
        #[arg(long, value_delimiter = ',')]
        indices: Vec<usize>,
        /// Total number of frames N in the dealt video.
        #[arg(long)]
        frames: usize,
        #[command(flatten)]
        common: DealCommon,
    },
    /// Generate preprocessing material for one classification.
    Preproc {
        /// Model manifest the budget is derived from.
        #[arg(long = "budget-from")]
        budget_from: PathBuf,
        /// Total number of frames N.
        #[arg(long)]
        frames: usize,
        /// Number of selected frames n.
        #[arg(long)]
        select: usize,
        #[command(flatten)]
        common: DealCommon,
    },
    /// Run one computing party over TCP.
    Party {
        /// Party configuration file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        session: String,
        /// Seconds to wait for the peers before aborting.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        /// Write the transcript shape (JSON) here after the run.
        #[arg(long)]
        emit_transcript: Option<PathBuf>,
    },
    /// Classify with three in-process parties and print the label.
    Classify {
        /// Required: run all parties locally over loopback.
        #[arg(long)]
        local: bool,
        /// Directory holding the dealt share files.
        #[arg(long)]
        shares: PathBuf,
        /// Model manifest.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        session: String,
        /// Hex seed for the in-memory preprocessing dealer.
        #[arg(long)]
        seed: Option<String>,
        /// Write per-party transcript shapes (JSON) into this directory.
        #[arg(long)]
        emit_transcript: Option<PathBuf>,
    },
    /// Recombine label share files and print the class label.
    Reveal {
        /// Two or three label share files.
        #[arg(required = true, num_args = 2..=3)]
        shares: Vec<PathBuf>,
    },
    /// Plaintext fixed-point reference classification.
    Oracle {
        #[arg(long)]
        video: PathBuf,
        #[arg(long, value_delimiter = ',')]
        indices: Vec<usize>,
        /// Model manifest.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Also print per-class aggregated scores.
        #[arg(long)]
        scores: bool,
        /// Also run the double-precision shadow and report agreement.
        #[arg(long)]
        float_shadow: bool,
    },
    /// Time a local classification and report per-party communication.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 4)]
        frames: usize,
        #[arg(long, default_value_t = 2)]
        select: usize,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        seed: Option<String>,
    },
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Transport(_)) | Some(Error::ProtocolOrder(_)) => 3,
        Some(Error::Framing(_)) | Some(Error::Format(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::DealVideo { input, common } => ops::deal_video(&input, &common),
        Command::DealModel { manifest, weights, common } => {
            ops::deal_model(&manifest, &weights, &common)
        }
        Command::DealSelection { indices, frames, common } => {
            ops::deal_selection(&indices, frames, &common)
        }
        Command::Preproc { budget_from, frames, select, common } => {
            ops::preproc(&budget_from, frames, select, &common)
        }
        Command::Party { config, session, timeout, emit_transcript } => {
            ops::party(&config, &session, timeout, emit_transcript.as_deref())
        }
        Command::Classify { local, shares, manifest, session, seed, emit_transcript } => {
            if !local {
                eprintln!("only --local classification is supported; networked runs use `party`");
                return ExitCode::from(2);
            }
            ops::classify_local_cmd(&shares, &manifest, &session, seed.as_deref(), emit_transcript.as_deref())
        }
        Command::Reveal { shares } => ops::reveal(&shares),
        Command::Oracle { video, indices, model, weights, scores, float_shadow } => {
            ops::oracle_cmd(&video, &indices, &model, &weights, scores, float_shadow)
        }
        Command::Bench { manifest, frames, select, runs, seed } => {
            ops::bench(&manifest, frames, select, runs, seed.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
