//! `heap`: batch driver for the turbulence-surrogate pipeline.
//!
//! simulate -> train-ae -> train-pred -> rollout -> evaluate, plus the
//! multi-seed study and the per-level decode visualization. Every command is
//! deterministic given its flags and seeds; `HEAP_THREADS` pins the study
//! worker count.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "heap", version, about = "Hierarchical-embedding autoencoder-predictor toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the training-side commands.
#[derive(Args, Clone)]
struct TrainFlags {
    /// Model variant (H1..H5, C1..C3).
    #[arg(long, default_value = "H3")]
    variant: String,
    /// Realization seed (weights and batch order).
    #[arg(long, default_value_t = 2)]
    seed: u64,
    /// Max training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Early-stop patience (epochs without dev improvement).
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the plasma turbulence system and store the trajectory.
    Simulate {
        /// Output dataset path.
        #[arg(long)]
        out: PathBuf,
        /// Protocol scale preset (micro, desk, paper); sets grid and length.
        #[arg(long, default_value = "desk")]
        scale: String,
        /// key = value config file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Grid points per axis (power of two).
        #[arg(long)]
        nx: Option<usize>,
        /// Stored outputs.
        #[arg(long)]
        outputs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Hyper-diffusivity for both fields.
        #[arg(long)]
        diffusion: Option<f64>,
        #[arg(long)]
        box_length: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Internal steps per stored output.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Train the autoencoder stage on a dataset.
    TrainAe {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        split_seed: Option<u64>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Train a predictor realization on embeddings from a trained AE.
    TrainPred {
        #[arg(long)]
        data: PathBuf,
        /// Trained AE checkpoint.
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Embedding store cache; reused when present, written otherwise.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        split_seed: Option<u64>,
        /// Drop the inter-level terms in the predictor blocks (ablation).
        #[arg(long)]
        no_interaction: bool,
        /// Internal interaction blocks per step (N).
        #[arg(long)]
        internal_steps: Option<usize>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Roll a trained surrogate forward and store the generated trajectory.
    Rollout {
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory (generated dataset + snapshots).
        #[arg(long)]
        out: PathBuf,
        /// Initial-state index; defaults to len - 1 - steps.
        #[arg(long)]
        start: Option<usize>,
        #[arg(long, default_value_t = 500)]
        steps: usize,
    },
    /// Score a generated trajectory against ground truth.
    Evaluate {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-seed comparison study over model variants.
    Study {
        #[arg(long)]
        data: PathBuf,
        /// Study directory (checkpoints, manifest, reports).
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated entries; append `:noint` for the ablation
        /// (example: H1,H3,H3:noint).
        #[arg(long, default_value = "H1,H2,H3")]
        variants: String,
        #[arg(long, default_value_t = 16)]
        realizations: usize,
        #[arg(long)]
        rollout_steps: Option<usize>,
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads (default HEAP_THREADS or 1).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        ae_epochs: Option<usize>,
        #[arg(long)]
        pred_epochs: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Decode each embedding level in isolation (multi-scale view).
    DecodeLevels {
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Trajectory step to encode.
        #[arg(long)]
        step: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            out,
            scale,
            config,
            nx,
            outputs,
            seed,
            alpha,
            kappa,
            diffusion,
            box_length,
            dt,
            stride,
        } => commands::simulate(commands::SimulateArgs {
            out,
            scale,
            config,
            nx,
            outputs,
            seed,
            alpha,
            kappa,
            diffusion,
            box_length,
            dt,
            stride,
        }),
        Command::TrainAe { data, out, scale, config, split_seed, train } => {
            commands::train_ae(data, out, scale, config, split_seed, train)
        }
        Command::TrainPred {
            data,
            ae,
            out,
            store,
            scale,
            config,
            split_seed,
            no_interaction,
            internal_steps,
            train,
        } => commands::train_pred(commands::TrainPredArgs {
            data,
            ae,
            out,
            store,
            scale,
            config,
            split_seed,
            no_interaction,
            internal_steps,
            train,
        }),
        Command::Rollout { ae, pred, data, out, start, steps } => {
            commands::rollout(ae, pred, data, out, start, steps)
        }
        Command::Evaluate { generated, truth, out } => commands::evaluate(generated, truth, out),
        Command::Study {
            data,
            out,
            variants,
            realizations,
            rollout_steps,
            scale,
            config,
            workers,
            ae_epochs,
            pred_epochs,
            top_k,
        } => commands::study(commands::StudyArgs {
            data,
            out,
            variants,
            realizations,
            rollout_steps,
            scale,
            config,
            workers,
            ae_epochs,
            pred_epochs,
            top_k,
        }),
        Command::DecodeLevels { ae, data, step, out } => {
            commands::decode_levels(ae, data, step, out)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
