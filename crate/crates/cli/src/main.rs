//! Command-line front end: one subcommand per pipeline stage plus
//! `run-experiment` for the whole chain.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure during training.

use blockage_core::config::ScenarioConfig;
use blockage_core::dataset::{build_dataset, read_dataset, read_pairs, read_trace, write_dataset, write_trace, BuildOptions};
use blockage_core::evalkit::report_csv;
use blockage_core::experiment::{evaluate_checkpoint, history_csv, run_experiment, train_model, ExperimentConfig, Subset};
use blockage_core::handoff::{evaluate_handoff, handoff_csv};
use blockage_core::scene::simulate;
use blockage_core::seqnet::{load_checkpoint, save_checkpoint, Mode, TrainConfig};
use blockage_core::{Error, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "blockage", version, about = "Vision-aided mmWave blockage prediction and proactive handoff")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the street scene and write a trace directory.
    Simulate {
        /// Scenario TOML; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Window, balance and split a trace into train/val sets and conjugate pairs.
    BuildDataset {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sequences per label per camera.
        #[arg(long)]
        quota: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
        #[arg(long, default_value_t = 250)]
        pairs_per_category: usize,
        /// Restrict conjugate pairs to these camera ids (comma separated); `0` keeps all.
        #[arg(long, value_delimiter = ',', default_value = "3,4")]
        pair_cameras: Vec<u32>,
    },
    /// Train a predictor on a dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        mode: Mode,
        /// Training TOML; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Train only on this basestation's sequences.
        #[arg(long)]
        basestation: Option<u8>,
        /// Train only on this camera's sequences.
        #[arg(long)]
        camera: Option<u32>,
        #[arg(long, default_value_t = 3)]
        embedding_seed: u64,
        /// Per-epoch metrics CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset's validation split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score proactive handoff on conjugate pairs.
    HandoffEval {
        #[arg(long)]
        ckpt1: PathBuf,
        #[arg(long)]
        ckpt2: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Row label in the CSV.
        #[arg(long, default_value = "model")]
        name: String,
    },
    /// Run every stage from one experiment TOML.
    RunExperiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, frames, out } => {
            let cfg = match config {
                Some(p) => ScenarioConfig::load(&p)?,
                None => ScenarioConfig::default(),
            };
            if frames == 0 {
                return Err(Error::InvalidParameter("--frames must be positive".into()));
            }
            write_trace(&out, &cfg, &simulate(&cfg, frames)?)?;
            log::info!("wrote {frames} frames to {}", out.display());
        }
        Command::BuildDataset {
            trace,
            out,
            quota,
            seed,
            train_fraction,
            pairs_per_category,
            pair_cameras,
        } => {
            let (cfg, frames) = read_trace(&trace)?;
            let opts = BuildOptions {
                quota,
                train_fraction,
                seed,
                pairs_per_category,
                pair_cameras: pair_cameras.into_iter().filter(|&c| c != 0).collect(),
            };
            let ds = build_dataset(&frames, &cfg, &opts)?;
            write_dataset(&out, &ds)?;
            log::info!(
                "{} train, {} val, {} pairs written to {}",
                ds.train.len(),
                ds.val.len(),
                ds.pairs.len(),
                out.display()
            );
        }
        Command::Train {
            dataset,
            mode,
            config,
            out,
            basestation,
            camera,
            embedding_seed,
            history,
        } => {
            let tcfg = match config {
                Some(p) => TrainConfig::from_toml_str(&std::fs::read_to_string(p)?)?,
                None => TrainConfig::default(),
            };
            let ds = read_dataset(&dataset)?;
            let (ckpt, hist) = train_model(&ds, mode, &tcfg, Subset { basestation, camera }, ds.manifest.beams, embedding_seed)?;
            save_checkpoint(&out, &ckpt)?;
            if let Some(h) = history {
                std::fs::write(h, history_csv(&hist))?;
            }
        }
        Command::Eval { ckpt, dataset, out } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let ds = read_dataset(&dataset)?;
            let (rep, _) = evaluate_checkpoint(&ckpt, &ds.val)?;
            std::fs::write(&out, report_csv(&rep))?;
            println!("top-1 {:.4} over {} samples", rep.top1, rep.confusion.total());
        }
        Command::HandoffEval {
            ckpt1,
            ckpt2,
            pairs,
            out,
            name,
        } => {
            let c1 = load_checkpoint(&ckpt1)?;
            let c2 = load_checkpoint(&ckpt2)?;
            let pairs = read_pairs(&pairs)?;
            let rep = evaluate_handoff((&c1.net, &c1.table()), (&c2.net, &c2.table()), &pairs)?;
            std::fs::write(&out, handoff_csv(&[(&name, &rep)]))?;
        }
        Command::RunExperiment { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let res = run_experiment(&cfg)?;
            for (mode, rep) in &res.reports {
                println!("{:<10} top-1 {:.4}", mode.name(), rep.top1);
            }
            println!("artifacts in {}", res.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
