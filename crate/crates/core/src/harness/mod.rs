//! Run configuration, training driver, metrics files, checkpoints,
//! evaluation and throughput benchmarks.
//!
//! A training run writes into its output directory:
//!
//! - `config.json`: the resolved [`RunConfig`] with its config hash and seed
//! - `obs_layout.txt`: observation vector layouts
//! - `metrics.csv`: one row per rollout, see [`metrics::metrics_header`]
//! - `episodes.csv`: one row per finished training episode
//! - `timing.csv`: wall-clock seconds and steps/sec per rollout
//! - `checkpoints/update_NNNNNN.json` every `train.checkpoint_interval`
//!   updates, and `checkpoint.json` at the end
//!
//! Every file carries the config hash and seed, either as columns or in a
//! header line.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod metrics;

use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{env_hash, RunConfig};
pub use eval::{evaluate, evaluate_checkpoint, write_eval, EvalError, EvalResult};
pub use metrics::{fmt_g9, metrics_header, CsvSink};

use crate::config::ConfigError;
use crate::obs;
use crate::ppo::{TrainError, Trainer};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "ECONSIM_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_) | HarnessError::Train(TrainError::Config(_))
        )
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `output_dir` when set, else `<root>/<name>` where `root` comes from
/// [`OUTPUT_ROOT_VAR`] or defaults to `runs`.
pub fn output_dir(run: &RunConfig, root: Option<&Path>) -> PathBuf {
    if let Some(dir) = &run.output_dir {
        return dir.clone();
    }
    let root = root.map(Path::to_path_buf).unwrap_or_else(|| {
        std::env::var_os(OUTPUT_ROOT_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    });
    root.join(&run.name)
}

/// What a finished training run left behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub updates: u64,
    pub global_step: u64,
    pub final_checkpoint: PathBuf,
}

fn write_snapshot(dir: &Path, run: &RunConfig) -> Result<(), HarnessError> {
    let hash = run.config_hash();
    let snapshot = serde_json::json!({
        "config_hash": hash,
        "env_hash": run.env_hash(),
        "seed": run.seed,
        "run": run,
    });
    let path = dir.join("config.json");
    let text = serde_json::to_string_pretty(&snapshot).expect("serializable config");
    fs::write(&path, text + "\n").map_err(io_at(&path))?;

    let path = dir.join("obs_layout.txt");
    let mut text = format!("# config_hash={hash} seed={}\n", run.seed);
    text.push_str(&obs::population_layout(&run.env, run.train.sharing_mode.uses_agent_id()).schema("population"));
    text.push_str(&obs::government_layout(&run.env).schema("government"));
    fs::write(&path, text).map_err(io_at(&path))
}

/// Trains `run` to completion, writing all outputs into its output
/// directory (created if missing, files overwritten).
pub fn run_training(run: &RunConfig, root: Option<&Path>) -> Result<TrainOutcome, HarnessError> {
    run.validate()?;
    let dir = output_dir(run, root);
    fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    write_snapshot(&dir, run)?;
    let hash = run.config_hash();
    let seed = run.seed;

    let path = dir.join("metrics.csv");
    let mut metrics = CsvSink::create(&path, &metrics_header(&run.env)).map_err(io_at(&path))?;
    let path = dir.join("episodes.csv");
    let mut episodes = CsvSink::create(&path, &metrics::episodes_header(&run.env)).map_err(io_at(&path))?;
    let path = dir.join("timing.csv");
    let timing_header = ["update", "seed", "config_hash", "seconds", "steps_per_sec"].map(String::from);
    let mut timing = CsvSink::create(&path, &timing_header).map_err(io_at(&path))?;

    let mut trainer = Trainer::new(run.env.clone(), run.train.clone(), seed)?;
    let interval = run.train.checkpoint_interval;
    let ckpt_dir = dir.join("checkpoints");
    let sink_err = |e: io::Error| TrainError::Sink(e.to_string());
    let mut clock = Instant::now();
    trainer.train(|t, report| {
        let seconds = clock.elapsed().as_secs_f64();
        clock = Instant::now();
        metrics
            .write_row(&metrics::metrics_row(report, seed, &hash))
            .map_err(sink_err)?;
        for e in &report.rollout.episodes {
            let row = metrics::episode_row(e, report.global_step, report.update, seed, &hash);
            episodes.write_row(&row).map_err(sink_err)?;
        }
        let rate = t.config.steps_per_update() as f64 / seconds.max(1e-9);
        timing
            .write_row(&[
                report.update.to_string(),
                seed.to_string(),
                hash.clone(),
                fmt_g9(seconds),
                fmt_g9(rate),
            ])
            .map_err(sink_err)?;
        if interval > 0 && t.update % interval as u64 == 0 && !t.is_finished() {
            fs::create_dir_all(&ckpt_dir).map_err(sink_err)?;
            let path = ckpt_dir.join(format!("update_{:06}.json", t.update));
            Checkpoint::from_trainer(run, t).save(&path).map_err(sink_err)?;
            metrics.flush().map_err(sink_err)?;
        }
        Ok(())
    })?;
    for (sink, name) in [
        (&mut metrics, "metrics.csv"),
        (&mut episodes, "episodes.csv"),
        (&mut timing, "timing.csv"),
    ] {
        sink.flush().map_err(io_at(&dir.join(name)))?;
    }
    let final_checkpoint = dir.join("checkpoint.json");
    Checkpoint::from_trainer(run, &trainer)
        .save(&final_checkpoint)
        .map_err(io_at(&final_checkpoint))?;
    Ok(TrainOutcome {
        dir,
        updates: trainer.update,
        global_step: trainer.global_step,
        final_checkpoint,
    })
}

/// Writes a line to stderr, ignoring failures.
pub fn note(msg: &str) {
    let _ = writeln!(io::stderr(), "{msg}");
}
