use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use econsim::harness::bench::{run_bench, BenchConfig, DEFAULT_ENV_COUNTS};
use econsim::harness::eval::DEFAULT_EVAL_SEEDS;
use econsim::harness::{self, Checkpoint, HarnessError, RunConfig, OUTPUT_ROOT_VAR};
use econsim::ppo::Preset;
use econsim::ConfigError;

#[derive(Parser)]
#[command(
    name = "econsim",
    version,
    about = "Train, evaluate and benchmark the economy simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train population and government agents.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output root; the run goes to `<root>/<name>` unless `output_dir` is set.
        #[arg(long, env = OUTPUT_ROOT_VAR)]
        output_root: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over a set of environment seeds.
    Eval {
        /// Checkpoint file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EVAL_SEEDS)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Override environment settings of the checkpoint's config.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Evaluate even if the environment differs from training.
        #[arg(long)]
        force: bool,
        /// Directory for eval CSVs (default: `eval/` next to the checkpoint).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Measure env-agent-steps/sec for stepping and training.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated parallel env counts.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ENV_COUNTS)]
        envs: Vec<usize>,
        /// Steps per env for each measurement.
        #[arg(long, default_value_t = 300)]
        steps: u32,
        /// Also write the JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the resolved run configuration.
    PrintConfig {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Format::Toml)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Toml,
    Json,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset supplying defaults; replaces the file's preset.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for `--set train.total_timesteps=N`.
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    name: Option<String>,
    /// Output directory, overriding `<root>/<name>`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override any key, e.g. `--set env.population_size=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut run = match &self.config {
            Some(path) => {
                let text =
                    fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::from_preset(Preset::Section4Default),
        };
        let mut sets = Vec::new();
        if let Some(p) = self.preset {
            sets.push(format!("preset=\"{}\"", p.name()));
            if self.config.is_none() && self.name.is_none() {
                sets.push(format!("name=\"{}\"", p.name()));
            }
        }
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        if let Some(n) = self.total_steps {
            sets.push(format!("train.total_timesteps={n}"));
        }
        if let Some(n) = &self.name {
            sets.push(format!("name={}", toml_str(n)));
        }
        if let Some(o) = &self.output {
            sets.push(format!("output_dir={}", toml_str(&o.display().to_string())));
        }
        sets.extend(self.set.iter().cloned());
        run.apply_assignments(&sets)?;
        Ok(run)
    }
}

fn toml_str(s: &str) -> String {
    serde_json::to_string(s).expect("string")
}

fn train(config: &ConfigArgs, root: Option<&Path>) -> Result<(), HarnessError> {
    let run = config.resolve()?;
    harness::note(&format!(
        "training {} (config {}, seed {}) for {} steps",
        run.name,
        run.config_hash(),
        run.seed,
        run.train.total_timesteps
    ));
    let out = harness::run_training(&run, root)?;
    println!("{}", out.dir.display());
    Ok(())
}

fn eval(
    checkpoint: &Path,
    seeds: usize,
    first_seed: u64,
    set: &[String],
    force: bool,
    output: Option<&Path>,
) -> Result<(), HarnessError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut run = ckpt.run.clone();
    run.apply_assignments(set)?;
    let result = harness::evaluate_checkpoint(&ckpt, &run.env, seeds, first_seed, force)?;
    let dir = match output {
        Some(d) => d.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join("eval"),
    };
    harness::write_eval(&dir, &run.env, &result, &run.config_hash()).map_err(|source| HarnessError::Io {
        path: dir.clone(),
        source,
    })?;
    println!("{}", dir.display());
    Ok(())
}

fn bench(config: &ConfigArgs, envs: Vec<usize>, steps: u32, output: Option<&Path>) -> Result<(), HarnessError> {
    let mut cfg = config.clone();
    if !config
        .set
        .iter()
        .any(|s| s.trim_start().starts_with("env.population_size"))
    {
        cfg.set.insert(0, "env.population_size=4".into());
    }
    let run = cfg.resolve()?;
    if envs.is_empty() || envs.contains(&0) {
        return Err(ConfigError::invalid("envs", "must be positive").into());
    }
    let report = run_bench(&BenchConfig {
        env: run.env,
        train: run.train,
        env_counts: envs,
        steps_per_env: steps,
        seed: run.seed,
    })?;
    let json = serde_json::to_string_pretty(&report).expect("serializable report");
    harness::note(&report.table());
    if let Some(path) = output {
        fs::write(path, format!("{json}\n")).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    println!("{json}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train { config, output_root } => train(&config, output_root.as_deref()),
        Command::Eval {
            checkpoint,
            seeds,
            first_seed,
            set,
            force,
            output,
        } => eval(&checkpoint, seeds, first_seed, &set, force, output.as_deref()),
        Command::Bench {
            config,
            envs,
            steps,
            json,
        } => bench(&config, envs, steps, json.as_deref()),
        Command::PrintConfig { config, format } => {
            let run = config.resolve()?;
            match format {
                Format::Toml => print!("{}", run.to_toml()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&run).expect("serializable")),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_config() => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
