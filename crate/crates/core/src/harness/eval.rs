//! Frozen-policy evaluation over a set of environment seeds.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{fmt_g9, CsvSink};
use super::{Checkpoint, CheckpointError};
use crate::config::EnvConfig;
use crate::obs::summary_stats;
use crate::ppo::{derive_seed, GovernmentModel, PopulationModel};
use crate::sim::{self, Action, StepError};
use crate::welfare::social_welfare;

pub const DEFAULT_EVAL_SEEDS: usize = 15;

const STREAM_EVAL_SAMPLE: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub seed: u64,
    pub return_mean: f64,
    pub return_median: f64,
    pub productivity: f64,
    pub equality: f64,
    pub government_utility: f64,
    /// Rates in force during the last tax period.
    pub tax_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub episodes: Vec<EvalEpisode>,
    /// `(seed, agent, counts per action bin)`, bins from [`action_bins`].
    pub actions: Vec<(u64, usize, Vec<u64>)>,
    /// `(seed, step, resource, trades, mean price)`; only steps with trades.
    pub prices: Vec<(u64, u32, usize, u64, f64)>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Action bins: gather and trade actions grouped by resource.
pub fn action_bins(env: &EnvConfig) -> Vec<String> {
    let r = env.num_resources;
    let mut bins: Vec<String> = (0..r).map(|i| format!("gather_{i}")).collect();
    bins.push("craft".into());
    bins.extend((0..r).map(|i| format!("buy_{i}")));
    bins.extend((0..r).map(|i| format!("sell_{i}")));
    bins.push("noop".into());
    bins
}

fn bin_of(action: Action, r: usize) -> usize {
    match action {
        Action::Gather(i) => i,
        Action::Craft => r,
        Action::Buy { resource, .. } => r + 1 + resource,
        Action::Sell { resource, .. } => 2 * r + 1 + resource,
        Action::Noop => 3 * r + 1,
    }
}

/// Plays one episode per seed in `seeds` with the given models.
pub fn evaluate(
    env: &EnvConfig,
    population: &PopulationModel,
    government: Option<&GovernmentModel>,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<EvalResult, StepError> {
    let space = env.action_space();
    let r = env.num_resources;
    let nbins = action_bins(env).len();
    let mut result = EvalResult {
        episodes: Vec::new(),
        actions: Vec::new(),
        prices: Vec::new(),
    };
    for seed in seeds {
        let mut state = sim::reset(env, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_EVAL_SAMPLE]));
        let mut counts = vec![vec![0u64; nbins]; env.population_size];
        let mut returns = vec![0.0; env.population_size];
        let mut final_rates = state.tax.current_rates.clone();
        loop {
            let actions = population.act(env, &state, &mut rng);
            let rates = government.map(|g| g.act(env, &state, &mut rng));
            for (i, &a) in actions.iter().enumerate() {
                counts[i][bin_of(space.decode(a).expect("valid index"), r)] += 1;
            }
            if state.timestep + 1 == env.episode_length {
                final_rates = state.tax.current_rates.clone();
            }
            let t = state.timestep;
            let out = sim::step(env, &mut state, &actions, rates.as_ref())?;
            for (acc, x) in returns.iter_mut().zip(&out.rewards) {
                *acc += x;
            }
            let mut sums = vec![(0u64, 0.0); r];
            for tr in &out.trades {
                sums[tr.resource].0 += 1;
                sums[tr.resource].1 += f64::from(tr.price);
            }
            for (res, (c, s)) in sums.into_iter().enumerate() {
                if c > 0 {
                    result.prices.push((seed, t, res, c, s / c as f64));
                }
            }
            if out.done {
                break;
            }
        }
        let w = social_welfare(&state.coins(), env.equality_weight);
        let [mean, _, median] = summary_stats(&mut returns);
        result.episodes.push(EvalEpisode {
            seed,
            return_mean: mean,
            return_median: median,
            productivity: w.productivity,
            equality: w.equality,
            government_utility: w.utility,
            tax_rates: final_rates,
        });
        for (i, c) in counts.into_iter().enumerate() {
            result.actions.push((seed, i, c));
        }
    }
    Ok(result)
}

/// Loads a checkpoint and evaluates it on `env`, refusing a checkpoint whose
/// environment hash differs unless `force` is set.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    env: &EnvConfig,
    num_seeds: usize,
    first_seed: u64,
    force: bool,
) -> Result<EvalResult, EvalError> {
    ckpt.check_env(&super::env_hash(env), force)?;
    let (pop, gov) = ckpt.models()?;
    let seeds = (0..num_seeds as u64).map(|i| first_seed + i);
    Ok(evaluate(env, &pop, gov.as_ref(), seeds)?)
}

/// Writes `eval_episodes.csv`, `eval_actions.csv` and `eval_prices.csv`.
pub fn write_eval(dir: &Path, env: &EnvConfig, result: &EvalResult, config_hash: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut header: Vec<String> = [
        "seed",
        "config_hash",
        "return_mean",
        "return_median",
        "productivity",
        "equality",
        "government_utility",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..env.num_brackets()).map(|b| format!("tax_rate_{b}")));
    let mut sink = CsvSink::create(&dir.join("eval_episodes.csv"), &header)?;
    for e in &result.episodes {
        let mut row = vec![
            e.seed.to_string(),
            config_hash.to_string(),
            fmt_g9(e.return_mean),
            fmt_g9(e.return_median),
            fmt_g9(e.productivity),
            fmt_g9(e.equality),
            fmt_g9(e.government_utility),
        ];
        row.extend(e.tax_rates.iter().map(|&x| fmt_g9(x)));
        sink.write_row(&row)?;
    }
    sink.flush()?;

    let mut header: Vec<String> = ["seed", "config_hash", "agent"].map(String::from).to_vec();
    header.extend(action_bins(env).into_iter().map(|b| format!("frac_{b}")));
    let mut sink = CsvSink::create(&dir.join("eval_actions.csv"), &header)?;
    for (seed, agent, counts) in &result.actions {
        let total: u64 = counts.iter().sum::<u64>().max(1);
        let mut row = vec![seed.to_string(), config_hash.to_string(), agent.to_string()];
        row.extend(counts.iter().map(|&c| fmt_g9(c as f64 / total as f64)));
        sink.write_row(&row)?;
    }
    sink.flush()?;

    let header = ["seed", "config_hash", "step", "resource", "trades", "price_mean"].map(String::from);
    let mut sink = CsvSink::create(&dir.join("eval_prices.csv"), &header)?;
    for (seed, step, res, count, price) in &result.prices {
        sink.write_row(&[
            seed.to_string(),
            config_hash.to_string(),
            step.to_string(),
            res.to_string(),
            count.to_string(),
            fmt_g9(*price),
        ])?;
    }
    sink.flush()
}
