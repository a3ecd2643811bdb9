//! Throughput measurement across parallel environment counts.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::ppo::{derive_seed, TrainConfig, TrainError, Trainer};
use crate::sim::{self, StepError, WorldState};

pub const SCHEMA: &str = "econsim-bench/1";
pub const DEFAULT_ENV_COUNTS: [usize; 5] = [1, 2, 4, 8, 16];

const STREAM_BENCH: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    /// Environment stepping with uniformly random valid actions.
    Step,
    /// Rollout collection plus PPO update.
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: BenchMode,
    pub num_envs: usize,
    /// Agent steps: environment steps times population size.
    pub agent_steps: u64,
    pub seconds: f64,
    pub agent_steps_per_sec: f64,
    /// Throughput relative to the single-env row of the same mode.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub population_size: usize,
    pub threads: usize,
    pub steps_per_env: u32,
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub env_counts: Vec<usize>,
    /// Steps per env in each measurement; the train mode rounds this to
    /// whole rollouts.
    pub steps_per_env: u32,
    pub seed: u64,
}

/// Steps `num_envs` economies `steps` times each with random valid actions.
/// Returns the number of agent steps taken.
pub fn random_steps(env: &EnvConfig, num_envs: usize, steps: u32, seed: u64) -> Result<u64, StepError> {
    let config = Arc::new(env.clone());
    let mut slots: Vec<(WorldState, ChaCha8Rng)> = (0..num_envs)
        .map(|i| {
            let s = derive_seed(seed, &[STREAM_BENCH, i as u64]);
            (
                sim::reset(&config, s).expect("validated config"),
                ChaCha8Rng::seed_from_u64(s),
            )
        })
        .collect();
    let n = env.population_size;
    let size = env.action_space().size();
    slots.par_iter_mut().try_for_each(|(state, rng)| {
        let mut mask = vec![false; size];
        let mut actions = vec![0; n];
        let mut allowed = Vec::with_capacity(size);
        for _ in 0..steps {
            for (i, a) in actions.iter_mut().enumerate() {
                sim::action_mask_into(&config, state, i, &mut mask);
                allowed.clear();
                allowed.extend((0..size).filter(|&k| mask[k]));
                *a = allowed[rng.random_range(0..allowed.len())];
            }
            let out = sim::step(&config, state, &actions, None)?;
            if out.done {
                *state = sim::reset(&config, rng.random()).expect("validated config");
            }
        }
        Ok::<(), StepError>(())
    })?;
    Ok(num_envs as u64 * u64::from(steps) * n as u64)
}

fn train_steps(
    env: &EnvConfig,
    train: &TrainConfig,
    num_envs: usize,
    steps: u32,
    seed: u64,
) -> Result<u64, TrainError> {
    let mut train = train.clone();
    train.num_envs = num_envs;
    train.rollout_length = train.rollout_length.min(steps.max(1) as usize);
    let updates = (steps as usize).div_ceil(train.rollout_length).max(1);
    train.total_timesteps = (updates * train.rollout_length * num_envs) as u64;
    train.num_minibatches = train.num_minibatches.min(train.rollout_length * num_envs);
    let mut trainer = Trainer::new(env.clone(), train, seed)?;
    trainer.train(|_, _| Ok(()))?;
    Ok(trainer.global_step * env.population_size as u64)
}

/// Measures both modes for every env count. Step counts depend only on the
/// configuration; timings are wall-clock.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, TrainError> {
    config.env.validate()?;
    config.train.validate()?;
    let mut rows = Vec::new();
    for mode in [BenchMode::Step, BenchMode::Train] {
        let mut base = None;
        for &num_envs in &config.env_counts {
            let start = Instant::now();
            let agent_steps = match mode {
                BenchMode::Step => random_steps(&config.env, num_envs, config.steps_per_env, config.seed)?,
                BenchMode::Train => {
                    train_steps(&config.env, &config.train, num_envs, config.steps_per_env, config.seed)?
                }
            };
            let seconds = start.elapsed().as_secs_f64().max(1e-9);
            let rate = agent_steps as f64 / seconds;
            let base_rate = *base.get_or_insert(rate);
            rows.push(BenchRow {
                mode,
                num_envs,
                agent_steps,
                seconds,
                agent_steps_per_sec: rate,
                speedup: rate / base_rate,
            });
        }
    }
    Ok(BenchReport {
        schema: SCHEMA.to_string(),
        population_size: config.env.population_size,
        threads: rayon::current_num_threads(),
        steps_per_env: config.steps_per_env,
        rows,
    })
}

impl BenchReport {
    /// Plain-text table of the rows.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<6} {:>5} {:>12} {:>10} {:>14} {:>8}\n",
            "mode", "envs", "agent_steps", "seconds", "steps/sec", "speedup"
        );
        for r in &self.rows {
            let mode = match r.mode {
                BenchMode::Step => "step",
                BenchMode::Train => "train",
            };
            s.push_str(&format!(
                "{mode:<6} {:>5} {:>12} {:>10.3} {:>14.0} {:>8.2}\n",
                r.num_envs, r.agent_steps, r.seconds, r.agent_steps_per_sec, r.speedup
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchConfig {
        let env = EnvConfig {
            population_size: 4,
            ..EnvConfig::default()
        };
        let train = TrainConfig {
            hidden_width: 8,
            shared_hidden_width: 8,
            rollout_length: 20,
            ..TrainConfig::default()
        };
        BenchConfig {
            env,
            train,
            env_counts: vec![1, 2],
            steps_per_env: 40,
            seed: 0,
        }
    }

    #[test]
    fn report_has_positive_rates_and_fixed_counts() {
        let a = run_bench(&tiny()).unwrap();
        let b = run_bench(&tiny()).unwrap();
        assert_eq!(a.schema, SCHEMA);
        assert_eq!(a.rows.len(), 4);
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert!(x.agent_steps_per_sec > 0.0);
            assert_eq!((x.mode, x.num_envs, x.agent_steps), (y.mode, y.num_envs, y.agent_steps));
        }
        assert_eq!(a.rows[0].agent_steps, 40 * 4);
        assert_eq!(a.rows[3].agent_steps, 2 * 40 * 4);
        let json = serde_json::to_value(&a).unwrap();
        for key in ["schema", "population_size", "threads", "steps_per_env", "rows"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
