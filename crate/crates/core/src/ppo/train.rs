use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rollout::derive_seed;
use super::update::{update_government, update_population, LossStats, UpdateParams};
use super::{collect_rollout, GovernmentModel, PopulationModel, RolloutStats, TrainConfig, VecEnv};
use crate::config::{ConfigError, EnvConfig};
use crate::nn::NnError;
use crate::sim::StepError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("environment step failed: {0}")]
    Step(#[from] StepError),
    #[error("update {update} aborted: {source}")]
    Update { update: u64, source: NnError },
    #[error("{0}")]
    Sink(String),
}

const STREAM_INIT: u64 = 10;
const STREAM_SHUFFLE: u64 = 11;

/// Everything produced by one rollout plus the update that followed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    /// Zero-based update index.
    pub update: u64,
    /// Environment steps consumed after this update.
    pub global_step: u64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub rollout: RolloutStats,
    pub population: LossStats,
    pub government: Option<LossStats>,
}

/// Population and government learners over a [`VecEnv`].
#[derive(Debug, Clone)]
pub struct Trainer {
    pub env_config: Arc<EnvConfig>,
    pub config: TrainConfig,
    pub seed: u64,
    pub population: PopulationModel,
    pub government: Option<GovernmentModel>,
    pub envs: VecEnv,
    pub update: u64,
    pub global_step: u64,
    shuffle_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(env_config: EnvConfig, config: TrainConfig, seed: u64) -> Result<Self, ConfigError> {
        env_config.validate()?;
        config.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_INIT]));
        let population = PopulationModel::new(&env_config, &config, &mut init);
        let government = (config.government_enabled && env_config.taxes_enabled)
            .then(|| GovernmentModel::new(&env_config, &config, &mut init));
        let env_config = Arc::new(env_config);
        let envs = VecEnv::new(Arc::clone(&env_config), config.num_envs, seed)?;
        Ok(Trainer {
            env_config,
            config,
            seed,
            population,
            government,
            envs,
            update: 0,
            global_step: 0,
            shuffle_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_SHUFFLE])),
        })
    }

    pub fn num_updates(&self) -> u64 {
        self.config.num_updates()
    }

    pub fn is_finished(&self) -> bool {
        self.update >= self.num_updates()
    }

    /// Fraction of the run completed before the next update.
    pub fn progress(&self) -> f64 {
        self.update as f64 / self.num_updates().max(1) as f64
    }

    /// Collects one rollout and runs the PPO update for every learner.
    pub fn step(&mut self) -> Result<UpdateReport, TrainError> {
        let mut rollout = collect_rollout(
            &mut self.envs,
            &self.population,
            self.government.as_ref(),
            self.config.rollout_length,
        )?;
        let (gamma, lambda) = (self.config.gamma, self.config.gae_lambda);
        rollout.population.compute_advantages(gamma, lambda);
        if let Some(g) = rollout.government.as_mut() {
            g.compute_advantages(gamma, lambda);
        }
        let params = UpdateParams::from_config(&self.config, self.progress());
        let update = self.update;
        let wrap = |source| TrainError::Update { update, source };
        let population = update_population(
            &mut self.population,
            &rollout.population,
            &params,
            &mut self.shuffle_rng,
        )
        .map_err(wrap)?;
        let government = match (self.government.as_mut(), rollout.government.as_ref()) {
            (Some(model), Some(batch)) => {
                Some(update_government(model, batch, &params, &mut self.shuffle_rng).map_err(wrap)?)
            }
            _ => None,
        };
        self.update += 1;
        self.global_step += self.config.steps_per_update();
        Ok(UpdateReport {
            update,
            global_step: self.global_step,
            learning_rate: params.lr,
            entropy_coef: params.entropy_coef,
            rollout: rollout.stats,
            population,
            government,
        })
    }

    /// Runs the remaining updates, passing each report to `sink`.
    pub fn train<F>(&mut self, mut sink: F) -> Result<(), TrainError>
    where
        F: FnMut(&Trainer, &UpdateReport) -> Result<(), TrainError>,
    {
        while !self.is_finished() {
            let report = self.step()?;
            sink(self, &report)?;
        }
        Ok(())
    }
}
