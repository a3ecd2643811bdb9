//! PPO over vectorized economies.
//!
//! Population agents and the government learn simultaneously. Population
//! networks are wired by [`SharingMode`]; the government always has its own
//! policy (one categorical per tax bracket) and value network.

mod config;
mod gae;
mod model;
mod rollout;
mod train;
pub mod update;

pub use config::{Preset, SharingMode, TrainConfig, DUTCH_2025_SCALED_THRESHOLDS};
pub use gae::{compute_gae, gae};
pub use model::{GovernmentModel, Network, PopulationModel};
pub use rollout::{
    collect_rollout, derive_seed, EnvSlot, EpisodeRecord, GovernmentBatch, PopulationBatch, Rollout, RolloutStats,
    VecEnv,
};
pub use train::{TrainError, Trainer, UpdateReport};
pub use update::{LossStats, UpdateParams};
