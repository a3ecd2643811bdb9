//! Multi-agent economy simulation with an integrated PPO trainer.
//!
//! Population agents gather resources, craft them into coin and trade on a
//! per-resource double auction; a government agent sets marginal tax rates
//! per bracket. The [`sim`] engine is deterministic given a seed, and
//! [`ppo`] trains both agent types simultaneously over vectorized copies of
//! the economy.

pub mod config;
pub mod harness;
pub mod market;
pub mod nn;
pub mod obs;
pub mod ppo;
pub mod sim;
pub mod tax;
pub mod welfare;

pub use config::{ConfigError, EnvConfig, SkillInit, SkillInitKind, RATE_LEVELS};
pub use market::{MarketState, Order, Side, Trade};
pub use sim::{Action, ActionSpace, AgentState, Economy, StepError, StepOutcome, WorldState};
pub use tax::{RateAction, TaxState};
pub use welfare::{SocialWelfare, WelfareSnapshot};
