use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{multi_resource_distinct_required, ConfigError, EnvConfig, SkillInit, SkillInitKind};
use crate::nn::AdamConfig;

/// How population agents map onto networks. The government always has its
/// own policy and value network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingMode {
    /// One policy and one value network for every agent.
    Shared,
    /// A policy and a value network per agent.
    Independent,
    /// A policy per agent, one value network over everyone's local observations.
    CtdeNaive,
    /// Like `Shared`, with a one-hot agent id appended to observations.
    SharedAgentId,
}

impl SharingMode {
    pub const ALL: [SharingMode; 4] = [
        SharingMode::Shared,
        SharingMode::Independent,
        SharingMode::CtdeNaive,
        SharingMode::SharedAgentId,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SharingMode::Shared => "shared",
            SharingMode::Independent => "independent",
            SharingMode::CtdeNaive => "ctde_naive",
            SharingMode::SharedAgentId => "shared_agent_id",
        }
    }

    pub fn uses_agent_id(self) -> bool {
        self == SharingMode::SharedAgentId
    }
}

impl fmt::Display for SharingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SharingMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ConfigError::invalid("train.sharing_mode", format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Environment steps summed over all parallel envs.
    pub total_timesteps: u64,
    /// Initial learning rate, annealed linearly to 0 over the run.
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    /// Initial entropy coefficient, annealed linearly to 0 over the first
    /// `entropy_anneal_fraction` of the run.
    pub entropy_coef: f64,
    pub entropy_anneal_fraction: f64,
    pub value_coef: f64,
    /// Predicted values are kept within this distance of the rollout values
    /// in the value loss; 0 disables clipping.
    pub value_clip: f64,
    pub rollout_length: usize,
    pub num_epochs: usize,
    pub num_minibatches: usize,
    pub num_envs: usize,
    /// Width of both hidden layers for per-agent and government networks.
    pub hidden_width: usize,
    /// Width used for networks shared by the whole population.
    pub shared_hidden_width: usize,
    pub sharing_mode: SharingMode,
    pub government_enabled: bool,
    pub normalize_advantages: bool,
    /// Global gradient norm limit per network; 0 disables clipping.
    pub max_grad_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Write a checkpoint every this many updates; 0 keeps only the final one.
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_timesteps: 10_000_000,
            learning_rate: 5e-4,
            gamma: 0.999,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            entropy_coef: 0.1,
            entropy_anneal_fraction: 0.9,
            value_coef: 0.25,
            value_clip: 10.0,
            rollout_length: 150,
            num_epochs: 6,
            num_minibatches: 6,
            num_envs: 10,
            hidden_width: 128,
            shared_hidden_width: 128,
            sharing_mode: SharingMode::Shared,
            government_enabled: true,
            normalize_advantages: true,
            max_grad_norm: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_interval: 0,
        }
    }
}

fn check(cond: bool, field: &str, reason: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::invalid(format!("train.{field}"), reason))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.total_timesteps > 0, "total_timesteps", "must be > 0")?;
        check(
            self.learning_rate.is_finite() && self.learning_rate >= 0.0,
            "learning_rate",
            "must be finite and >= 0",
        )?;
        check((0.0..=1.0).contains(&self.gamma), "gamma", "must lie in [0, 1]")?;
        check(
            (0.0..=1.0).contains(&self.gae_lambda),
            "gae_lambda",
            "must lie in [0, 1]",
        )?;
        check(self.clip_eps > 0.0, "clip_eps", "must be > 0")?;
        check(self.entropy_coef >= 0.0, "entropy_coef", "must be >= 0")?;
        check(
            self.entropy_anneal_fraction > 0.0 && self.entropy_anneal_fraction <= 1.0,
            "entropy_anneal_fraction",
            "must lie in (0, 1]",
        )?;
        check(self.value_coef >= 0.0, "value_coef", "must be >= 0")?;
        check(self.value_clip >= 0.0, "value_clip", "must be >= 0")?;
        check(self.rollout_length >= 1, "rollout_length", "must be >= 1")?;
        check(self.num_epochs >= 1, "num_epochs", "must be >= 1")?;
        check(self.num_minibatches >= 1, "num_minibatches", "must be >= 1")?;
        check(self.num_envs >= 1, "num_envs", "must be >= 1")?;
        check(self.hidden_width >= 1, "hidden_width", "must be >= 1")?;
        check(self.shared_hidden_width >= 1, "shared_hidden_width", "must be >= 1")?;
        check(self.max_grad_norm >= 0.0, "max_grad_norm", "must be >= 0")?;
        check(
            (0.0..1.0).contains(&self.adam_beta1),
            "adam_beta1",
            "must lie in [0, 1)",
        )?;
        check(
            (0.0..1.0).contains(&self.adam_beta2),
            "adam_beta2",
            "must lie in [0, 1)",
        )?;
        check(self.adam_eps > 0.0, "adam_eps", "must be > 0")?;
        Ok(())
    }

    /// Environment steps consumed by one rollout.
    pub fn steps_per_update(&self) -> u64 {
        (self.rollout_length * self.num_envs) as u64
    }

    pub fn num_updates(&self) -> u64 {
        self.total_timesteps / self.steps_per_update()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            max_grad_norm: (self.max_grad_norm > 0.0).then_some(self.max_grad_norm),
        }
    }

    pub fn value_clip(&self) -> Option<f64> {
        (self.value_clip > 0.0).then_some(self.value_clip)
    }

    /// Learning rate after `progress` (fraction of updates done) of the run.
    pub fn lr_at(&self, progress: f64) -> f64 {
        self.learning_rate * (1.0 - progress).max(0.0)
    }

    pub fn entropy_coef_at(&self, progress: f64) -> f64 {
        self.entropy_coef * (1.0 - progress / self.entropy_anneal_fraction).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Standard single-population economy with a learning government.
    Section4Default,
    /// Larger multi-resource economy used to compare sharing modes.
    Section5Multiagent,
    /// Standard economy without taxes or government.
    FreeMarket,
    /// Standard economy with brackets at [`DUTCH_2025_SCALED_THRESHOLDS`].
    Section4Dutch,
}

/// Rough approximation of the 2025 Dutch income tax brackets divided by
/// 100. Not an exact transcription of any published schedule.
pub const DUTCH_2025_SCALED_THRESHOLDS: [f64; 2] = [380.0, 770.0];

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Section4Default,
        Preset::Section5Multiagent,
        Preset::FreeMarket,
        Preset::Section4Dutch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Section4Default => "section4_default",
            Preset::Section5Multiagent => "section5_multiagent",
            Preset::FreeMarket => "free_market",
            Preset::Section4Dutch => "section4_dutch",
        }
    }

    /// The economy presets draw skills from an unnormalized Pareto with
    /// noise, so most agents are reasonably skilled at something and
    /// crafting can repay its labor.
    pub fn configs(self) -> (EnvConfig, TrainConfig) {
        let mut env = EnvConfig::default();
        env.skill_init.kind = SkillInitKind::ParetoNoise;
        env.skill_init.pareto_normalize = false;
        let train = TrainConfig::default();
        match self {
            Preset::Section4Default => (env, train),
            Preset::Section4Dutch => (
                EnvConfig {
                    bracket_thresholds: DUTCH_2025_SCALED_THRESHOLDS.to_vec(),
                    ..env
                },
                train,
            ),
            Preset::FreeMarket => (
                EnvConfig {
                    taxes_enabled: false,
                    ..env
                },
                TrainConfig {
                    government_enabled: false,
                    ..train
                },
            ),
            Preset::Section5Multiagent => {
                let mut env = EnvConfig {
                    num_resources: 4,
                    trade_prices: vec![3, 6, 9],
                    skill_growth_enabled: true,
                    taxes_enabled: false,
                    ..env
                };
                env.skill_init = SkillInit {
                    kind: SkillInitKind::Normal,
                    ..SkillInit::default()
                };
                env.craft_distinct_required = multi_resource_distinct_required(env.num_resources, false);
                (
                    env,
                    TrainConfig {
                        shared_hidden_width: 256,
                        government_enabled: false,
                        ..train
                    },
                )
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::invalid("preset", format!("unknown preset `{s}`")))
    }
}
