//! Environment parameters.
//!
//! [`EnvConfig::default`] reproduces the standard 100-agent economy. Every
//! field is validated by [`EnvConfig::validate`], which names the offending
//! field on failure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of discrete tax-rate levels per bracket (0%, 5%, ..., 100%).
pub const RATE_LEVELS: usize = 21;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillInitKind {
    /// `U[0, 1)` for every gather and craft skill.
    Uniform,
    /// Pareto draws normalized by their per-skill sample max, plus gaussian
    /// noise, clipped to `[floor, 1]`.
    ParetoNoise,
    /// `N(mean, std)` clipped to `[0, skill_max]`.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillInit {
    pub kind: SkillInitKind,
    pub pareto_shape: f64,
    /// Divide Pareto draws by their sample max and clip to `[floor, 1]`;
    /// otherwise raw draws (support starting at 1) are clipped to
    /// `[floor, skill_max]`.
    pub pareto_normalize: bool,
    pub noise_std: f64,
    pub floor: f64,
    pub normal_mean: f64,
    pub normal_std: f64,
}

impl Default for SkillInit {
    fn default() -> Self {
        SkillInit {
            kind: SkillInitKind::Uniform,
            pareto_shape: 3.0,
            pareto_normalize: true,
            noise_std: 0.05,
            floor: 0.05,
            normal_mean: 1.0,
            normal_std: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub population_size: usize,
    pub num_resources: usize,
    pub episode_length: u32,
    pub tax_period_length: u32,
    pub allow_noop: bool,
    pub starting_coin: f64,
    pub order_expiry: u32,
    pub trade_prices: Vec<u32>,
    pub max_active_orders: u32,
    pub craft_units_required: u32,
    pub craft_distinct_required: usize,
    pub labor_cost_craft: f64,
    pub labor_cost_gather: f64,
    pub labor_cost_trade: f64,
    pub utility_eta: f64,
    pub equality_weight: f64,
    pub craft_payout_scale: f64,
    pub bracket_thresholds: Vec<f64>,
    pub skill_growth_rate: f64,
    pub skill_max: f64,
    pub skill_growth_enabled: bool,
    pub taxes_enabled: bool,
    pub skill_init: SkillInit,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            population_size: 100,
            num_resources: 2,
            episode_length: 1000,
            tax_period_length: 100,
            allow_noop: true,
            starting_coin: 15.0,
            order_expiry: 30,
            trade_prices: vec![2, 4, 6, 8, 10],
            max_active_orders: 15,
            craft_units_required: 2,
            craft_distinct_required: 2,
            labor_cost_craft: 1.0,
            labor_cost_gather: 1.0,
            labor_cost_trade: 0.05,
            utility_eta: 0.27,
            equality_weight: 1.0,
            craft_payout_scale: 10.0,
            bracket_thresholds: vec![50.0, 100.0],
            skill_growth_rate: 0.005,
            skill_max: 5.0,
            skill_growth_enabled: false,
            taxes_enabled: true,
            skill_init: SkillInit::default(),
        }
    }
}

fn check(cond: bool, field: &str, reason: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, reason))
    }
}

fn finite_nonneg(v: f64, field: &str) -> Result<(), ConfigError> {
    check(v.is_finite() && v >= 0.0, field, "must be finite and >= 0")
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.population_size >= 1, "population_size", "must be >= 1")?;
        check(self.num_resources >= 1, "num_resources", "must be >= 1")?;
        check(self.episode_length >= 1, "episode_length", "must be >= 1")?;
        check(self.tax_period_length >= 1, "tax_period_length", "must be >= 1")?;
        finite_nonneg(self.starting_coin, "starting_coin")?;
        check(self.order_expiry >= 1, "order_expiry", "must be >= 1")?;
        check(!self.trade_prices.is_empty(), "trade_prices", "must not be empty")?;
        check(self.trade_prices[0] > 0, "trade_prices", "prices must be positive")?;
        check(
            self.trade_prices.windows(2).all(|w| w[0] < w[1]),
            "trade_prices",
            "must be strictly ascending",
        )?;
        check(self.craft_units_required >= 1, "craft_units_required", "must be >= 1")?;
        check(
            (1..=self.num_resources).contains(&self.craft_distinct_required),
            "craft_distinct_required",
            "must lie in [1, num_resources]",
        )?;
        finite_nonneg(self.labor_cost_craft, "labor_cost_craft")?;
        finite_nonneg(self.labor_cost_gather, "labor_cost_gather")?;
        finite_nonneg(self.labor_cost_trade, "labor_cost_trade")?;
        finite_nonneg(self.utility_eta, "utility_eta")?;
        check(self.utility_eta != 1.0, "utility_eta", "must not equal 1")?;
        check(
            (0.0..=1.0).contains(&self.equality_weight),
            "equality_weight",
            "must lie in [0, 1]",
        )?;
        finite_nonneg(self.craft_payout_scale, "craft_payout_scale")?;
        check(
            self.bracket_thresholds.iter().all(|t| t.is_finite() && *t > 0.0),
            "bracket_thresholds",
            "thresholds must be finite and positive",
        )?;
        check(
            self.bracket_thresholds.windows(2).all(|w| w[0] < w[1]),
            "bracket_thresholds",
            "must be strictly ascending",
        )?;
        finite_nonneg(self.skill_growth_rate, "skill_growth_rate")?;
        check(
            self.skill_max.is_finite() && self.skill_max > 0.0,
            "skill_max",
            "must be finite and > 0",
        )?;
        let s = &self.skill_init;
        check(
            s.pareto_shape.is_finite() && s.pareto_shape > 0.0,
            "skill_init.pareto_shape",
            "must be > 0",
        )?;
        finite_nonneg(s.noise_std, "skill_init.noise_std")?;
        check((0.0..=1.0).contains(&s.floor), "skill_init.floor", "must lie in [0, 1]")?;
        check(s.normal_mean.is_finite(), "skill_init.normal_mean", "must be finite")?;
        finite_nonneg(s.normal_std, "skill_init.normal_std")?;
        Ok(())
    }

    pub fn num_prices(&self) -> usize {
        self.trade_prices.len()
    }

    /// Number of tax brackets (one more than the number of thresholds).
    pub fn num_brackets(&self) -> usize {
        self.bracket_thresholds.len() + 1
    }

    pub fn action_space(&self) -> crate::sim::ActionSpace {
        crate::sim::ActionSpace::new(self.num_resources, self.num_prices(), self.allow_noop)
    }

    pub fn max_price(&self) -> u32 {
        *self.trade_prices.last().expect("validated non-empty")
    }

    /// Whether `step` (the index of a step being executed) closes a tax period.
    pub fn is_period_boundary(&self, step: u32) -> bool {
        (step + 1).is_multiple_of(self.tax_period_length)
    }
}

/// Distinct resources required for crafting in the multi-resource preset.
///
/// The default form is `max(1, floor(log2(r)))`. `literal_min` selects the
/// `min(1, log2(r))` variant, which is 1 for every `r >= 2` (and 0 for `r = 1`,
/// clamped to 1 here so the result stays a valid config).
pub fn multi_resource_distinct_required(num_resources: usize, literal_min: bool) -> usize {
    let log2 = if num_resources == 0 {
        0
    } else {
        (usize::BITS - 1 - num_resources.leading_zeros()) as usize
    };
    if literal_min {
        1
    } else {
        log2.max(1)
    }
}
