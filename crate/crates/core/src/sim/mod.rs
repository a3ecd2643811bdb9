//! World state and the per-step transition.
//!
//! A step applies, in order: population actions (agent index order), one
//! market matching round, order expiry, the tax collection and rate update
//! when the step closes a period, and finally reward computation.

mod action;
mod state;

pub use action::{Action, ActionKind, ActionSpace};
pub use state::{reset, AgentState, WorldState};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EnvConfig};
use crate::market::{MarketError, Side, Trade};
use crate::tax::{self, RateAction, TaxError};
use crate::welfare::{social_welfare, Isoelastic, SocialWelfare};

/// Upper end (exclusive) of the gather luck term.
pub const GATHER_LUCK_MAX: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("expected {expected} population actions, got {got}")]
    WrongActionCount { expected: usize, got: usize },
    #[error("agent {agent}: action index {action} outside the action space")]
    UnknownAction { agent: usize, action: usize },
    #[error("agent {agent}: action {action} is masked")]
    MaskedAction { agent: usize, action: usize },
    #[error("episode already finished at step {0}")]
    EpisodeDone(u32),
    #[error("government action: {0}")]
    Tax(#[from] TaxError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub government_reward: f64,
    pub done: bool,
    pub trades: Vec<Trade>,
    /// Total tax collected, when this step closed a taxed period.
    pub taxes_collected: Option<f64>,
    pub crafted: usize,
    pub welfare: SocialWelfare,
}

/// `floor(skill + luck)`.
#[inline]
pub fn gather_units(skill: f64, luck: f64) -> u32 {
    (skill + luck).floor().max(0.0) as u32
}

/// Draws the luck term from `U[0, 1.1)` (exactly one draw) and returns the
/// gathered unit count.
#[inline]
pub fn gather_amount<R: Rng + ?Sized>(skill: f64, rng: &mut R) -> u32 {
    let luck = rng.random::<f64>() * GATHER_LUCK_MAX;
    gather_units(skill, luck)
}

/// Multiplicative skill growth damped towards `max`.
#[inline]
pub fn progress_skill(skill: f64, rate: f64, max: f64) -> f64 {
    if skill >= max {
        return max;
    }
    (skill * (1.0 + rate * (1.0 - skill / max))).min(max)
}

/// Whether the agent holds `craft_units_required` units of at least
/// `craft_distinct_required` resources.
pub fn can_craft(agent: &AgentState, config: &EnvConfig) -> bool {
    let need = config.craft_units_required;
    agent.resources.iter().filter(|&&u| u >= need).count() >= config.craft_distinct_required
}

/// Consumes `craft_units_required` units from each of the
/// `craft_distinct_required` most-held resources (lowest index on ties) and
/// pays `craft_skill * craft_payout_scale`. Returns the coin gained.
///
/// Panics if the agent cannot craft.
pub fn craft(agent: &mut AgentState, config: &EnvConfig) -> f64 {
    assert!(can_craft(agent, config), "craft precondition violated");
    let mut order: Vec<usize> = (0..agent.resources.len()).collect();
    // stable sort keeps index order among equal holdings
    order.sort_by_key(|&r| std::cmp::Reverse(agent.resources[r]));
    for &r in order.iter().take(config.craft_distinct_required) {
        agent.resources[r] -= config.craft_units_required;
    }
    let gained = agent.craft_skill * config.craft_payout_scale;
    agent.coin += gained;
    agent.period_income += gained;
    gained
}

fn trade_allowed(state: &WorldState, config: &EnvConfig, agent: usize) -> bool {
    state.market.live_orders[agent] < config.max_active_orders
}

/// Writes the action mask for `agent` into `out` (length = action space size).
pub fn action_mask_into(config: &EnvConfig, state: &WorldState, agent: usize, out: &mut [bool]) {
    let space = config.action_space();
    debug_assert_eq!(out.len(), space.size());
    let a = &state.agents[agent];
    let r = config.num_resources;
    let p = config.num_prices();
    out[..r].fill(true);
    out[space.craft_index()] = can_craft(a, config);
    let trade = trade_allowed(state, config, agent);
    let buy_base = r + 1;
    let sell_base = buy_base + r * p;
    for res in 0..r {
        for (pi, &price) in config.trade_prices.iter().enumerate() {
            out[buy_base + res * p + pi] = trade && a.coin >= f64::from(price);
            out[sell_base + res * p + pi] = trade && a.resources[res] >= 1;
        }
    }
    if let Some(noop) = space.noop_index() {
        out[noop] = true;
    }
}

pub fn action_mask(config: &EnvConfig, state: &WorldState, agent: usize) -> Vec<bool> {
    let mut out = vec![false; config.action_space().size()];
    action_mask_into(config, state, agent, &mut out);
    out
}

/// Checks a single action against the mask rules without building the mask.
pub fn is_action_allowed(config: &EnvConfig, state: &WorldState, agent: usize, action: Action) -> bool {
    let a = &state.agents[agent];
    match action {
        Action::Gather(r) => r < config.num_resources,
        Action::Craft => can_craft(a, config),
        Action::Buy { resource, price } => {
            resource < config.num_resources
                && trade_allowed(state, config, agent)
                && config.trade_prices.get(price).is_some_and(|&p| a.coin >= f64::from(p))
        }
        Action::Sell { resource, price } => {
            price < config.num_prices()
                && trade_allowed(state, config, agent)
                && a.resources.get(resource).is_some_and(|&u| u >= 1)
        }
        Action::Noop => config.allow_noop,
    }
}

fn utilities(state: &WorldState, util: &Isoelastic, out: &mut Vec<f64>) {
    out.clear();
    out.extend(state.agents.iter().map(|a| util.utility(a.total_coin(), a.labor)));
}

/// Advances the world by one step.
///
/// All actions are validated against the pre-step state before anything is
/// mutated; on error the state is untouched. `government` is applied only
/// when the step closes a tax period and taxes are enabled.
pub fn step(
    config: &EnvConfig,
    state: &mut WorldState,
    actions: &[usize],
    government: Option<&RateAction>,
) -> Result<StepOutcome, StepError> {
    let n = config.population_size;
    if state.is_done(config) {
        return Err(StepError::EpisodeDone(state.timestep));
    }
    if actions.len() != n {
        return Err(StepError::WrongActionCount {
            expected: n,
            got: actions.len(),
        });
    }
    let space = config.action_space();
    let mut decoded = Vec::with_capacity(n);
    for (agent, &index) in actions.iter().enumerate() {
        let action = space
            .decode(index)
            .ok_or(StepError::UnknownAction { agent, action: index })?;
        if !is_action_allowed(config, state, agent, action) {
            return Err(StepError::MaskedAction { agent, action: index });
        }
        decoded.push(action);
    }
    if let Some(g) = government {
        tax::validate_rate_action(g, config.num_brackets())?;
    }

    let util = Isoelastic::new(config.utility_eta).map_err(|e| ConfigError::invalid("utility_eta", e.to_string()))?;
    let mut before = Vec::with_capacity(n);
    utilities(state, &util, &mut before);
    let welfare_before = social_welfare(&state.coins(), config.equality_weight);

    let t = state.timestep;
    let mut crafted = 0;
    for (agent, action) in decoded.into_iter().enumerate() {
        match action {
            Action::Gather(r) => {
                let a = &mut state.agents[agent];
                let units = gather_amount(a.gather_skill[r], &mut state.rng);
                a.resources[r] += units;
                a.labor += config.labor_cost_gather;
                if config.skill_growth_enabled {
                    a.gather_skill[r] = progress_skill(a.gather_skill[r], config.skill_growth_rate, config.skill_max);
                }
            }
            Action::Craft => {
                let a = &mut state.agents[agent];
                craft(a, config);
                a.labor += config.labor_cost_craft;
                crafted += 1;
                if config.skill_growth_enabled {
                    a.craft_skill = progress_skill(a.craft_skill, config.skill_growth_rate, config.skill_max);
                }
            }
            Action::Buy { resource, price } => {
                state.market.place_order(
                    &mut state.agents,
                    config,
                    agent,
                    resource,
                    Side::Buy,
                    config.trade_prices[price],
                    t,
                )?;
            }
            Action::Sell { resource, price } => {
                state.market.place_order(
                    &mut state.agents,
                    config,
                    agent,
                    resource,
                    Side::Sell,
                    config.trade_prices[price],
                    t,
                )?;
            }
            Action::Noop => {}
        }
    }

    let trades = state.market.match_round(&mut state.agents, &mut state.rng);
    state.market.expire_orders(&mut state.agents, t, config.order_expiry);

    let mut taxes_collected = None;
    if config.is_period_boundary(t) {
        if config.taxes_enabled {
            let total = tax::collect_and_redistribute(&mut state.agents, &state.tax);
            taxes_collected = Some(total);
            if let Some(g) = government {
                state.tax.apply_rate_action(g, t + 1)?;
            }
        } else {
            for a in &mut state.agents {
                a.period_income = 0.0;
            }
        }
    }

    let mut rewards = Vec::with_capacity(n);
    utilities(state, &util, &mut rewards);
    for (r, b) in rewards.iter_mut().zip(&before) {
        *r -= b;
    }
    let welfare = social_welfare(&state.coins(), config.equality_weight);
    state.timestep += 1;
    Ok(StepOutcome {
        rewards,
        government_reward: welfare.utility - welfare_before.utility,
        done: state.is_done(config),
        trades,
        taxes_collected,
        crafted,
        welfare,
    })
}

/// A configured economy: shared config plus its mutable world state.
#[derive(Debug, Clone)]
pub struct Economy {
    config: std::sync::Arc<EnvConfig>,
    state: WorldState,
}

impl Economy {
    pub fn new(config: std::sync::Arc<EnvConfig>, seed: u64) -> Result<Self, ConfigError> {
        let state = reset(&config, seed)?;
        Ok(Economy { config, state })
    }

    pub fn reset(&mut self, seed: u64) -> Result<(), ConfigError> {
        self.state = reset(&self.config, seed)?;
        Ok(())
    }

    pub fn step(&mut self, actions: &[usize], government: Option<&RateAction>) -> Result<StepOutcome, StepError> {
        step(&self.config, &mut self.state, actions, government)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut WorldState {
        &mut self.state
    }

    pub fn action_mask(&self, agent: usize) -> Vec<bool> {
        action_mask(&self.config, &self.state, agent)
    }

    pub fn welfare(&self) -> SocialWelfare {
        social_welfare(&self.state.coins(), self.config.equality_weight)
    }
}
