//! Marginal bracket taxation with uniform redistribution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RATE_LEVELS;
use crate::sim::AgentState;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxError {
    #[error("rate action has {got} levels, expected one per bracket ({expected})")]
    WrongLength { expected: usize, got: usize },
    #[error("bracket {bracket}: level {level} outside [0, {max}]", max = RATE_LEVELS - 1)]
    LevelOutOfRange { bracket: usize, level: usize },
}

/// One rate level index per bracket; level `k` means a `5k`% marginal rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateAction(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxState {
    pub bracket_thresholds: Vec<f64>,
    pub levels: Vec<usize>,
    pub current_rates: Vec<f64>,
    pub period_start_step: u32,
}

#[inline]
pub fn level_to_rate(level: usize) -> f64 {
    // level / 20 rather than 0.05 * level keeps 0.3, 0.7, ... correctly rounded
    level as f64 / (RATE_LEVELS - 1) as f64
}

impl TaxState {
    pub fn new(bracket_thresholds: Vec<f64>) -> Self {
        let brackets = bracket_thresholds.len() + 1;
        TaxState {
            bracket_thresholds,
            levels: vec![0; brackets],
            current_rates: vec![0.0; brackets],
            period_start_step: 0,
        }
    }

    pub fn num_brackets(&self) -> usize {
        self.current_rates.len()
    }

    pub fn tax_owed(&self, income: f64) -> f64 {
        marginal_tax(income, &self.bracket_thresholds, &self.current_rates)
    }

    /// Sets the rates for the upcoming period.
    pub fn apply_rate_action(&mut self, action: &RateAction, step: u32) -> Result<(), TaxError> {
        validate_rate_action(action, self.num_brackets())?;
        for (i, &level) in action.0.iter().enumerate() {
            self.levels[i] = level;
            self.current_rates[i] = level_to_rate(level);
        }
        self.period_start_step = step;
        Ok(())
    }
}

pub fn validate_rate_action(action: &RateAction, brackets: usize) -> Result<(), TaxError> {
    if action.0.len() != brackets {
        return Err(TaxError::WrongLength {
            expected: brackets,
            got: action.0.len(),
        });
    }
    if let Some((bracket, &level)) = action.0.iter().enumerate().find(|(_, &l)| l >= RATE_LEVELS) {
        return Err(TaxError::LevelOutOfRange { bracket, level });
    }
    Ok(())
}

/// Tax on `income` where `rates[i]` applies to the slice of income between
/// `thresholds[i - 1]` (or 0) and `thresholds[i]` (or infinity).
pub fn marginal_tax(income: f64, thresholds: &[f64], rates: &[f64]) -> f64 {
    debug_assert_eq!(rates.len(), thresholds.len() + 1);
    let mut tax = 0.0;
    let mut lower = 0.0;
    for (i, &rate) in rates.iter().enumerate() {
        if income <= lower {
            break;
        }
        let upper = thresholds.get(i).copied().unwrap_or(f64::INFINITY);
        tax += rate * (income.min(upper) - lower);
        lower = upper;
    }
    tax
}

/// Collects tax on each agent's period income, capped at the agent's
/// inventory coin, returns the total in equal shares and clears period income.
///
/// Returns the total collected.
pub fn collect_and_redistribute(agents: &mut [AgentState], tax: &TaxState) -> f64 {
    if agents.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for agent in agents.iter_mut() {
        let due = tax.tax_owed(agent.period_income).min(agent.coin).max(0.0);
        agent.coin -= due;
        total += due;
    }
    let share = total / agents.len() as f64;
    for agent in agents.iter_mut() {
        agent.coin += share;
        agent.period_income = 0.0;
    }
    total
}
