use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, EnvConfig, SkillInitKind};
use crate::market::MarketState;
use crate::tax::TaxState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub coin: f64,
    pub resources: Vec<u32>,
    pub escrow_coin: f64,
    pub escrow_resources: Vec<u32>,
    pub gather_skill: Vec<f64>,
    pub craft_skill: f64,
    /// Labor accumulated since the start of the episode.
    pub labor: f64,
    /// Taxable inflow (craft payouts and sale proceeds) since the last
    /// collection.
    pub period_income: f64,
}

impl AgentState {
    pub fn new(num_resources: usize, coin: f64) -> Self {
        AgentState {
            coin,
            resources: vec![0; num_resources],
            escrow_coin: 0.0,
            escrow_resources: vec![0; num_resources],
            gather_skill: vec![0.0; num_resources],
            craft_skill: 0.0,
            labor: 0.0,
            period_income: 0.0,
        }
    }

    /// Inventory plus escrowed coin.
    #[inline]
    pub fn total_coin(&self) -> f64 {
        self.coin + self.escrow_coin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub market: MarketState,
    pub tax: TaxState,
    pub timestep: u32,
    pub rng: ChaCha8Rng,
}

impl WorldState {
    pub fn total_coin(&self) -> f64 {
        self.agents.iter().map(AgentState::total_coin).sum()
    }

    pub fn total_resource(&self, resource: usize) -> u64 {
        self.agents
            .iter()
            .map(|a| u64::from(a.resources[resource] + a.escrow_resources[resource]))
            .sum()
    }

    pub fn coins(&self) -> Vec<f64> {
        self.agents.iter().map(AgentState::total_coin).collect()
    }

    pub fn is_done(&self, config: &EnvConfig) -> bool {
        self.timestep >= config.episode_length
    }
}

/// Builds the initial state for `seed`. Equal `(config, seed)` pairs give
/// bit-identical states.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<WorldState, ConfigError> {
    config.validate()?;
    let n = config.population_size;
    let r = config.num_resources;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents: Vec<AgentState> = (0..n).map(|_| AgentState::new(r, config.starting_coin)).collect();
    init_skills(config, &mut agents, &mut rng)?;
    Ok(WorldState {
        agents,
        market: MarketState::new(r, n),
        tax: TaxState::new(config.bracket_thresholds.clone()),
        timestep: 0,
        rng,
    })
}

fn init_skills(config: &EnvConfig, agents: &mut [AgentState], rng: &mut ChaCha8Rng) -> Result<(), ConfigError> {
    let r = config.num_resources;
    let s = &config.skill_init;
    // column j < r is gather skill j, column r is craft skill
    let set = |agent: &mut AgentState, col: usize, v: f64| {
        if col < r {
            agent.gather_skill[col] = v;
        } else {
            agent.craft_skill = v;
        }
    };
    match s.kind {
        SkillInitKind::Uniform => {
            for a in agents.iter_mut() {
                for col in 0..=r {
                    let v = rng.random::<f64>();
                    set(a, col, v);
                }
            }
        }
        SkillInitKind::Normal => {
            let normal = Normal::new(s.normal_mean, s.normal_std)
                .map_err(|e| ConfigError::invalid("skill_init.normal_std", e.to_string()))?;
            for a in agents.iter_mut() {
                for col in 0..=r {
                    let v = normal.sample(rng).clamp(0.0, config.skill_max);
                    set(a, col, v);
                }
            }
        }
        SkillInitKind::ParetoNoise => {
            let pareto = Pareto::new(1.0, s.pareto_shape)
                .map_err(|e| ConfigError::invalid("skill_init.pareto_shape", e.to_string()))?;
            let noise = Normal::new(0.0, s.noise_std)
                .map_err(|e| ConfigError::invalid("skill_init.noise_std", e.to_string()))?;
            for col in 0..=r {
                let draws: Vec<f64> = (0..agents.len()).map(|_| pareto.sample(rng)).collect();
                let (scale, cap) = if s.pareto_normalize {
                    (draws.iter().cloned().fold(f64::MIN, f64::max), 1.0)
                } else {
                    (1.0, config.skill_max)
                };
                for (a, d) in agents.iter_mut().zip(draws) {
                    let v = (d / scale + noise.sample(rng)).clamp(s.floor, cap);
                    set(a, col, v);
                }
            }
        }
    }
    Ok(())
}
