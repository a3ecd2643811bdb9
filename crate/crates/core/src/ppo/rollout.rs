use std::sync::Arc;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GovernmentModel, PopulationModel};
use crate::config::{ConfigError, EnvConfig, RATE_LEVELS};
use crate::nn::{HeadLayout, MaskedCategorical};
use crate::obs::{self, summary_stats};
use crate::sim::{self, ActionKind, StepError, WorldState};
use crate::tax::RateAction;
use crate::welfare::social_welfare;

/// Mixes `parts` into `base` with splitmix64 steps.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

const STREAM_ENV: u64 = 1;
const STREAM_SAMPLE: u64 = 2;

/// One economy plus the bookkeeping needed to auto-reset it.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    pub index: usize,
    pub episode: u64,
    pub state: WorldState,
    /// Draws policy samples; separate from the world rng.
    pub sampler: ChaCha8Rng,
    pub episode_returns: Vec<f64>,
    pub government_return: f64,
}

/// `num_envs` independent economies stepped in lockstep.
#[derive(Debug, Clone)]
pub struct VecEnv {
    pub config: Arc<EnvConfig>,
    pub seed: u64,
    pub slots: Vec<EnvSlot>,
}

impl VecEnv {
    pub fn new(config: Arc<EnvConfig>, num_envs: usize, seed: u64) -> Result<Self, ConfigError> {
        let slots = (0..num_envs)
            .map(|i| {
                Ok(EnvSlot {
                    index: i,
                    episode: 0,
                    state: sim::reset(&config, derive_seed(seed, &[STREAM_ENV, i as u64, 0]))?,
                    sampler: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_SAMPLE, i as u64])),
                    episode_returns: vec![0.0; config.population_size],
                    government_return: 0.0,
                })
            })
            .collect::<Result<_, ConfigError>>()?;
        Ok(VecEnv { config, seed, slots })
    }

    pub fn num_envs(&self) -> usize {
        self.slots.len()
    }
}

/// Welfare and returns of one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub env: usize,
    pub episode: u64,
    pub return_mean: f64,
    pub return_median: f64,
    pub government_return: f64,
    pub productivity: f64,
    pub equality: f64,
    pub government_utility: f64,
    /// Rates in force during the last tax period.
    pub tax_rates: Vec<f64>,
}

/// Population transitions, flattened in `(env, step, agent)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationBatch {
    pub num_envs: usize,
    pub rollout_length: usize,
    pub num_agents: usize,
    pub obs: Array2<f32>,
    pub masks: Array2<bool>,
    pub actions: Array2<usize>,
    pub log_probs: Vec<f32>,
    pub values: Vec<f32>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state after the last step, `(env, agent)` order.
    pub last_values: Vec<f32>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Government transitions, flattened in `(env, step)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct GovernmentBatch {
    pub num_envs: usize,
    pub rollout_length: usize,
    pub obs: Array2<f32>,
    /// One level per bracket.
    pub actions: Array2<usize>,
    pub log_probs: Vec<f32>,
    pub values: Vec<f32>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub last_values: Vec<f32>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Aggregates over one rollout that feed the metrics stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    /// Population action counts by kind, in [`ActionKind::ALL`] order.
    pub action_counts: [u64; 5],
    /// Government level counts summed over brackets.
    pub level_counts: Vec<u64>,
    pub trade_price_sum: Vec<f64>,
    pub trade_count: Vec<u64>,
    /// Per `(env, agent)` reward summed over the rollout.
    pub window_returns: Vec<f64>,
    pub episodes: Vec<EpisodeRecord>,
    pub productivity: f64,
    pub equality: f64,
    pub government_utility: f64,
    pub tax_rates: Vec<f64>,
}

/// Output of [`collect_rollout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub population: PopulationBatch,
    pub government: Option<GovernmentBatch>,
    pub stats: RolloutStats,
}

struct Segment {
    obs: Array2<f32>,
    masks: Array2<bool>,
    actions: Vec<usize>,
    log_probs: Vec<f32>,
    values: Vec<f32>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    last_values: Vec<f32>,
    g_obs: Array2<f32>,
    g_actions: Vec<usize>,
    g_log_probs: Vec<f32>,
    g_values: Vec<f32>,
    g_rewards: Vec<f64>,
    g_last_value: f32,
    stats: RolloutStats,
}

fn population_obs_matrix(config: &EnvConfig, state: &WorldState, agent_id: bool, out: &mut Array2<f32>) {
    for (i, mut row) in out.outer_iter_mut().enumerate() {
        obs::write_population_obs(config, state, i, agent_id, row.as_slice_mut().expect("row-major"));
    }
}

fn government_obs_row(config: &EnvConfig, state: &WorldState, dim: usize) -> Array2<f32> {
    let mut g = Array2::zeros((1, dim));
    obs::write_government_obs(config, state, g.as_slice_mut().expect("row-major"));
    g
}

fn run_segment(
    config: &EnvConfig,
    slot: &mut EnvSlot,
    seed: u64,
    population: &PopulationModel,
    government: Option<&GovernmentModel>,
    steps: usize,
) -> Result<Segment, StepError> {
    let n = config.population_size;
    let a = population.num_actions;
    let d = population.obs_dim;
    let agent_id = population.agent_id();
    let rows = steps * n;
    let mut seg = Segment {
        obs: Array2::zeros((rows, d)),
        masks: Array2::from_elem((rows, a), false),
        actions: Vec::with_capacity(rows),
        log_probs: Vec::with_capacity(rows),
        values: Vec::with_capacity(rows),
        rewards: Vec::with_capacity(rows),
        dones: Vec::with_capacity(rows),
        last_values: Vec::new(),
        g_obs: Array2::zeros((government.map_or(0, |_| steps), government.map_or(0, |g| g.obs_dim))),
        g_actions: Vec::new(),
        g_log_probs: Vec::new(),
        g_values: Vec::new(),
        g_rewards: Vec::new(),
        g_last_value: 0.0,
        stats: RolloutStats {
            level_counts: vec![0; RATE_LEVELS],
            trade_price_sum: vec![0.0; config.num_resources],
            trade_count: vec![0; config.num_resources],
            window_returns: vec![0.0; n],
            ..RolloutStats::default()
        },
    };
    let space = config.action_space();
    let g_heads = government.map(GovernmentModel::heads);
    let mut g_act = vec![0; config.num_brackets()];
    for t in 0..steps {
        let r0 = t * n;
        let mut obs_t = seg.obs.slice_mut(s![r0..r0 + n, ..]).to_owned();
        population_obs_matrix(config, &slot.state, agent_id, &mut obs_t);
        seg.obs.slice_mut(s![r0..r0 + n, ..]).assign(&obs_t);
        for i in 0..n {
            let mut m = seg.masks.row_mut(r0 + i);
            sim::action_mask_into(config, &slot.state, i, m.as_slice_mut().expect("row-major"));
        }
        let logits = population.logits(obs_t.view());
        let mask_t = seg.masks.slice(s![r0..r0 + n, ..]);
        let dist = MaskedCategorical::new(logits.view(), Some(mask_t), HeadLayout::single(a))
            .expect("no-op or gather is always available");
        let mut acts = vec![0usize; n];
        for (i, act) in acts.iter_mut().enumerate() {
            let mut one = [0];
            let lp = dist.sample_into(i, &mut slot.sampler, &mut one);
            *act = one[0];
            seg.log_probs.push(lp);
        }
        seg.values.extend(population.value(obs_t.view()));
        seg.actions.extend_from_slice(&acts);

        let rate_action = if let (Some(g), Some(heads)) = (government, &g_heads) {
            let g_obs = government_obs_row(config, &slot.state, g.obs_dim);
            let g_logits = g.policy.forward(g_obs.view());
            let g_dist = MaskedCategorical::new(g_logits.view(), None, heads.clone()).expect("unmasked heads");
            let lp = g_dist.sample_into(0, &mut slot.sampler, &mut g_act);
            seg.g_log_probs.push(lp);
            seg.g_values.push(g.value.forward(g_obs.view())[[0, 0]]);
            seg.g_obs.row_mut(t).assign(&g_obs.row(0));
            seg.g_actions.extend_from_slice(&g_act);
            for &l in &g_act {
                seg.stats.level_counts[l] += 1;
            }
            Some(RateAction(g_act.clone()))
        } else {
            None
        };

        for &act in &acts {
            let kind = space.decode(act).expect("sampled from the action space").kind();
            let k = ActionKind::ALL.iter().position(|&x| x == kind).expect("known kind");
            seg.stats.action_counts[k] += 1;
        }

        // rates in force during the final period, before the closing update
        let final_rates =
            (slot.state.timestep + 1 == config.episode_length).then(|| slot.state.tax.current_rates.clone());
        let out = sim::step(config, &mut slot.state, &acts, rate_action.as_ref())?;
        for tr in &out.trades {
            seg.stats.trade_price_sum[tr.resource] += f64::from(tr.price);
            seg.stats.trade_count[tr.resource] += 1;
        }
        for (i, &r) in out.rewards.iter().enumerate() {
            slot.episode_returns[i] += r;
            seg.stats.window_returns[i] += r;
        }
        seg.rewards.extend_from_slice(&out.rewards);
        seg.dones.extend(std::iter::repeat_n(out.done, n));
        slot.government_return += out.government_reward;
        if government.is_some() {
            seg.g_rewards.push(out.government_reward);
        }

        if out.done {
            let mut returns = slot.episode_returns.clone();
            let [mean, _, median] = summary_stats(&mut returns);
            seg.stats.episodes.push(EpisodeRecord {
                env: slot.index,
                episode: slot.episode,
                return_mean: mean,
                return_median: median,
                government_return: slot.government_return,
                productivity: out.welfare.productivity,
                equality: out.welfare.equality,
                government_utility: out.welfare.utility,
                tax_rates: final_rates.unwrap_or_default(),
            });
            slot.episode += 1;
            slot.state = sim::reset(
                config,
                derive_seed(seed, &[STREAM_ENV, slot.index as u64, slot.episode]),
            )?;
            slot.episode_returns.fill(0.0);
            slot.government_return = 0.0;
        }
    }

    let mut obs_last = Array2::zeros((n, d));
    population_obs_matrix(config, &slot.state, agent_id, &mut obs_last);
    seg.last_values = population.value(obs_last.view());
    if let Some(g) = government {
        let g_obs = government_obs_row(config, &slot.state, g.obs_dim);
        seg.g_last_value = g.value.forward(g_obs.view())[[0, 0]];
    }
    let w = social_welfare(&slot.state.coins(), config.equality_weight);
    seg.stats.productivity = w.productivity;
    seg.stats.equality = w.equality;
    seg.stats.government_utility = w.utility;
    seg.stats.tax_rates = slot.state.tax.current_rates.clone();
    Ok(seg)
}

/// Steps every env `steps` times under the current policies, in parallel
/// across envs. Results do not depend on the number of worker threads.
pub fn collect_rollout(
    envs: &mut VecEnv,
    population: &PopulationModel,
    government: Option<&GovernmentModel>,
    steps: usize,
) -> Result<Rollout, StepError> {
    let config = Arc::clone(&envs.config);
    let seed = envs.seed;
    let segments = envs
        .slots
        .par_iter_mut()
        .map(|slot| run_segment(&config, slot, seed, population, government, steps))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(&config, segments, government.is_some(), steps))
}

fn assemble(config: &EnvConfig, segments: Vec<Segment>, has_government: bool, steps: usize) -> Rollout {
    let e = segments.len();
    let n = config.population_size;
    let rows = e * steps * n;
    let views: Vec<_> = segments.iter().map(|s| s.obs.view()).collect();
    let obs = ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths");
    let views: Vec<_> = segments.iter().map(|s| s.masks.view()).collect();
    let masks = ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths");
    let cat = |f: &dyn Fn(&Segment) -> &[f32]| segments.iter().flat_map(|s| f(s).iter().copied()).collect::<Vec<_>>();
    let log_probs = cat(&|s| &s.log_probs);
    let values = cat(&|s| &s.values);
    let last_values = cat(&|s| &s.last_values);
    let actions: Vec<usize> = segments.iter().flat_map(|s| s.actions.iter().copied()).collect();
    let rewards: Vec<f64> = segments.iter().flat_map(|s| s.rewards.iter().copied()).collect();
    let dones: Vec<bool> = segments.iter().flat_map(|s| s.dones.iter().copied()).collect();
    debug_assert_eq!(actions.len(), rows);

    let government = has_government.then(|| {
        let b = config.num_brackets();
        let views: Vec<_> = segments.iter().map(|s| s.g_obs.view()).collect();
        let g_actions: Vec<usize> = segments.iter().flat_map(|s| s.g_actions.iter().copied()).collect();
        GovernmentBatch {
            num_envs: e,
            rollout_length: steps,
            obs: ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths"),
            actions: Array2::from_shape_vec((e * steps, b), g_actions).expect("shape"),
            log_probs: cat(&|s| &s.g_log_probs),
            values: cat(&|s| &s.g_values),
            rewards: segments.iter().flat_map(|s| s.g_rewards.iter().copied()).collect(),
            dones: segments
                .iter()
                .flat_map(|s| s.dones.iter().step_by(n).copied())
                .collect(),
            last_values: segments.iter().map(|s| s.g_last_value).collect(),
            advantages: vec![0.0; e * steps],
            returns: vec![0.0; e * steps],
        }
    });

    let mut stats = RolloutStats {
        level_counts: vec![0; RATE_LEVELS],
        trade_price_sum: vec![0.0; config.num_resources],
        trade_count: vec![0; config.num_resources],
        tax_rates: vec![0.0; config.num_brackets()],
        ..RolloutStats::default()
    };
    let inv_e = 1.0 / e as f64;
    for s in &segments {
        let st = &s.stats;
        for k in 0..5 {
            stats.action_counts[k] += st.action_counts[k];
        }
        for (a, b) in stats.level_counts.iter_mut().zip(&st.level_counts) {
            *a += b;
        }
        for r in 0..config.num_resources {
            stats.trade_price_sum[r] += st.trade_price_sum[r];
            stats.trade_count[r] += st.trade_count[r];
        }
        stats.window_returns.extend_from_slice(&st.window_returns);
        stats.episodes.extend(st.episodes.iter().cloned());
        stats.productivity += st.productivity * inv_e;
        stats.equality += st.equality * inv_e;
        stats.government_utility += st.government_utility * inv_e;
        for (a, b) in stats.tax_rates.iter_mut().zip(&st.tax_rates) {
            *a += b * inv_e;
        }
    }

    Rollout {
        population: PopulationBatch {
            num_envs: e,
            rollout_length: steps,
            num_agents: n,
            obs,
            masks,
            actions: Array2::from_shape_vec((rows, 1), actions).expect("shape"),
            log_probs,
            values,
            rewards,
            dones,
            last_values,
            advantages: vec![0.0; rows],
            returns: vec![0.0; rows],
        },
        government,
        stats,
    }
}

impl PopulationBatch {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn agent(&self, row: usize) -> usize {
        row % self.num_agents
    }

    /// Fills `advantages` and `returns`, one GAE pass per `(env, agent)`.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let (t_len, n) = (self.rollout_length, self.num_agents);
        let mut r = vec![0.0; t_len];
        let mut v = vec![0.0; t_len];
        let mut d = vec![false; t_len];
        let mut adv = vec![0.0; t_len];
        let mut ret = vec![0.0; t_len];
        for e in 0..self.num_envs {
            for i in 0..n {
                let idx = |t: usize| (e * t_len + t) * n + i;
                for t in 0..t_len {
                    r[t] = self.rewards[idx(t)];
                    v[t] = f64::from(self.values[idx(t)]);
                    d[t] = self.dones[idx(t)];
                }
                let last = f64::from(self.last_values[e * n + i]);
                super::compute_gae(&r, &v, &d, last, gamma, lambda, &mut adv, &mut ret);
                for t in 0..t_len {
                    self.advantages[idx(t)] = adv[t];
                    self.returns[idx(t)] = ret[t];
                }
            }
        }
    }
}

impl GovernmentBatch {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let t_len = self.rollout_length;
        for e in 0..self.num_envs {
            let span = e * t_len..(e + 1) * t_len;
            let v: Vec<f64> = self.values[span.clone()].iter().map(|&x| f64::from(x)).collect();
            super::compute_gae(
                &self.rewards[span.clone()],
                &v,
                &self.dones[span.clone()],
                f64::from(self.last_values[e]),
                gamma,
                lambda,
                &mut self.advantages[span.clone()],
                &mut self.returns[span],
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::TrainConfig;

    fn setup(n: usize, envs: usize, government: bool) -> (VecEnv, PopulationModel, Option<GovernmentModel>) {
        let env = EnvConfig {
            population_size: n,
            ..EnvConfig::default()
        };
        let train = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pop = PopulationModel::new(&env, &train, &mut rng);
        let gov = government.then(|| GovernmentModel::new(&env, &train, &mut rng));
        (VecEnv::new(Arc::new(env), envs, 11).unwrap(), pop, gov)
    }

    #[test]
    fn batch_sizes() {
        let (mut envs, pop, gov) = setup(4, 1, false);
        let r = collect_rollout(&mut envs, &pop, gov.as_ref(), 150).unwrap();
        assert_eq!(r.population.len(), 600);
        assert!(r.government.is_none());

        let (mut envs, pop, gov) = setup(2, 10, true);
        let r = collect_rollout(&mut envs, &pop, gov.as_ref(), 150).unwrap();
        assert_eq!(r.government.unwrap().len(), 1500);
    }

    #[test]
    fn sampled_actions_respect_masks() {
        let (mut envs, pop, gov) = setup(3, 2, true);
        let r = collect_rollout(&mut envs, &pop, gov.as_ref(), 200).unwrap();
        let b = &r.population;
        for row in 0..b.len() {
            assert!(b.masks[[row, b.actions[[row, 0]]]]);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (mut e1, pop, gov) = setup(3, 2, true);
        let mut e2 = e1.clone();
        let a = collect_rollout(&mut e1, &pop, gov.as_ref(), 50).unwrap();
        let b = collect_rollout(&mut e2, &pop, gov.as_ref(), 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn episode_boundaries_reset() {
        let env = EnvConfig {
            population_size: 2,
            episode_length: 40,
            tax_period_length: 10,
            ..EnvConfig::default()
        };
        let train = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pop = PopulationModel::new(&env, &train, &mut rng);
        let mut envs = VecEnv::new(Arc::new(env), 1, 0).unwrap();
        let r = collect_rollout(&mut envs, &pop, None, 100).unwrap();
        let b = &r.population;
        for t in 0..100 {
            assert_eq!(b.dones[t * 2], (t + 1) % 40 == 0, "step {t}");
        }
        assert_eq!(r.stats.episodes.len(), 2);
        assert_eq!(envs.slots[0].state.timestep, 20);
    }
}
