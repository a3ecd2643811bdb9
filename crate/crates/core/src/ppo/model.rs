use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SharingMode, TrainConfig};
use crate::config::{EnvConfig, RATE_LEVELS};
use crate::nn::{Adam, AdamConfig, HeadLayout, MaskedCategorical, Mlp};
use crate::obs;
use crate::sim::{self, WorldState};
use crate::tax::RateAction;

const POLICY_HEAD_GAIN: f64 = 0.01;
const VALUE_HEAD_GAIN: f64 = 1.0;

/// Parameters of one network together with its optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub params: Mlp<f32>,
    pub opt: Adam<f32>,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        width: usize,
        output: usize,
        head_gain: f64,
        adam: AdamConfig,
        rng: &mut R,
    ) -> Self {
        let params = Mlp::new(input, &[width, width], output, head_gain, rng);
        let opt = Adam::new(adam, &params);
        Network { params, opt }
    }

    pub fn forward(&self, x: ArrayView2<f32>) -> Array2<f32> {
        self.params.forward(x)
    }
}

/// Population networks wired according to a [`SharingMode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    pub mode: SharingMode,
    pub num_agents: usize,
    pub obs_dim: usize,
    pub num_actions: usize,
    pub policies: Vec<Network>,
    pub values: Vec<Network>,
}

impl PopulationModel {
    pub fn new<R: Rng + ?Sized>(env: &EnvConfig, train: &TrainConfig, rng: &mut R) -> Self {
        let mode = train.sharing_mode;
        let n = env.population_size;
        let obs_dim = obs::population_layout(env, mode.uses_agent_id()).len();
        let num_actions = env.action_space().size();
        let adam = train.adam();
        let (num_policies, policy_width) = match mode {
            SharingMode::Shared | SharingMode::SharedAgentId => (1, train.shared_hidden_width),
            SharingMode::Independent | SharingMode::CtdeNaive => (n, train.hidden_width),
        };
        let (num_values, value_width) = match mode {
            SharingMode::Independent => (n, train.hidden_width),
            _ => (1, train.shared_hidden_width),
        };
        let policies = (0..num_policies)
            .map(|_| Network::new(obs_dim, policy_width, num_actions, POLICY_HEAD_GAIN, adam, rng))
            .collect();
        let values = (0..num_values)
            .map(|_| Network::new(obs_dim, value_width, 1, VALUE_HEAD_GAIN, adam, rng))
            .collect();
        PopulationModel {
            mode,
            num_agents: n,
            obs_dim,
            num_actions,
            policies,
            values,
        }
    }

    pub fn policy_index(&self, agent: usize) -> usize {
        if self.policies.len() == 1 {
            0
        } else {
            agent
        }
    }

    pub fn value_index(&self, agent: usize) -> usize {
        if self.values.len() == 1 {
            0
        } else {
            agent
        }
    }

    pub fn num_params(&self) -> usize {
        self.policies
            .iter()
            .chain(&self.values)
            .map(|n| n.params.num_params())
            .sum()
    }

    pub fn agent_id(&self) -> bool {
        self.mode.uses_agent_id()
    }

    /// Policy logits for one env's observation matrix (`num_agents` rows).
    pub fn logits(&self, obs: ArrayView2<f32>) -> Array2<f32> {
        if self.policies.len() == 1 {
            return self.policies[0].forward(obs);
        }
        let mut out = Array2::zeros((obs.nrows(), self.num_actions));
        for (i, row) in obs.outer_iter().enumerate() {
            let x = row.insert_axis(Axis(0));
            out.row_mut(i)
                .assign(&self.policies[self.policy_index(i)].forward(x).row(0));
        }
        out
    }

    /// Samples one action per agent for the current state.
    pub fn act<R: Rng + ?Sized>(&self, config: &EnvConfig, state: &WorldState, rng: &mut R) -> Vec<usize> {
        let n = config.population_size;
        let mut x = Array2::zeros((n, self.obs_dim));
        let mut masks = Array2::from_elem((n, self.num_actions), false);
        for i in 0..n {
            let mut row = x.row_mut(i);
            obs::write_population_obs(
                config,
                state,
                i,
                self.agent_id(),
                row.as_slice_mut().expect("row-major"),
            );
            let mut m = masks.row_mut(i);
            sim::action_mask_into(config, state, i, m.as_slice_mut().expect("row-major"));
        }
        let logits = self.logits(x.view());
        let dist = MaskedCategorical::new(logits.view(), Some(masks.view()), HeadLayout::single(self.num_actions))
            .expect("no-op or gather is always available");
        let mut a = [0];
        (0..n)
            .map(|i| {
                dist.sample_into(i, rng, &mut a);
                a[0]
            })
            .collect()
    }

    /// Value estimates for one env's observation matrix.
    pub fn value(&self, obs: ArrayView2<f32>) -> Vec<f32> {
        if self.values.len() == 1 {
            return self.values[0].forward(obs).column(0).to_vec();
        }
        obs.outer_iter()
            .enumerate()
            .map(|(i, row)| self.values[self.value_index(i)].forward(row.insert_axis(Axis(0)))[[0, 0]])
            .collect()
    }
}

/// The government's policy (one categorical per bracket) and value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernmentModel {
    pub obs_dim: usize,
    pub num_brackets: usize,
    pub policy: Network,
    pub value: Network,
}

impl GovernmentModel {
    pub fn new<R: Rng + ?Sized>(env: &EnvConfig, train: &TrainConfig, rng: &mut R) -> Self {
        let obs_dim = obs::government_layout(env).len();
        let b = env.num_brackets();
        let adam = train.adam();
        let w = train.hidden_width;
        let policy = Network::new(obs_dim, w, b * RATE_LEVELS, POLICY_HEAD_GAIN, adam, rng);
        let value = Network::new(obs_dim, w, 1, VALUE_HEAD_GAIN, adam, rng);
        GovernmentModel {
            obs_dim,
            num_brackets: b,
            policy,
            value,
        }
    }

    pub fn heads(&self) -> HeadLayout {
        HeadLayout::new(vec![RATE_LEVELS; self.num_brackets])
    }

    pub fn num_params(&self) -> usize {
        self.policy.params.num_params() + self.value.params.num_params()
    }

    /// Samples a level per bracket for the current state.
    pub fn act<R: Rng + ?Sized>(&self, config: &EnvConfig, state: &WorldState, rng: &mut R) -> RateAction {
        let x = Array2::from_shape_vec((1, self.obs_dim), obs::government_obs(config, state)).expect("layout length");
        let logits = self.policy.forward(x.view());
        let dist = MaskedCategorical::new(logits.view(), None, self.heads()).expect("unmasked heads");
        let mut levels = vec![0; self.num_brackets];
        dist.sample_into(0, rng, &mut levels);
        RateAction(levels)
    }
}
