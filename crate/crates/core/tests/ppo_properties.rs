use econsim::nn::{Adam, AdamConfig, Mlp};
use econsim::ppo::update::{normalize, update_population};
use econsim::ppo::{collect_rollout, gae, Preset, SharingMode, TrainConfig, Trainer, UpdateParams};
use econsim::EnvConfig;
use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Advantages written as the explicit double sum over future TD errors,
/// each truncated at the first episode end.
fn gae_double_sum(rewards: &[f64], values: &[f64], dones: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let value_at = |k: usize| if k == n { last } else { values[k] };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in t..n {
                let cont = if dones[k] { 0.0 } else { 1.0 };
                let delta = rewards[k] + gamma * value_at(k + 1) * cont - values[k];
                total += (gamma * lambda).powi((k - t) as i32) * delta;
                if dones[k] {
                    break;
                }
            }
            total
        })
        .collect()
}

proptest! {
    #[test]
    fn gae_matches_double_sum(
        steps in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, prop::bool::weighted(0.2)), 1..=32),
        last in -10.0f64..10.0,
        gamma in 0.5f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let rewards: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let values: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let dones: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let (adv, ret) = gae(&rewards, &values, &dones, last, gamma, lambda);
        let oracle = gae_double_sum(&rewards, &values, &dones, last, gamma, lambda);
        for t in 0..rewards.len() {
            prop_assert!((adv[t] - oracle[t]).abs() <= 1e-10 * oracle[t].abs().max(1.0), "t={t}: {} vs {}", adv[t], oracle[t]);
            prop_assert!((ret[t] - (oracle[t] + values[t])).abs() <= 1e-9);
        }
    }

    #[test]
    fn normalized_advantages_have_unit_moments(xs in prop::collection::vec(-1e3f64..1e3, 2..200)) {
        let spread = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-3);
        let mut a = xs.clone();
        normalize(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }
}

fn tiny(mode: SharingMode, taxed: bool) -> (EnvConfig, TrainConfig) {
    let preset = if taxed {
        Preset::Section4Default
    } else {
        Preset::FreeMarket
    };
    let (mut env, mut train) = preset.configs();
    env.population_size = 3;
    env.episode_length = 40;
    env.tax_period_length = 10;
    train.num_envs = 2;
    train.rollout_length = 12;
    train.total_timesteps = 240;
    train.hidden_width = 16;
    train.shared_hidden_width = 16;
    train.sharing_mode = mode;
    (env, train)
}

fn flat(net: &Mlp<f32>) -> Vec<f64> {
    net.param_slices()
        .into_iter()
        .flatten()
        .map(|&x| f64::from(x))
        .collect()
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Central-difference gradient of `loss` at `net`.
fn fd_gradient(net: &Mlp<f64>, loss: impl Fn(&Mlp<f64>) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let mut probe = net.clone();
    let sizes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
    let mut grad = Vec::new();
    for (s, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = probe.param_slices()[s][i];
            probe.param_slices_mut()[s][i] = orig + h;
            let up = loss(&probe);
            probe.param_slices_mut()[s][i] = orig - h;
            let down = loss(&probe);
            probe.param_slices_mut()[s][i] = orig;
            grad.push((up - down) / (2.0 * h));
        }
    }
    grad
}

/// Mean of `-A * log pi(a | s)` over rows, with the softmax restricted to
/// unmasked actions.
fn a2c_policy_loss(net: &Mlp<f64>, obs: ArrayView2<f64>, masks: &Array2<bool>, actions: &[usize], adv: &[f64]) -> f64 {
    let logits = net.forward(obs);
    let mut total = 0.0;
    for (i, row) in logits.outer_iter().enumerate() {
        let allowed: Vec<f64> = row
            .iter()
            .zip(masks.row(i))
            .filter(|(_, &m)| m)
            .map(|(&z, _)| z)
            .collect();
        let max = allowed.iter().cloned().fold(f64::MIN, f64::max);
        let lse = max + allowed.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total -= adv[i] * (row[actions[i]] - lse);
    }
    total / actions.len() as f64
}

fn mse_value_loss(net: &Mlp<f64>, obs: ArrayView2<f64>, returns: &[f64]) -> f64 {
    let v = net.forward(obs);
    v.column(0)
        .iter()
        .zip(returns)
        .map(|(v, r)| (v - r) * (v - r))
        .sum::<f64>()
        / returns.len() as f64
}

/// With a huge clip range, one epoch on one minibatch, no advantage
/// normalization, no entropy bonus, no value clipping and an Adam epsilon
/// that dwarfs every gradient, a PPO update moves the parameters along the
/// plain advantage actor-critic gradient.
#[test]
fn ppo_reduces_to_a2c() {
    let (env, mut train) = tiny(SharingMode::Shared, false);
    train.max_grad_norm = 0.0;
    let mut trainer = Trainer::new(env, train.clone(), 3).unwrap();
    let mut rollout = collect_rollout(&mut trainer.envs, &trainer.population, None, train.rollout_length).unwrap();
    rollout.population.compute_advantages(train.gamma, train.gae_lambda);
    let batch = &rollout.population;

    let eps = 1e8;
    let mut model = trainer.population.clone();
    for net in model.policies.iter_mut().chain(model.values.iter_mut()) {
        let config = AdamConfig {
            eps,
            max_grad_norm: None,
            ..AdamConfig::default()
        };
        net.opt = Adam::new(config, &net.params);
    }
    let params = UpdateParams {
        lr: eps,
        entropy_coef: 0.0,
        clip_eps: 1e9,
        value_coef: 0.25,
        value_clip: None,
        num_epochs: 1,
        num_minibatches: 1,
        normalize_advantages: false,
    };
    let before = model.clone();
    update_population(&mut model, batch, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();

    let obs = batch.obs.mapv(f64::from);
    let actions: Vec<usize> = batch.actions.column(0).to_vec();
    let adv: Vec<f64> = batch.advantages.iter().map(|&a| f64::from(a as f32)).collect();
    let returns: Vec<f64> = batch.returns.iter().map(|&r| f64::from(r as f32)).collect();

    let policy = before.policies[0].params.cast::<f64>();
    let g = fd_gradient(&policy, |p| {
        a2c_policy_loss(p, obs.view(), &batch.masks, &actions, &adv)
    });
    let moved: Vec<f64> = flat(&before.policies[0].params)
        .iter()
        .zip(flat(&model.policies[0].params))
        .map(|(a, b)| a - b)
        .collect();
    let d_policy = cosine_distance(&moved, &g);

    let value = before.values[0].params.cast::<f64>();
    let g = fd_gradient(&value, |v| mse_value_loss(v, obs.view(), &returns));
    let moved: Vec<f64> = flat(&before.values[0].params)
        .iter()
        .zip(flat(&model.values[0].params))
        .map(|(a, b)| a - b)
        .collect();
    let d_value = cosine_distance(&moved, &g);
    assert!(d_policy <= 1e-6, "policy cosine distance {d_policy:e}");
    assert!(d_value <= 1e-6, "value cosine distance {d_value:e}");
}

/// Copy of `net` taking `extra` more inputs, all with zero weight.
fn with_zero_inputs(net: &Mlp<f32>, extra: usize) -> Mlp<f32> {
    let mut out = net.clone();
    let w = &net.layers[0].weight;
    let mut wide = Array2::zeros((w.nrows() + extra, w.ncols()));
    wide.slice_mut(ndarray::s![..w.nrows(), ..]).assign(w);
    out.layers[0].weight = wide;
    out
}

/// A shared network with an agent-id input whose id weights are zero
/// behaves exactly like the plain shared network, so the first optimizer
/// step changes every other parameter identically. Later steps diverge
/// because the id weights receive gradients of their own.
#[test]
fn zeroed_agent_id_matches_shared() {
    let (env, mut train) = tiny(SharingMode::Shared, false);
    train.max_grad_norm = 0.0;
    train.num_epochs = 1;
    train.num_minibatches = 1;
    let mut shared = Trainer::new(env.clone(), train.clone(), 11).unwrap();
    train.sharing_mode = SharingMode::SharedAgentId;
    let mut with_id = Trainer::new(env, train, 11).unwrap();

    let base_dim = shared.population.obs_dim;
    assert_eq!(with_id.population.obs_dim, base_dim + 3);
    let pairs = [
        (&shared.population.policies[0], &mut with_id.population.policies[0]),
        (&shared.population.values[0], &mut with_id.population.values[0]),
    ];
    for (from, to) in pairs {
        to.params = with_zero_inputs(&from.params, 3);
        to.opt = Adam::new(to.opt.config, &to.params);
    }

    let a = shared.step().unwrap();
    let b = with_id.step().unwrap();
    assert_eq!(a.rollout, b.rollout);
    assert_eq!(a.population.policy_loss, b.population.policy_loss);
    for (x, y) in [
        (&shared.population.policies[0], &with_id.population.policies[0]),
        (&shared.population.values[0], &with_id.population.values[0]),
    ] {
        let narrow = y.params.layers[0].weight.slice(ndarray::s![..base_dim, ..]);
        assert_eq!(x.params.layers[0].weight.view(), narrow);
        assert_eq!(x.params.layers[0].bias, y.params.layers[0].bias);
        assert_eq!(x.params.layers[1..], y.params.layers[1..]);
    }
}

#[test]
fn updates_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (env, train) = tiny(SharingMode::Independent, true);
            let mut trainer = Trainer::new(env, train, 5).unwrap();
            let reports: Vec<_> = (0..3).map(|_| trainer.step().unwrap()).collect();
            (reports, trainer.population, trainer.government)
        })
    };
    let one = run(1);
    let four = run(4);
    assert!(one == four);
}

#[test]
fn forward_is_deterministic() {
    let (env, train) = tiny(SharingMode::Shared, true);
    let a = Trainer::new(env.clone(), train.clone(), 9).unwrap();
    let b = Trainer::new(env, train, 9).unwrap();
    assert_eq!(a.population, b.population);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Array2::from_shape_simple_fn((7, a.population.obs_dim), || {
        rand::Rng::random_range(&mut rng, -1.0f32..1.0)
    });
    let first = a.population.logits(x.view());
    assert_eq!(first, a.population.logits(x.view()));
    assert_eq!(first, b.population.logits(x.view()));
    // A row's output does not depend on the rest of the batch.
    for i in 0..x.nrows() {
        let row = a.population.logits(x.slice(ndarray::s![i..i + 1, ..]));
        assert_eq!(row.row(0), first.row(i));
    }
}
