use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GovernmentBatch, GovernmentModel, Network, PopulationBatch, PopulationModel, TrainConfig};
use crate::nn::loss::{policy_loss, value_loss};
use crate::nn::{HeadLayout, MaskedCategorical, NnError};

/// Loss diagnostics averaged over every minibatch step of one update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    steps: usize,
}

impl LossStats {
    fn add(&mut self, other: &LossStats) {
        self.policy_loss += other.policy_loss;
        self.value_loss += other.value_loss;
        self.entropy += other.entropy;
        self.approx_kl += other.approx_kl;
        self.clip_fraction += other.clip_fraction;
        self.grad_norm += other.grad_norm;
        self.steps += 1;
    }

    fn finish(mut self) -> Self {
        if self.steps > 0 {
            let k = 1.0 / self.steps as f64;
            self.policy_loss *= k;
            self.value_loss *= k;
            self.entropy *= k;
            self.approx_kl *= k;
            self.clip_fraction *= k;
            self.grad_norm *= k;
        }
        self
    }
}

/// Hyperparameters for a single update, resolved from the schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateParams {
    pub lr: f64,
    pub entropy_coef: f64,
    pub clip_eps: f64,
    pub value_coef: f64,
    pub value_clip: Option<f64>,
    pub num_epochs: usize,
    pub num_minibatches: usize,
    pub normalize_advantages: bool,
}

impl UpdateParams {
    pub fn from_config(config: &TrainConfig, progress: f64) -> Self {
        UpdateParams {
            lr: config.lr_at(progress),
            entropy_coef: config.entropy_coef_at(progress),
            clip_eps: config.clip_eps,
            value_coef: config.value_coef,
            value_clip: config.value_clip(),
            num_epochs: config.num_epochs,
            num_minibatches: config.num_minibatches,
            normalize_advantages: config.normalize_advantages,
        }
    }
}

/// Normalizes `adv` to zero mean and unit (population) standard deviation.
/// Slices of length < 2 are left untouched.
pub fn normalize(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

/// `(start, end)` bounds splitting `len` items into `parts` near-equal chunks.
fn chunk_bounds(len: usize, parts: usize) -> impl Iterator<Item = (usize, usize)> {
    let parts = parts.min(len).max(1);
    (0..parts).map(move |m| (m * len / parts, (m + 1) * len / parts))
}

struct Rows<'a> {
    obs: Array2<f32>,
    masks: Option<Array2<bool>>,
    actions: Array2<usize>,
    old_log_probs: Vec<f32>,
    old_values: Vec<f32>,
    advantages: Vec<f32>,
    returns: Vec<f32>,
    heads: &'a HeadLayout,
}

fn check_finite(what: &str, v: f64) -> Result<(), NnError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(NnError::NonFinite(format!("{what} = {v}")))
    }
}

/// One optimizer step of the policy on `rows`.
fn policy_step(net: &mut Network, rows: &Rows, p: &UpdateParams) -> Result<LossStats, NnError> {
    let (logits, tape) = net.params.forward_tape(rows.obs.view());
    let dist = MaskedCategorical::new(logits.view(), rows.masks.as_ref().map(|m| m.view()), rows.heads.clone())?;
    let out = policy_loss(
        &dist,
        rows.actions.view(),
        &rows.old_log_probs,
        &rows.advantages,
        p.clip_eps,
        p.entropy_coef,
    );
    check_finite("policy loss", out.loss)?;
    let mut grads = net.params.zeros_like();
    net.params.backward(&tape, out.d_logits.view(), &mut grads);
    let grad_norm = net.opt.step(&mut net.params, &mut grads, p.lr);
    Ok(LossStats {
        policy_loss: out.loss,
        entropy: out.entropy,
        approx_kl: out.approx_kl,
        clip_fraction: out.clip_fraction,
        grad_norm,
        ..LossStats::default()
    })
}

fn value_step(net: &mut Network, rows: &Rows, p: &UpdateParams) -> Result<f64, NnError> {
    let (v, tape) = net.params.forward_tape(rows.obs.view());
    let values = v.column(0).to_vec();
    let out = value_loss(&values, &rows.old_values, &rows.returns, p.value_clip, p.value_coef);
    check_finite("value loss", out.loss)?;
    let mut grads = net.params.zeros_like();
    net.params.backward(&tape, out.d_values.view(), &mut grads);
    net.opt.step(&mut net.params, &mut grads, p.lr);
    Ok(out.loss)
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Builds the training rows for `idx` from a batch's columns.
#[allow(clippy::too_many_arguments)]
fn gather_rows<'a>(
    idx: &[usize],
    obs: &Array2<f32>,
    masks: Option<&Array2<bool>>,
    actions: &Array2<usize>,
    log_probs: &[f32],
    values: &[f32],
    adv: &[f64],
    returns: &[f64],
    heads: &'a HeadLayout,
) -> Rows<'a> {
    Rows {
        obs: obs.select(Axis(0), idx),
        masks: masks.map(|m| m.select(Axis(0), idx)),
        actions: actions.select(Axis(0), idx),
        old_log_probs: idx.iter().map(|&i| log_probs[i]).collect(),
        old_values: idx.iter().map(|&i| values[i]).collect(),
        advantages: to_f32(&idx.iter().map(|&i| adv[i]).collect::<Vec<_>>()),
        returns: to_f32(&idx.iter().map(|&i| returns[i]).collect::<Vec<_>>()),
        heads,
    }
}

/// Minibatch advantages, normalized when requested, indexed like `mb`.
fn minibatch_advantages(mb: &[usize], advantages: &[f64], normalize_adv: bool) -> Vec<f64> {
    let mut adv: Vec<f64> = mb.iter().map(|&i| advantages[i]).collect();
    if normalize_adv {
        normalize(&mut adv);
    }
    adv
}

/// PPO epochs over the population batch. Minibatches are drawn from a
/// shuffle of the flattened `(env, step, agent)` axis; each network is
/// trained on the rows belonging to the agents it serves.
pub fn update_population<R: Rng + ?Sized>(
    model: &mut PopulationModel,
    batch: &PopulationBatch,
    p: &UpdateParams,
    rng: &mut R,
) -> Result<LossStats, NnError> {
    let len = batch.len();
    let heads = HeadLayout::single(model.num_actions);
    let mut perm: Vec<usize> = (0..len).collect();
    let mut stats = LossStats::default();
    let mut adv_full = vec![0.0; len];
    for _ in 0..p.num_epochs {
        perm.shuffle(rng);
        for (lo, hi) in chunk_bounds(len, p.num_minibatches) {
            let mb = &perm[lo..hi];
            let adv = minibatch_advantages(mb, &batch.advantages, p.normalize_advantages);
            for (&i, &a) in mb.iter().zip(&adv) {
                adv_full[i] = a;
            }
            let mut step = LossStats::default();
            let np = model.policies.len();
            for k in 0..np {
                let idx: Vec<usize> = mb
                    .iter()
                    .copied()
                    .filter(|&i| model.policy_index(batch.agent(i)) == k)
                    .collect();
                if idx.is_empty() {
                    continue;
                }
                let rows = gather_rows(
                    &idx,
                    &batch.obs,
                    Some(&batch.masks),
                    &batch.actions,
                    &batch.log_probs,
                    &batch.values,
                    &adv_full,
                    &batch.returns,
                    &heads,
                );
                let s = policy_step(&mut model.policies[k], &rows, p)?;
                let w = 1.0 / np as f64;
                step.policy_loss += s.policy_loss * w;
                step.entropy += s.entropy * w;
                step.approx_kl += s.approx_kl * w;
                step.clip_fraction += s.clip_fraction * w;
                step.grad_norm += s.grad_norm * w;
            }
            let nv = model.values.len();
            for k in 0..nv {
                let idx: Vec<usize> = mb
                    .iter()
                    .copied()
                    .filter(|&i| model.value_index(batch.agent(i)) == k)
                    .collect();
                if idx.is_empty() {
                    continue;
                }
                let rows = gather_rows(
                    &idx,
                    &batch.obs,
                    None,
                    &batch.actions,
                    &batch.log_probs,
                    &batch.values,
                    &adv_full,
                    &batch.returns,
                    &heads,
                );
                step.value_loss += value_step(&mut model.values[k], &rows, p)? / nv as f64;
            }
            stats.add(&step);
        }
    }
    Ok(stats.finish())
}

/// PPO epochs over the government batch, shuffled across `(env, step)`.
pub fn update_government<R: Rng + ?Sized>(
    model: &mut GovernmentModel,
    batch: &GovernmentBatch,
    p: &UpdateParams,
    rng: &mut R,
) -> Result<LossStats, NnError> {
    let len = batch.len();
    let heads = model.heads();
    let mut perm: Vec<usize> = (0..len).collect();
    let mut stats = LossStats::default();
    let mut adv_full = vec![0.0; len];
    for _ in 0..p.num_epochs {
        perm.shuffle(rng);
        for (lo, hi) in chunk_bounds(len, p.num_minibatches) {
            let mb = &perm[lo..hi];
            let adv = minibatch_advantages(mb, &batch.advantages, p.normalize_advantages);
            for (&i, &a) in mb.iter().zip(&adv) {
                adv_full[i] = a;
            }
            let rows = gather_rows(
                mb,
                &batch.obs,
                None,
                &batch.actions,
                &batch.log_probs,
                &batch.values,
                &adv_full,
                &batch.returns,
                &heads,
            );
            let mut s = policy_step(&mut model.policy, &rows, p)?;
            s.value_loss = value_step(&mut model.value, &rows, p)?;
            stats.add(&s);
        }
    }
    Ok(stats.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_moments() {
        let mut a: Vec<f64> = (0..37).map(|i| ((i * 13) % 7) as f64 * 0.3 - 1.0).collect();
        normalize(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-6);
        assert!((std - 1.0).abs() < 1e-6);
        let mut one = vec![3.0];
        normalize(&mut one);
        assert_eq!(one, vec![3.0]);
    }

    #[test]
    fn chunks_cover_everything() {
        let b: Vec<_> = chunk_bounds(600, 6).collect();
        assert_eq!(b.len(), 6);
        assert_eq!(b[0], (0, 100));
        assert_eq!(b[5].1, 600);
        let b: Vec<_> = chunk_bounds(10, 3).collect();
        assert_eq!(b, vec![(0, 3), (3, 6), (6, 10)]);
    }
}
