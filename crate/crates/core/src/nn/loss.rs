//! PPO loss terms with gradients with respect to network outputs.
//!
//! All losses are means over the batch. Gradients are returned for the raw
//! logits or value outputs so they can be fed straight into
//! [`Mlp::backward`](super::Mlp::backward).

use ndarray::{Array2, ArrayView2};

use super::{MaskedCategorical, Real};

#[derive(Debug, Clone)]
pub struct PolicyLoss<T> {
    /// `-mean(surrogate) - entropy_coef * mean(entropy)`.
    pub loss: f64,
    pub surrogate: f64,
    pub entropy: f64,
    /// Mean of `(ratio - 1) - ln(ratio)`.
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub d_logits: Array2<T>,
}

/// Clipped-surrogate policy loss with an entropy bonus.
///
/// `actions` is `(batch, heads)`; `old_log_probs` are joint log-probabilities
/// under the behaviour policy.
pub fn policy_loss<T: Real>(
    dist: &MaskedCategorical<T>,
    actions: ArrayView2<usize>,
    old_log_probs: &[T],
    advantages: &[T],
    clip_eps: f64,
    entropy_coef: f64,
) -> PolicyLoss<T> {
    let b = dist.rows();
    let inv_b = 1.0 / b as f64;
    let mut d_logits = Array2::<T>::zeros(dist.log_probs.raw_dim());
    let (mut surrogate, mut entropy, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..b {
        let acts = actions.row(i);
        let acts = acts.as_slice().expect("contiguous actions");
        let logp = dist.log_prob(i, acts).as_f64();
        let log_ratio = logp - old_log_probs[i].as_f64();
        let ratio = log_ratio.exp();
        let adv = advantages[i].as_f64();
        let unclipped = ratio * adv;
        let clipped_ratio = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        let surr2 = clipped_ratio * adv;
        surrogate += unclipped.min(surr2);
        kl += (ratio - 1.0) - log_ratio;
        if (ratio - 1.0).abs() > clip_eps {
            clipped += 1;
        }
        // gradient flows only when the unclipped term is the minimum
        let d_logp = if unclipped <= surr2 { -inv_b * unclipped } else { 0.0 };

        let lp_row = dist.log_probs.row(i);
        let mut d_row = d_logits.row_mut(i);
        for (h, &act) in acts.iter().enumerate() {
            let range = dist.heads.range(h);
            let lp = &lp_row.as_slice().expect("contiguous")[range.clone()];
            let head_entropy = super::entropy_row(lp).as_f64();
            entropy += head_entropy;
            let chosen = range.start + act;
            for (k, &l) in lp.iter().enumerate() {
                if !l.is_finite() {
                    continue;
                }
                let l = l.as_f64();
                let p = l.exp();
                let onehot = if range.start + k == chosen { 1.0 } else { 0.0 };
                // loss term is -coef * H / B, dH/dz = -p (log p + H)
                let g = d_logp * (onehot - p) + entropy_coef * inv_b * p * (l + head_entropy);
                d_row[range.start + k] = T::lit(g);
            }
        }
    }
    let surrogate = surrogate * inv_b;
    let entropy = entropy * inv_b;
    PolicyLoss {
        loss: -surrogate - entropy_coef * entropy,
        surrogate,
        entropy,
        approx_kl: kl * inv_b,
        clip_fraction: clipped as f64 * inv_b,
        d_logits,
    }
}

#[derive(Debug, Clone)]
pub struct ValueLoss<T> {
    /// `coef * mean(max(unclipped^2, clipped^2))`.
    pub loss: f64,
    /// `(batch, 1)` gradient for the value head.
    pub d_values: Array2<T>,
}

/// Squared-error value loss, optionally clipped to within `clip` of the old
/// prediction (the larger of the two errors is kept).
pub fn value_loss<T: Real>(
    values: &[T],
    old_values: &[T],
    returns: &[T],
    clip: Option<f64>,
    coef: f64,
) -> ValueLoss<T> {
    let b = values.len();
    let scale = coef / b as f64;
    let mut d_values = Array2::<T>::zeros((b, 1));
    let mut total = 0.0;
    for i in 0..b {
        let v = values[i].as_f64();
        let ret = returns[i].as_f64();
        let err = v - ret;
        let (sq, grad) = match clip {
            None => (err * err, 2.0 * err),
            Some(c) => {
                let old = old_values[i].as_f64();
                let delta = v - old;
                let v_clip = old + delta.clamp(-c, c);
                let err_clip = v_clip - ret;
                if err * err >= err_clip * err_clip {
                    (err * err, 2.0 * err)
                } else {
                    let inside = if delta.abs() < c { 1.0 } else { 0.0 };
                    (err_clip * err_clip, 2.0 * err_clip * inside)
                }
            }
        };
        total += sq;
        d_values[[i, 0]] = T::lit(scale * grad);
    }
    ValueLoss {
        loss: total * scale,
        d_values,
    }
}
