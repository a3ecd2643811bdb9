//! Utility, inequality and social-welfare measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WelfareError {
    #[error("isoelastic utility is undefined for eta = 1")]
    UnitEta,
    #[error("eta must be finite and >= 0, got {0}")]
    NegativeEta(f64),
}

/// Isoelastic utility of coin minus accumulated labor, for a fixed `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isoelastic {
    eta: f64,
    one_minus_eta: f64,
}

impl Isoelastic {
    pub fn new(eta: f64) -> Result<Self, WelfareError> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(WelfareError::NegativeEta(eta));
        }
        if eta == 1.0 {
            return Err(WelfareError::UnitEta);
        }
        Ok(Isoelastic {
            eta,
            one_minus_eta: 1.0 - eta,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[inline]
    pub fn utility(&self, coin: f64, labor: f64) -> f64 {
        (coin.max(0.0).powf(self.one_minus_eta) - 1.0) / self.one_minus_eta - labor
    }
}

/// `(C^(1-eta) - 1) / (1 - eta) - L`.
pub fn isoelastic_utility(coin: f64, labor: f64, eta: f64) -> Result<f64, WelfareError> {
    Ok(Isoelastic::new(eta)?.utility(coin, labor))
}

/// Gini index via the sorted-rank form.
///
/// Returns 0 for an empty or single-element input and for an all-zero total.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    if n <= 1 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    gini_sorted(&sorted)
}

/// Gini index of an already ascending-sorted slice.
pub fn gini_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n <= 1 {
        return 0.0;
    }
    let total: f64 = sorted.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    // sum_i sum_j |x_i - x_j| = 2 * sum_i (2i - n - 1) x_(i), i 1-based
    let nf = n as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - nf - 1.0) * x)
        .sum();
    (weighted / (nf * total)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialWelfare {
    pub gini: f64,
    pub equality: f64,
    pub productivity: f64,
    pub utility: f64,
}

/// Equality-weighted productivity.
///
/// `equality = w (1 - gini) + (1 - w)`, so `w = 1` gives `1 - gini` and
/// `w = 0` ignores inequality entirely.
pub fn social_welfare(coins: &[f64], equality_weight: f64) -> SocialWelfare {
    let g = gini(coins);
    let productivity: f64 = coins.iter().sum();
    let equality = equality_weight * (1.0 - g) + (1.0 - equality_weight);
    SocialWelfare {
        gini: g,
        equality,
        productivity,
        utility: equality * productivity,
    }
}

#[inline]
pub fn reward_delta(prev: f64, next: f64) -> f64 {
    next - prev
}

/// Per-step welfare readout for a whole population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareSnapshot {
    pub utilities: Vec<f64>,
    pub welfare: SocialWelfare,
}
