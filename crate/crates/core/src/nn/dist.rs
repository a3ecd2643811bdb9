use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{NnError, Real};

/// Splits a logits row into independent categorical heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl HeadLayout {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        HeadLayout { sizes, offsets }
    }

    pub fn single(size: usize) -> Self {
        Self::new(vec![size])
    }

    pub fn num_heads(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn range(&self, head: usize) -> std::ops::Range<usize> {
        self.offsets[head]..self.offsets[head] + self.sizes[head]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Log-softmax over the unmasked entries; masked entries get `-inf`.
/// Returns `false` if every entry is masked.
pub fn log_softmax_row<T: Real>(logits: &[T], mask: Option<&[bool]>, out: &mut [T]) -> bool {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let mut max = T::neg_infinity();
    for (i, &z) in logits.iter().enumerate() {
        if allowed(i) && z > max {
            max = z;
        }
    }
    if max == T::neg_infinity() {
        out.fill(T::neg_infinity());
        return false;
    }
    let mut sum = T::zero();
    for (i, &z) in logits.iter().enumerate() {
        if allowed(i) {
            sum += (z - max).exp();
        }
    }
    let log_z = max + sum.ln();
    for (i, (&z, o)) in logits.iter().zip(out.iter_mut()).enumerate() {
        *o = if allowed(i) { z - log_z } else { T::neg_infinity() };
    }
    true
}

/// Entropy of a log-probability row; `-inf` entries contribute nothing.
pub fn entropy_row<T: Real>(log_probs: &[T]) -> T {
    log_probs
        .iter()
        .filter(|lp| lp.is_finite())
        .fold(T::zero(), |acc, &lp| acc - lp.exp() * lp)
}

/// Inverse-CDF sample from a log-probability row using one uniform draw.
/// Zero-probability entries are never returned.
pub fn sample_row<T: Real>(log_probs: &[T], uniform: f64) -> Option<usize> {
    let mut cum = 0.0;
    let mut last = None;
    for (i, lp) in log_probs.iter().enumerate() {
        if !lp.is_finite() {
            continue;
        }
        let p = lp.as_f64().exp();
        if p <= 0.0 {
            continue;
        }
        last = Some(i);
        cum += p;
        if uniform < cum {
            return Some(i);
        }
    }
    last
}

/// Batch of (possibly multi-head) masked categorical distributions.
#[derive(Debug, Clone)]
pub struct MaskedCategorical<T> {
    pub heads: HeadLayout,
    pub log_probs: Array2<T>,
}

impl<T: Real> MaskedCategorical<T> {
    /// `masks`, when given, must have the same shape as `logits`.
    pub fn new(logits: ArrayView2<T>, masks: Option<ArrayView2<bool>>, heads: HeadLayout) -> Result<Self, NnError> {
        if logits.ncols() != heads.total() {
            return Err(NnError::Shape(format!(
                "logits have {} columns, heads need {}",
                logits.ncols(),
                heads.total()
            )));
        }
        if let Some(m) = &masks {
            if m.dim() != logits.dim() {
                return Err(NnError::Shape(format!(
                    "mask {:?} vs logits {:?}",
                    m.dim(),
                    logits.dim()
                )));
            }
        }
        let mut log_probs = Array2::zeros(logits.raw_dim());
        for (row, (z, mut out)) in logits.outer_iter().zip(log_probs.outer_iter_mut()).enumerate() {
            let z = z.as_slice().expect("contiguous logits");
            let out = out.as_slice_mut().expect("contiguous");
            let mrow = masks.as_ref().map(|m| m.row(row));
            for h in 0..heads.num_heads() {
                let r = heads.range(h);
                let mslice = mrow
                    .as_ref()
                    .map(|m| m.as_slice().expect("contiguous mask")[r.clone()].to_vec());
                if !log_softmax_row(&z[r.clone()], mslice.as_deref(), &mut out[r]) {
                    return Err(NnError::FullyMasked(row));
                }
            }
        }
        Ok(MaskedCategorical { heads, log_probs })
    }

    pub fn rows(&self) -> usize {
        self.log_probs.nrows()
    }

    pub fn probs(&self, row: usize) -> Vec<f64> {
        self.log_probs.row(row).iter().map(|lp| lp.as_f64().exp()).collect()
    }

    /// Joint log-probability (sum over heads) of `actions` in `row`.
    pub fn log_prob(&self, row: usize, actions: &[usize]) -> T {
        let lp = self.log_probs.row(row);
        (0..self.heads.num_heads()).fold(T::zero(), |acc, h| acc + lp[self.heads.range(h).start + actions[h]])
    }

    pub fn entropy(&self, row: usize) -> T {
        let lp = self.log_probs.row(row);
        let lp = lp.as_slice().expect("contiguous");
        (0..self.heads.num_heads()).fold(T::zero(), |acc, h| acc + entropy_row(&lp[self.heads.range(h)]))
    }

    /// Samples one action per head for `row`, writing into `actions`, and
    /// returns the joint log-probability. One uniform draw per head.
    pub fn sample_into<R: Rng + ?Sized>(&self, row: usize, rng: &mut R, actions: &mut [usize]) -> T {
        let lp = self.log_probs.row(row);
        let lp = lp.as_slice().expect("contiguous");
        let mut total = T::zero();
        for (h, slot) in actions[..self.heads.num_heads()].iter_mut().enumerate() {
            let r = self.heads.range(h);
            let a = sample_row(&lp[r.clone()], rng.random::<f64>()).expect("validated: at least one allowed action");
            *slot = a;
            total += lp[r.start + a];
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_mask_is_certain() {
        let logits = array![[0.3f64, -1.0, 2.0, 0.0]];
        let mask = array![[false, false, true, false]];
        let d = MaskedCategorical::new(logits.view(), Some(mask.view()), HeadLayout::single(4)).unwrap();
        assert_eq!(d.probs(0), vec![0.0, 0.0, 1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = [0];
        let lp = d.sample_into(0, &mut rng, &mut a);
        assert_eq!((a[0], lp), (2, 0.0));
        assert_eq!(d.entropy(0), 0.0);
    }

    #[test]
    fn zero_logits_uniform() {
        let logits = Array2::<f32>::zeros((1, 4));
        let d = MaskedCategorical::new(logits.view(), None, HeadLayout::single(4)).unwrap();
        for p in d.probs(0) {
            assert!((p - 0.25).abs() < 1e-7);
        }
    }

    #[test]
    fn fully_masked_row_errors() {
        let logits = Array2::<f64>::zeros((2, 3));
        let mask = array![[true, false, false], [false, false, false]];
        assert_eq!(
            MaskedCategorical::new(logits.view(), Some(mask.view()), HeadLayout::single(3)).err(),
            Some(NnError::FullyMasked(1))
        );
    }

    #[test]
    fn masked_entropy_matches_renormalized() {
        let logits = array![[0.5f64, 1.5, -0.3, 2.2, 0.0]];
        let mask = array![[true, false, true, true, false]];
        let d = MaskedCategorical::new(logits.view(), Some(mask.view()), HeadLayout::single(5)).unwrap();
        let sub = array![[0.5f64, -0.3, 2.2]];
        let s = MaskedCategorical::new(sub.view(), None, HeadLayout::single(3)).unwrap();
        assert!((d.entropy(0) - s.entropy(0)).abs() < 1e-9);
    }

    #[test]
    fn multi_head_joint_log_prob() {
        let logits = array![[0.1f64, 0.2, 0.3, 1.0, -1.0]];
        let d = MaskedCategorical::new(logits.view(), None, HeadLayout::new(vec![3, 2])).unwrap();
        let lp = d.log_prob(0, &[2, 0]);
        let expect = d.log_probs[[0, 2]] + d.log_probs[[0, 3]];
        assert_eq!(lp, expect);
        let p: f64 = d.probs(0)[..3].iter().sum();
        assert!((p - 1.0).abs() < 1e-12);
    }
}
