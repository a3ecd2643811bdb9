/// Generalized advantage estimates for one trajectory segment.
///
/// `dones[t]` marks that the episode ended after step `t`, so neither the
/// bootstrap value nor later advantages leak across it. `last_value` is the
/// value of the state following the final step. Writes advantages and
/// returns (`advantage + value`) into the output slices.
#[allow(clippy::too_many_arguments)]
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
    advantages: &mut [f64],
    returns: &mut [f64],
) {
    let n = rewards.len();
    debug_assert!(values.len() == n && dones.len() == n);
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let keep = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * keep - values[t];
        next_adv = delta + gamma * lambda * keep * next_adv;
        advantages[t] = next_adv;
        returns[t] = next_adv + values[t];
        next_value = values[t];
    }
}

/// Allocating wrapper around [`compute_gae`].
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut adv = vec![0.0; rewards.len()];
    let mut ret = vec![0.0; rewards.len()];
    compute_gae(rewards, values, dones, last_value, gamma, lambda, &mut adv, &mut ret);
    (adv, ret)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undiscounted_sums() {
        let (a, r) = gae(&[1.0; 3], &[0.0; 3], &[false, false, true], 5.0, 1.0, 1.0);
        assert_eq!(a, vec![3.0, 2.0, 1.0]);
        assert_eq!(r, a);
    }

    #[test]
    fn two_step_by_hand() {
        let (a, _) = gae(&[1.0, 1.0], &[0.0, 0.0], &[false, false], 0.0, 0.999, 0.95);
        assert_eq!(a[1], 1.0);
        assert!((a[0] - (1.0 + 0.999 * 0.95)).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let rewards = [0.5, -1.0, 2.0, 0.1];
        let values = [0.3, 0.7, -0.2, 1.1];
        let dones = [false, true, false, false];
        let (a, _) = gae(&rewards, &values, &dones, 0.9, 0.99, 0.0);
        let next = [0.7, 0.0, 1.1, 0.9];
        for t in 0..4 {
            let td = rewards[t] + 0.99 * next[t] - values[t];
            assert!((a[t] - td).abs() < 1e-15);
        }
    }
}
