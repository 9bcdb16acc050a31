use super::tabular::{sample_categorical, TabularMDP};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::soft_pi::TabularPolicy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_rollouts: usize,
}

/// Monte-Carlo estimate of the entropy-augmented discounted return
/// `E[sum_t gamma^t (r - alpha ln pi(a_t|s_t))]` from `state`, truncated at `horizon`.
pub fn mc_soft_return(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    state: usize,
    alpha: f64,
    n_rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<McEstimate> {
    if state >= mdp.n_states() || n_rollouts == 0 {
        return Err(Error::param("invalid start state or rollout count"));
    }
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::param("policy shape does not match the MDP"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha {alpha} must be finite and non-negative")));
    }
    let mut rng = seeded(seed);
    let gamma = mdp.gamma();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_rollouts {
        let mut s = state;
        let mut discount = 1.0;
        let mut ret = 0.0;
        for _ in 0..horizon {
            let probs = policy.row(s);
            let a = sample_categorical(probs, &mut rng);
            ret += discount * (mdp.reward(s, a) - alpha * policy.log_prob(s, a));
            discount *= gamma;
            s = mdp.sample_next(s, a, &mut rng);
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = n_rollouts as f64;
    let mean = sum / n;
    let var = if n_rollouts > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_rollouts,
    })
}
