use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMDP;

/// Smallest probability ever fed to a logarithm.
pub const PROB_FLOOR: f64 = 1e-300;

/// Stochastic policy `pi(a|s)` stored as an `S x A` row-stochastic table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    /// Validates rows and lifts entries below [`PROB_FLOOR`] to the floor.
    pub fn new(n_states: usize, n_actions: usize, mut probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || probs.len() != n_states * n_actions {
            return Err(Error::param("policy table has the wrong shape"));
        }
        for (s, row) in probs.chunks_mut(n_actions).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::param(format!("policy row {s} has an invalid entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::param(format!("policy row {s} sums to {total}")));
            }
            for p in row.iter_mut() {
                *p = p.max(PROB_FLOOR);
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Row-wise softmax of `logits / temperature`.
    pub fn softmax(n_states: usize, n_actions: usize, logits: &[f64], temperature: f64) -> Result<Self> {
        if logits.len() != n_states * n_actions {
            return Err(Error::param("logit table has the wrong shape"));
        }
        let mut probs = Vec::with_capacity(logits.len());
        for row in logits.chunks(n_actions) {
            let scaled: Vec<f64> = row.iter().map(|x| x / temperature).collect();
            let lse = crate::nn::log_sum_exp(&scaled);
            let mut p: Vec<f64> = scaled.iter().map(|x| (x - lse).exp()).collect();
            // Renormalize so rows sum to one to round-off.
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= total);
            probs.extend(p);
        }
        Self::new(n_states, n_actions, probs)
    }

    /// Rows drawn from Dirichlet(1).
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states {
            probs.extend(crate::mdp::tabular_dirichlet_row(n_actions, rng));
        }
        Self::new(n_states, n_actions, probs).expect("Dirichlet rows are stochastic")
    }

    /// Deterministic argmax policy (ties go to the lowest action).
    pub fn greedy(&self) -> Self {
        let mut probs = vec![0.0; self.probs.len()];
        for s in 0..self.n_states {
            let row = self.row(s);
            let best = (0..self.n_actions).fold(0, |b, a| if row[a] > row[b] { a } else { b });
            probs[s * self.n_actions + best] = 1.0;
        }
        Self::new(self.n_states, self.n_actions, probs).expect("one-hot rows are stochastic")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        self.prob(s, a).max(PROB_FLOOR).ln()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        super::sup_norm_diff(&self.probs, &other.probs)
    }

    pub(crate) fn check_against(&self, mdp: &TabularMDP) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::param(format!(
                "policy is {}x{} but the MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Per-step policies over a planning horizon; step `h` chooses `a_{t+h}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonPolicy {
    steps: Vec<TabularPolicy>,
}

impl HorizonPolicy {
    pub fn new(steps: Vec<TabularPolicy>) -> Result<Self> {
        let Some(first) = steps.first() else {
            return Err(Error::param("a horizon policy needs at least one step"));
        };
        let shape = (first.n_states(), first.n_actions());
        if steps.iter().any(|p| (p.n_states(), p.n_actions()) != shape) {
            return Err(Error::param("all step policies must share one shape"));
        }
        Ok(Self { steps })
    }

    pub fn repeated(policy: &TabularPolicy, horizon: usize) -> Result<Self> {
        Self::new(vec![policy.clone(); horizon])
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, h: usize) -> &TabularPolicy {
        &self.steps[h]
    }

    pub fn steps(&self) -> &[TabularPolicy] {
        &self.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn floor_keeps_logs_finite() {
        let p = TabularPolicy::new(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(p.log_prob(0, 1).is_finite());
        assert_eq!(p.prob(0, 1), PROB_FLOOR);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(TabularPolicy::new(1, 2, vec![0.6, 0.6]).is_err());
        assert!(TabularPolicy::new(1, 2, vec![1.5, -0.5]).is_err());
        assert!(TabularPolicy::new(2, 2, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn random_and_softmax_rows_are_stochastic() {
        let p = TabularPolicy::random(5, 4, &mut seeded(2));
        for s in 0..5 {
            assert!((p.row(s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let q = TabularPolicy::softmax(1, 2, &[0.0, 3f64.ln()], 1.0).unwrap();
        assert!((q.prob(0, 0) - 0.25).abs() < 1e-15 && (q.prob(0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn greedy_picks_the_mode() {
        let p = TabularPolicy::new(2, 3, vec![0.2, 0.5, 0.3, 0.6, 0.2, 0.2]).unwrap();
        let g = p.greedy();
        assert_eq!(g.prob(0, 1), 1.0);
        assert_eq!(g.prob(1, 0), 1.0);
    }

    #[test]
    fn horizon_policy_validates() {
        assert!(HorizonPolicy::new(vec![]).is_err());
        let a = TabularPolicy::uniform(2, 2);
        let b = TabularPolicy::uniform(3, 2);
        assert!(HorizonPolicy::new(vec![a.clone(), b]).is_err());
        assert_eq!(HorizonPolicy::repeated(&a, 4).unwrap().horizon(), 4);
    }
}
