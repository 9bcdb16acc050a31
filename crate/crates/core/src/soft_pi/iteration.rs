use serde::{Deserialize, Serialize};

use super::evaluation::{soft_policy_evaluation, SoftValueTable};
use super::planning::solve_multi_step;
use super::policy::TabularPolicy;
use super::sup_norm_diff;
use crate::error::{Error, Result};
use crate::mdp::TabularMDP;
use crate::nn::log_sum_exp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationOutcome {
    pub policy: TabularPolicy,
    pub values: SoftValueTable,
    pub iterations: usize,
}

/// Optimal maximum-entropy solution found by soft value iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftOptimum {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub policy: TabularPolicy,
    pub iterations: usize,
}

/// First-step slice of the `H`-step plan bootstrapped on `v_old`.
pub fn distill_from_values(mdp: &TabularMDP, v_old: &SoftValueTable, horizon: usize, alpha: f64) -> Result<TabularPolicy> {
    Ok(solve_multi_step(mdp, v_old, horizon, alpha)?.first_step)
}

/// Evaluates `pi_old`, plans `horizon` steps ahead on top of its value, and
/// keeps only the first step. The later step policies are discarded.
pub fn distill_improve(mdp: &TabularMDP, pi_old: &TabularPolicy, horizon: usize, alpha: f64) -> Result<TabularPolicy> {
    let v_old = soft_policy_evaluation(mdp, pi_old, alpha)?;
    distill_from_values(mdp, &v_old, horizon, alpha)
}

/// Alternates exact evaluation and distilled `H`-step improvement until the
/// value function moves less than `tol` in sup norm.
pub fn extended_policy_iteration(
    mdp: &TabularMDP,
    pi0: &TabularPolicy,
    horizon: usize,
    alpha: f64,
    tol: f64,
    max_iters: usize,
) -> Result<IterationOutcome> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("tol {tol} must be positive")));
    }
    let mut policy = pi0.clone();
    let mut values = soft_policy_evaluation(mdp, &policy, alpha)?;
    let mut last_delta = f64::INFINITY;
    for it in 1..=max_iters {
        let next = distill_from_values(mdp, &values, horizon, alpha)?;
        let next_values = soft_policy_evaluation(mdp, &next, alpha)?;
        last_delta = sup_norm_diff(&next_values.v, &values.v);
        policy = next;
        values = next_values;
        if last_delta < tol {
            return Ok(IterationOutcome {
                policy,
                values,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        last_delta,
        last_policy: Box::new(policy),
    })
}

/// Iterates `V <- alpha * logsumexp((r + gamma P V) / alpha)` until the
/// a-posteriori error bound `gamma / (1 - gamma) * |V_k - V_{k-1}|` drops
/// below `tol`.
pub fn soft_value_iteration(mdp: &TabularMDP, alpha: f64, tol: f64, max_iters: usize) -> Result<SoftOptimum> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha {alpha} must be positive and finite")));
    }
    if !(tol > 0.0) {
        return Err(Error::param(format!("tol {tol} must be positive")));
    }
    let (ns, na, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut v = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut scaled = vec![0.0; na];
    let mut last_delta = f64::INFINITY;
    for it in 1..=max_iters {
        for s in 0..ns {
            for a in 0..na {
                let ev: f64 = mdp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                q[s * na + a] = mdp.reward(s, a) + gamma * ev;
            }
        }
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                for a in 0..na {
                    scaled[a] = q[s * na + a] / alpha;
                }
                alpha * log_sum_exp(&scaled)
            })
            .collect();
        last_delta = sup_norm_diff(&next, &v);
        v = next;
        if gamma / (1.0 - gamma) * last_delta < tol {
            let policy = TabularPolicy::softmax(ns, na, &q, alpha)?;
            return Ok(SoftOptimum {
                v,
                q,
                policy,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        last_delta,
        last_policy: Box::new(TabularPolicy::softmax(ns, na, &q, alpha)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;
    use crate::rng::seeded;
    use crate::soft_pi::one_step_improvement;

    #[test]
    fn horizon_one_is_classic_soft_improvement() {
        for seed in 0..10 {
            let mdp = random_mdp(5, 3, 0.9, seed).unwrap();
            let pi = TabularPolicy::random(5, 3, &mut seeded(seed + 100));
            let sac = one_step_improvement(&soft_policy_evaluation(&mdp, &pi, 0.2).unwrap()).unwrap();
            let ours = distill_improve(&mdp, &pi, 1, 0.2).unwrap();
            assert!(ours.max_abs_diff(&sac) < 1e-12);
        }
    }

    #[test]
    fn distilled_policy_improves_every_state() {
        let mdp = random_mdp(6, 3, 0.9, 21).unwrap();
        let pi_old = TabularPolicy::random(6, 3, &mut seeded(22));
        let pi_new = distill_improve(&mdp, &pi_old, 3, 0.2).unwrap();
        let v_old = soft_policy_evaluation(&mdp, &pi_old, 0.2).unwrap();
        let v_new = soft_policy_evaluation(&mdp, &pi_new, 0.2).unwrap();
        for s in 0..6 {
            assert!(v_new.v[s] >= v_old.v[s] - 1e-9);
        }
    }

    #[test]
    fn optimal_policy_is_a_fixed_point() {
        let mdp = random_mdp(6, 3, 0.9, 23).unwrap();
        let opt = soft_value_iteration(&mdp, 0.2, 1e-13, 100_000).unwrap();
        for h in [1, 2, 4] {
            let next = distill_improve(&mdp, &opt.policy, h, 0.2).unwrap();
            assert!(next.max_abs_diff(&opt.policy) < 1e-8);
        }
    }

    #[test]
    fn single_state_converges_in_two_iterations() {
        let mdp = TabularMDP::new(1, 3, vec![1.0; 3], vec![0.3, 1.0, -0.2], 0.8, vec![false]).unwrap();
        let out = extended_policy_iteration(&mdp, &TabularPolicy::uniform(1, 3), 1, 0.5, 1e-10, 50).unwrap();
        assert!(out.iterations <= 2);
        let closed = TabularPolicy::softmax(1, 3, &[0.3, 1.0, -0.2], 0.5).unwrap();
        assert!(out.policy.max_abs_diff(&closed) < 1e-12);
    }

    #[test]
    fn converges_to_soft_optimum_for_any_horizon() {
        let mdp = random_mdp(5, 3, 0.9, 31).unwrap();
        let opt = soft_value_iteration(&mdp, 0.2, 1e-12, 100_000).unwrap();
        let pi0 = TabularPolicy::random(5, 3, &mut seeded(32));
        let h2 = extended_policy_iteration(&mdp, &pi0, 2, 0.2, 1e-8, 1000).unwrap();
        assert!(sup_norm_diff(&h2.values.v, &opt.v) < 1e-7);
        let h1 = extended_policy_iteration(&mdp, &pi0, 1, 0.2, 1e-8, 1000).unwrap();
        let h3 = extended_policy_iteration(&mdp, &pi0, 3, 0.2, 1e-8, 1000).unwrap();
        assert!(sup_norm_diff(&h1.values.v, &h3.values.v) < 1e-7);
        assert!(h3.iterations <= h1.iterations);
    }

    #[test]
    fn converged_value_dominates_random_policies() {
        let mdp = random_mdp(4, 2, 0.9, 41).unwrap();
        let out = extended_policy_iteration(&mdp, &TabularPolicy::uniform(4, 2), 2, 0.2, 1e-10, 1000).unwrap();
        let mut rng = seeded(42);
        for _ in 0..50 {
            let v = soft_policy_evaluation(&mdp, &TabularPolicy::random(4, 2, &mut rng), 0.2).unwrap();
            assert!(out.values.v.iter().zip(&v.v).all(|(a, b)| a >= &(b - 1e-9)));
        }
    }

    #[test]
    fn iteration_budget_exhaustion_carries_last_iterate() {
        let mdp = random_mdp(5, 3, 0.99, 51).unwrap();
        let err = extended_policy_iteration(&mdp, &TabularPolicy::uniform(5, 3), 1, 0.2, 1e-300, 1).unwrap_err();
        match err {
            Error::NonConvergence {
                iterations, last_policy, ..
            } => {
                assert_eq!(iterations, 1);
                assert_eq!(last_policy.n_states(), 5);
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
