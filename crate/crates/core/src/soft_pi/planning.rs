use serde::{Deserialize, Serialize};

use super::evaluation::SoftValueTable;
use super::policy::{HorizonPolicy, TabularPolicy};
use crate::error::{ensure_finite, Error, Result};
use crate::mdp::TabularMDP;
use crate::nn::log_sum_exp;

/// Outcome of maximizing the `H`-step objective from every start state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningResult {
    pub policy: HorizonPolicy,
    /// `J^H(s)` at the maximizer.
    pub objective: Vec<f64>,
    /// The distilled slice, `policy.step(0)`.
    pub first_step: TabularPolicy,
}

fn check_values(values: &SoftValueTable, mdp: &TabularMDP) -> Result<()> {
    if values.v.len() != mdp.n_states() || values.q.len() != mdp.n_states() * mdp.n_actions() {
        return Err(Error::param("value table shape does not match the MDP"));
    }
    ensure_finite("v", &values.v)?;
    ensure_finite("q", &values.q)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("alpha {alpha} must be positive and finite")))
    }
}

/// Closed-form maximizer of `E_pi[Q(s,a) - alpha ln pi(a|s)]`: a softmax of `Q / alpha`.
pub fn one_step_improvement(values: &SoftValueTable) -> Result<TabularPolicy> {
    ensure_finite("q", &values.q)?;
    check_alpha(values.alpha)?;
    TabularPolicy::softmax(values.n_states, values.n_actions, &values.q, values.alpha)
}

/// Exact `H`-step objective from `state` under the true dynamics.
///
/// The discounted entropy-augmented rewards of the `H` planned steps are
/// accumulated by propagating the state distribution forward, then the old
/// policy's value is paid at step `H`.
pub fn multi_step_objective(
    mdp: &TabularMDP,
    hp: &HorizonPolicy,
    v_old: &SoftValueTable,
    state: usize,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_values(v_old, mdp)?;
    if state >= mdp.n_states() {
        return Err(Error::param(format!("state {state} out of range")));
    }
    hp.step(0).check_against(mdp)?;
    let (ns, na, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut dist = vec![0.0; ns];
    dist[state] = 1.0;
    let mut total = 0.0;
    let mut discount = 1.0;
    for pi in hp.steps() {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if dist[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = dist[s] * pi.prob(s, a);
                total += discount * w * (mdp.reward(s, a) - alpha * pi.log_prob(s, a));
                for (sn, p) in mdp.row(s, a).iter().enumerate() {
                    next[sn] += w * p;
                }
            }
        }
        dist = next;
        discount *= gamma;
    }
    total += discount * dist.iter().zip(&v_old.v).map(|(d, v)| d * v).sum::<f64>();
    Ok(total)
}

/// Maximizes the `H`-step objective for all start states by backward soft
/// induction from `V_H = v_old`.
pub fn solve_multi_step(mdp: &TabularMDP, v_old: &SoftValueTable, horizon: usize, alpha: f64) -> Result<PlanningResult> {
    check_alpha(alpha)?;
    check_values(v_old, mdp)?;
    if horizon == 0 {
        return Err(Error::param("horizon must be at least 1"));
    }
    let (ns, na, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut v_next = v_old.v.clone();
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut q = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let ev: f64 = mdp.row(s, a).iter().zip(&v_next).map(|(p, v)| p * v).sum();
                q[s * na + a] = mdp.reward(s, a) + gamma * ev;
            }
        }
        steps.push(TabularPolicy::softmax(ns, na, &q, alpha)?);
        v_next = q
            .chunks(na)
            .map(|row| {
                let scaled: Vec<f64> = row.iter().map(|x| x / alpha).collect();
                alpha * log_sum_exp(&scaled)
            })
            .collect();
    }
    steps.reverse();
    let first_step = steps[0].clone();
    Ok(PlanningResult {
        policy: HorizonPolicy::new(steps)?,
        objective: v_next,
        first_step,
    })
}
