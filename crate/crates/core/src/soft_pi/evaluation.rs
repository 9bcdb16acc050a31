use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::policy::TabularPolicy;
use crate::error::{Error, Result};
use crate::mdp::TabularMDP;

/// Soft action values and state values of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftValueTable {
    pub n_states: usize,
    pub n_actions: usize,
    /// `S x A`, row-major.
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: f64,
}

impl SoftValueTable {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Solves `(I - gamma P_pi) V = r_pi` where `r_pi` carries an entropy bonus of weight `alpha`.
fn linear_evaluate(mdp: &TabularMDP, policy: &TabularPolicy, alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    policy.check_against(mdp)?;
    let (ns, na, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut a_mat = DMatrix::<f64>::identity(ns, ns);
    let mut b = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        for a in 0..na {
            let pa = policy.prob(s, a);
            b[s] += pa * (mdp.reward(s, a) - alpha * policy.log_prob(s, a));
            for (sn, p) in mdp.row(s, a).iter().enumerate() {
                a_mat[(s, sn)] -= gamma * pa * p;
            }
        }
    }
    let lu = a_mat.clone().lu();
    let mut v = lu.solve(&b).ok_or_else(|| Error::param("policy evaluation system is singular"))?;
    // One round of iterative refinement tightens the residual on ill-conditioned (gamma near 1) systems.
    let r = &b - &a_mat * &v;
    if let Some(dv) = lu.solve(&r) {
        v += dv;
    }
    let v: Vec<f64> = v.iter().copied().collect();
    let mut q = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let ev: f64 = mdp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
            q[s * na + a] = mdp.reward(s, a) + gamma * ev;
        }
    }
    Ok((v, q))
}

/// Exact fixed point of the soft Bellman backup for `policy`.
pub fn soft_policy_evaluation(mdp: &TabularMDP, policy: &TabularPolicy, alpha: f64) -> Result<SoftValueTable> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha {alpha} must be positive and finite")));
    }
    let (v, q) = linear_evaluate(mdp, policy, alpha)?;
    Ok(SoftValueTable {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        q,
        v,
        alpha,
    })
}

/// Plain discounted reward of `policy` (no entropy term), per start state.
pub fn reward_return(mdp: &TabularMDP, policy: &TabularPolicy) -> Result<Vec<f64>> {
    Ok(linear_evaluate(mdp, policy, 0.0)?.0)
}

/// Sup-norm residual of `V = E_pi[Q - alpha ln pi]` and `Q = r + gamma P V`.
pub fn bellman_residual(mdp: &TabularMDP, policy: &TabularPolicy, values: &SoftValueTable) -> f64 {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut worst: f64 = 0.0;
    for s in 0..ns {
        let mut v = 0.0;
        for a in 0..na {
            let ev: f64 = mdp.row(s, a).iter().zip(&values.v).map(|(p, x)| p * x).sum();
            let q = mdp.reward(s, a) + mdp.gamma() * ev;
            worst = worst.max((q - values.q(s, a)).abs());
            v += policy.prob(s, a) * (values.q(s, a) - values.alpha * policy.log_prob(s, a));
        }
        worst = worst.max((v - values.v[s]).abs());
    }
    worst
}
