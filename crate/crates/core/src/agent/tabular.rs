//! Discrete variant: tabular heads, tabular critics, and an exact expected
//! gradient of the planning objective under the learned model.

use serde::{Deserialize, Serialize};

use super::hyperparams::Hyperparams;
use super::CriticLosses;
use crate::ensemble::CategoricalEnsemble;
use crate::error::{Error, Result};
use crate::mdp::TabularMDP;
use crate::nn::Adam;
use crate::soft_pi::TabularPolicy;

/// Next-state distributions and disagreement the planner rolls out with.
pub trait NextStateModel {
    fn n_states(&self) -> usize;
    fn next_distribution(&self, s: usize, a: usize) -> Vec<f64>;
    fn uncertainty(&self, s: usize, a: usize) -> Result<f64>;
}

impl NextStateModel for TabularMDP {
    fn n_states(&self) -> usize {
        TabularMDP::n_states(self)
    }

    fn next_distribution(&self, s: usize, a: usize) -> Vec<f64> {
        self.row(s, a).to_vec()
    }

    fn uncertainty(&self, _s: usize, _a: usize) -> Result<f64> {
        Ok(0.0)
    }
}

impl NextStateModel for CategoricalEnsemble {
    fn n_states(&self) -> usize {
        CategoricalEnsemble::n_states(self)
    }

    /// Uniform mixture of the members, the law of "pick a member, then sample it".
    fn next_distribution(&self, s: usize, a: usize) -> Vec<f64> {
        self.mean_prediction(s, a)
    }

    fn uncertainty(&self, s: usize, a: usize) -> Result<f64> {
        Ok(self.ovr_uncertainty(s, a)?.value)
    }
}

/// `H_max` softmax heads over logit tables; head 0 acts in the environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularStack {
    n_states: usize,
    n_actions: usize,
    logits: Vec<Vec<f64>>,
    optimizers: Vec<Adam>,
}

impl TabularStack {
    /// Zero logits: every head starts uniform.
    pub fn new(n_states: usize, n_actions: usize, heads: usize, lr: f64) -> Result<Self> {
        if heads == 0 {
            return Err(Error::param("a policy stack needs at least one head"));
        }
        let n = n_states * n_actions;
        Ok(Self {
            n_states,
            n_actions,
            logits: vec![vec![0.0; n]; heads],
            optimizers: (0..heads).map(|_| Adam::new(n, lr)).collect(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self, head: usize) -> &[f64] {
        &self.logits[head]
    }

    pub fn set_logits(&mut self, head: usize, logits: Vec<f64>) -> Result<()> {
        if logits.len() != self.n_states * self.n_actions {
            return Err(Error::param("logit table has the wrong shape"));
        }
        self.logits[head] = logits;
        Ok(())
    }

    pub fn head(&self, h: usize) -> TabularPolicy {
        TabularPolicy::softmax(self.n_states, self.n_actions, &self.logits[h], 1.0)
            .expect("finite logits give a valid policy")
    }

    pub fn deployed(&self) -> TabularPolicy {
        self.head(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularCritic {
    pub n_states: usize,
    pub n_actions: usize,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl TabularCritic {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            q: vec![0.0; n_states * n_actions],
            v: vec![0.0; n_states],
        }
    }
}

fn expected_value(p: &[f64], v: &[f64], terminal: &[bool]) -> f64 {
    p.iter()
        .zip(v)
        .zip(terminal)
        .filter(|(_, t)| !**t)
        .map(|((p, v), _)| p * v)
        .sum()
}

/// Moves `Q` toward `r + gamma E_model[V(s')]` for each `(s, a, r)` in the
/// batch, then `V` toward `E_pi[Q - alpha ln pi]` at each distinct batch state.
/// Terminal next states contribute zero value.
pub fn critic_update_tabular(
    critic: &mut TabularCritic,
    batch: &[(usize, usize, f64)],
    model: &dyn NextStateModel,
    terminal: &[bool],
    policy: &TabularPolicy,
    hp: &Hyperparams,
) -> Result<CriticLosses> {
    let na = critic.n_actions;
    let eta = hp.critic_step_size;
    let mut q_loss = 0.0;
    for &(s, a, r) in batch {
        let target = r + hp.gamma * expected_value(&model.next_distribution(s, a), &critic.v, terminal);
        let err = target - critic.q[s * na + a];
        q_loss += 0.5 * err * err;
        critic.q[s * na + a] += eta * err;
    }
    let mut seen = vec![false; critic.n_states];
    let mut v_loss = 0.0;
    let mut n_v = 0usize;
    for &(s, _, _) in batch {
        if std::mem::replace(&mut seen[s], true) {
            continue;
        }
        let target: f64 = (0..na)
            .map(|a| policy.prob(s, a) * (critic.q[s * na + a] - hp.alpha * policy.log_prob(s, a)))
            .sum();
        let err = target - critic.v[s];
        v_loss += 0.5 * err * err;
        n_v += 1;
        critic.v[s] += eta * err;
    }
    let losses = CriticLosses {
        q_loss: q_loss / batch.len().max(1) as f64,
        v_loss: v_loss / n_v.max(1) as f64,
    };
    if !(losses.q_loss.is_finite() && losses.v_loss.is_finite()) {
        return Err(Error::Training("non-finite tabular critic loss".into()));
    }
    Ok(losses)
}

/// Exact expectation of the planning objective and its gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPlanGradient {
    /// Batch mean of `J`.
    pub objective: f64,
    /// `dJ / d logits`, one table per head.
    pub grads: Vec<Vec<f64>>,
    /// Whether any probability mass reaches each head.
    pub head_reached: Vec<bool>,
    /// Expected number of accumulated steps, averaged over the batch.
    pub mean_horizon: f64,
}

/// Computes `J` for rollouts from the batch start states, averaged over the
/// batch, in closed form.
///
/// At step `t` from state `s` under action `a`, if the stop test fires on
/// `u(s, a)` the rollout pays `gamma^{t+1} E[V(s')]` and ends; otherwise it
/// collects `gamma^t (r - alpha ln pi_t - beta u)` and continues to
/// non-terminal successors, paying `gamma^H E[V(s_H)]` after the last head.
/// Reaching a terminal state ends the rollout with zero further value.
/// The forward sweep carries the discounted occupancy `D_t`, the backward
/// sweep the value-to-go `W_t`, and
/// `dJ / d pi_t(a|s) = D_t(s) (Q_t(s, a) - alpha [not stopped])`.
pub fn farsighted_gradient_tabular(
    starts: &[usize],
    stack: &TabularStack,
    model: &dyn NextStateModel,
    rewards: &[f64],
    terminal: &[bool],
    v: &[f64],
    hp: &Hyperparams,
) -> Result<TabularPlanGradient> {
    if starts.is_empty() {
        return Err(Error::param("empty batch"));
    }
    let (ns, na, h_max) = (stack.n_states, stack.n_actions, stack.horizon());
    if rewards.len() != ns * na || terminal.len() != ns || v.len() != ns || model.n_states() != ns {
        return Err(Error::param("reward, terminal, value or model size does not match the stack"));
    }
    let gamma = hp.gamma;
    let heads: Vec<TabularPolicy> = (0..h_max).map(|h| stack.head(h)).collect();
    let mut next = Vec::with_capacity(ns * na);
    let mut stop = Vec::with_capacity(ns * na);
    let mut u = Vec::with_capacity(ns * na);
    let mut ev = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let p = model.next_distribution(s, a);
            let uu = model.uncertainty(s, a)?;
            ev.push(expected_value(&p, v, terminal));
            next.push(p);
            stop.push(hp.stops(uu));
            u.push(uu);
        }
    }

    // Forward: discounted (d) and undiscounted (occ) occupancy per step.
    let mut d = vec![vec![0.0; ns]; h_max];
    let mut occ = vec![vec![0.0; ns]; h_max];
    for &s in starts {
        if s >= ns {
            return Err(Error::param(format!("start state {s} out of range")));
        }
        d[0][s] += 1.0 / starts.len() as f64;
        occ[0][s] += 1.0 / starts.len() as f64;
    }
    // Surviving mass is carried separately so that a step nobody leaves
    // contributes exactly its mass, not a rounded re-sum of occupancies.
    let mut mean_horizon = 0.0;
    let mut alive = 1.0;
    for t in 0..h_max {
        let (mut taken, mut any_stop, mut ended) = (0.0, false, 0.0);
        for s in 0..ns {
            if occ[t][s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let k = s * na + a;
                if stop[k] {
                    any_stop = true;
                    continue;
                }
                let w = heads[t].prob(s, a);
                taken += occ[t][s] * w;
                for (sn, p) in next[k].iter().enumerate() {
                    if terminal[sn] {
                        ended += occ[t][s] * w * p;
                    } else if t + 1 < h_max {
                        d[t + 1][sn] += gamma * d[t][s] * w * p;
                        occ[t + 1][sn] += occ[t][s] * w * p;
                    }
                }
            }
        }
        let stepped = if any_stop { taken } else { alive };
        mean_horizon += stepped;
        alive = if ended > 0.0 { stepped - ended } else { stepped };
    }

    // Backward: value-to-go and per-step action values.
    let mut w_next = vec![0.0; ns];
    let mut grads = vec![vec![0.0; ns * na]; h_max];
    for t in (0..h_max).rev() {
        let mut w_t = vec![0.0; ns];
        for s in 0..ns {
            let mut qs = vec![0.0; na];
            for a in 0..na {
                let k = s * na + a;
                qs[a] = if stop[k] {
                    gamma * ev[k]
                } else {
                    let cont = if t + 1 < h_max {
                        gamma * expected_value(&next[k], &w_next, terminal)
                    } else {
                        gamma * ev[k]
                    };
                    rewards[k] - hp.alpha * heads[t].log_prob(s, a) - hp.beta * u[k] + cont
                };
            }
            let pi = heads[t].row(s);
            w_t[s] = pi.iter().zip(&qs).map(|(p, q)| p * q).sum();
            if d[t][s] > 0.0 {
                let g: Vec<f64> = (0..na)
                    .map(|a| d[t][s] * (qs[a] - if stop[s * na + a] { 0.0 } else { hp.alpha }))
                    .collect();
                let mean_g: f64 = pi.iter().zip(&g).map(|(p, x)| p * x).sum();
                for a in 0..na {
                    grads[t][s * na + a] = pi[a] * (g[a] - mean_g);
                }
            }
        }
        w_next = w_t;
    }
    let objective: f64 = (0..ns).map(|s| d[0][s] * w_next[s]).sum();
    if !objective.is_finite() {
        return Err(Error::Training("non-finite tabular planning objective".into()));
    }
    Ok(TabularPlanGradient {
        objective,
        head_reached: d.iter().map(|row| row.iter().any(|x| *x > 0.0)).collect(),
        grads,
        mean_horizon,
    })
}

/// Scales every gradient so the largest entry is at most `limit` in magnitude.
/// Returns the sup norm before clipping.
pub fn clip_sup_norm(grads: &mut [&mut Vec<f64>], limit: f64) -> f64 {
    let sup = grads
        .iter()
        .flat_map(|g| g.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if sup > limit {
        let scale = limit / sup;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
    }
    sup
}

/// One ascent step on the expected objective; heads no rollout reaches are
/// left untouched.
pub fn farsighted_improvement_tabular(
    starts: &[usize],
    stack: &mut TabularStack,
    model: &dyn NextStateModel,
    rewards: &[f64],
    terminal: &[bool],
    v: &[f64],
    hp: &Hyperparams,
) -> Result<TabularPlanGradient> {
    let mut out = farsighted_gradient_tabular(starts, stack, model, rewards, terminal, v, hp)?;
    let mut refs: Vec<&mut Vec<f64>> = out.grads.iter_mut().collect();
    clip_sup_norm(&mut refs, hp.grad_clip);
    for h in 0..stack.horizon() {
        if !out.head_reached[h] {
            continue;
        }
        let ascent: Vec<f64> = out.grads[h].iter().map(|g| -g).collect();
        stack.optimizers[h].step(&mut stack.logits[h], &ascent)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;
    use crate::rng::seeded;
    use crate::soft_pi::{multi_step_objective, soft_policy_evaluation, HorizonPolicy, SoftValueTable};
    use rand::Rng;

    fn hp(h: usize) -> Hyperparams {
        Hyperparams {
            max_horizon: h,
            uncertainty_threshold: None,
            beta: 0.0,
            gamma: 0.9,
            ..Hyperparams::default()
        }
    }

    fn random_stack(ns: usize, na: usize, h: usize, seed: u64) -> TabularStack {
        let mut rng = seeded(seed);
        let mut stack = TabularStack::new(ns, na, h, 1e-2).unwrap();
        for k in 0..h {
            stack.set_logits(k, (0..ns * na).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        }
        stack
    }

    #[test]
    fn objective_matches_exact_multi_step_value() {
        let mdp = random_mdp(4, 3, 0.9, 1).unwrap();
        let stack = random_stack(4, 3, 3, 2);
        let v: Vec<f64> = (0..4).map(|s| s as f64 * 0.7 - 1.0).collect();
        let terminal = vec![false; 4];
        let hp = hp(3);
        let hpol = HorizonPolicy::new((0..3).map(|h| stack.head(h)).collect()).unwrap();
        let table = SoftValueTable {
            n_states: 4,
            n_actions: 3,
            q: vec![0.0; 12],
            v: v.clone(),
            alpha: hp.alpha,
        };
        for s in 0..4 {
            let out = farsighted_gradient_tabular(&[s], &stack, &mdp, mdp.rewards(), &terminal, &v, &hp).unwrap();
            let exact = multi_step_objective(&mdp, &hpol, &table, s, hp.alpha).unwrap();
            assert!((out.objective - exact).abs() < 1e-12);
            assert_eq!(out.mean_horizon, 3.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mdp = random_mdp(3, 2, 0.9, 3).unwrap();
        let stack = random_stack(3, 2, 2, 4);
        let v = vec![0.5, -0.2, 1.0];
        let terminal = vec![false, false, true];
        let hp = Hyperparams {
            beta: 0.3,
            ..hp(2)
        };
        let starts = [0, 1, 1];
        let out = farsighted_gradient_tabular(&starts, &stack, &mdp, mdp.rewards(), &terminal, &v, &hp).unwrap();
        let eps = 1e-6;
        for h in 0..2 {
            for k in 0..6 {
                let mut plus = stack.clone();
                let mut minus = stack.clone();
                let mut lp = stack.logits(h).to_vec();
                lp[k] += eps;
                plus.set_logits(h, lp).unwrap();
                let mut lm = stack.logits(h).to_vec();
                lm[k] -= eps;
                minus.set_logits(h, lm).unwrap();
                let jp = farsighted_gradient_tabular(&starts, &plus, &mdp, mdp.rewards(), &terminal, &v, &hp)
                    .unwrap()
                    .objective;
                let jm = farsighted_gradient_tabular(&starts, &minus, &mdp, mdp.rewards(), &terminal, &v, &hp)
                    .unwrap()
                    .objective;
                let fd = (jp - jm) / (2.0 * eps);
                let g = out.grads[h][k];
                assert!((fd - g).abs() <= 1e-7f64.max(1e-5 * fd.abs()), "head {h} entry {k}: {g} vs {fd}");
            }
        }
    }

    struct Uncertain<'a>(&'a TabularMDP);

    impl NextStateModel for Uncertain<'_> {
        fn n_states(&self) -> usize {
            self.0.n_states()
        }
        fn next_distribution(&self, s: usize, a: usize) -> Vec<f64> {
            self.0.row(s, a).to_vec()
        }
        fn uncertainty(&self, _s: usize, _a: usize) -> Result<f64> {
            Ok(1.0)
        }
    }

    #[test]
    fn immediate_stop_pays_only_the_discounted_next_value() {
        let mdp = random_mdp(3, 2, 0.9, 5).unwrap();
        let stack = random_stack(3, 2, 4, 6);
        let v = vec![1.0, 2.0, 3.0];
        let hp = Hyperparams {
            uncertainty_threshold: Some(-5.0),
            ..hp(4)
        };
        let out =
            farsighted_gradient_tabular(&[1], &stack, &Uncertain(&mdp), mdp.rewards(), &[false; 3], &v, &hp).unwrap();
        let pi = stack.head(0);
        let expected: f64 = (0..2)
            .map(|a| pi.prob(1, a) * 0.9 * mdp.row(1, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>())
            .sum();
        assert!((out.objective - expected).abs() < 1e-12);
        assert_eq!(out.mean_horizon, 0.0);
        assert_eq!(out.head_reached, vec![true, false, false, false]);
        assert!(out.grads[1..].iter().all(|g| g.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn critic_converges_to_exact_soft_evaluation() {
        let mdp = random_mdp(4, 2, 0.9, 7).unwrap();
        let pi = TabularPolicy::random(4, 2, &mut seeded(8));
        let exact = soft_policy_evaluation(&mdp, &pi, 0.2).unwrap();
        let mut critic = TabularCritic::zeros(4, 2);
        let batch: Vec<(usize, usize, f64)> =
            (0..4).flat_map(|s| (0..2).map(move |a| (s, a))).map(|(s, a)| (s, a, mdp.reward(s, a))).collect();
        let hp = hp(1);
        for _ in 0..2000 {
            critic_update_tabular(&mut critic, &batch, &mdp, &[false; 4], &pi, &hp).unwrap();
        }
        for k in 0..8 {
            assert!((critic.q[k] - exact.q[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn degenerate_target_is_the_reward() {
        let mdp = TabularMDP::new(1, 1, vec![1.0], vec![1.0], 0.5, vec![false]).unwrap();
        let mut critic = TabularCritic::zeros(1, 1);
        let hp = Hyperparams {
            gamma: 0.5,
            critic_step_size: 0.5,
            ..Hyperparams::default()
        };
        // The only successor is terminal, so the fixed point is r.
        for _ in 0..100 {
            critic_update_tabular(&mut critic, &[(0, 0, 1.0)], &mdp, &[true], &TabularPolicy::uniform(1, 1), &hp)
                .unwrap();
        }
        assert!((critic.q[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn improvement_step_increases_the_objective() {
        let mdp = random_mdp(4, 3, 0.9, 9).unwrap();
        let mut stack = random_stack(4, 3, 3, 10);
        let v = vec![0.0; 4];
        let hp = Hyperparams {
            learning_rate: 1e-2,
            ..hp(3)
        };
        let starts = [0, 1, 2, 3];
        let before = farsighted_gradient_tabular(&starts, &stack, &mdp, mdp.rewards(), &[false; 4], &v, &hp)
            .unwrap()
            .objective;
        for _ in 0..50 {
            farsighted_improvement_tabular(&starts, &mut stack, &mdp, mdp.rewards(), &[false; 4], &v, &hp).unwrap();
        }
        let after = farsighted_gradient_tabular(&starts, &stack, &mdp, mdp.rewards(), &[false; 4], &v, &hp)
            .unwrap()
            .objective;
        assert!(after > before);
    }
}
