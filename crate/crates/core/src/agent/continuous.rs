//! Continuous variant: squashed-Gaussian heads, neural critics, and the
//! reparameterized planning gradient through the learned ensemble.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::hyperparams::Hyperparams;
use super::objective::{RolloutRecord, StepRecord, StopReason};
use super::CriticLosses;
use crate::ensemble::GaussianEnsemble;
use crate::error::{Error, Result};
use crate::mdp::{feature_dim, features, features_tape, ContinuousEnv, ContinuousTransition};
use crate::nn::{Adam, Mlp, SquashedGaussianPolicy, Tape, Var};

fn sizes(n_in: usize, hidden: &[usize], n_out: usize) -> Vec<usize> {
    let mut s = vec![n_in];
    s.extend_from_slice(hidden);
    s.push(n_out);
    s
}

/// Scales the gradients so the largest entry is at most `limit` in magnitude.
fn clip_global(grads: &mut [&mut Vec<f64>], limit: f64) {
    let sup = grads.iter().flat_map(|g| g.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    if sup > limit {
        let k = limit / sup;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= k);
        }
    }
}

/// `H_max` policy heads; head 0 acts in the environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuousStack {
    pub heads: Vec<SquashedGaussianPolicy>,
    optimizers: Vec<Adam>,
    angle_dims: Vec<bool>,
}

impl ContinuousStack {
    pub fn new<R: Rng + ?Sized>(
        angle_dims: &[bool],
        action_dim: usize,
        action_bound: f64,
        hp: &Hyperparams,
        rng: &mut R,
    ) -> Result<Self> {
        if hp.max_horizon == 0 {
            return Err(Error::param("a policy stack needs at least one head"));
        }
        let n_in = feature_dim(angle_dims);
        let heads = (0..hp.max_horizon)
            .map(|_| SquashedGaussianPolicy::new(n_in, &hp.hidden, action_dim, action_bound, rng))
            .collect::<Result<Vec<_>>>()?;
        let optimizers = heads.iter().map(|h| Adam::new(h.net.params().len(), hp.learning_rate)).collect();
        Ok(Self {
            heads,
            optimizers,
            angle_dims: angle_dims.to_vec(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.heads.len()
    }

    pub fn angle_dims(&self) -> &[bool] {
        &self.angle_dims
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let noise: Vec<f64> = (0..self.heads[0].action_dim()).map(|_| rng.sample(StandardNormal)).collect();
        Ok(self.heads[0].sample_and_logprob(&features(state, &self.angle_dims), &noise)?.0)
    }

    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.heads[0].mean_action(&features(state, &self.angle_dims))
    }
}

/// Twin `Q` networks over `(features, action)`, a `V` network over features,
/// and a slowly tracking copy of `V` used for every bootstrap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuousCritic {
    pub q: Vec<Mlp>,
    pub v: Mlp,
    pub v_target: Mlp,
    q_opt: Vec<Adam>,
    v_opt: Adam,
    angle_dims: Vec<bool>,
}

impl ContinuousCritic {
    pub fn new<R: Rng + ?Sized>(angle_dims: &[bool], action_dim: usize, hp: &Hyperparams, rng: &mut R) -> Result<Self> {
        let f = feature_dim(angle_dims);
        let n_q = if hp.twin_q { 2 } else { 1 };
        let q = (0..n_q)
            .map(|_| Mlp::new(&sizes(f + action_dim, &hp.hidden, 1), rng))
            .collect::<Result<Vec<_>>>()?;
        let v = Mlp::new(&sizes(f, &hp.hidden, 1), rng)?;
        Ok(Self {
            q_opt: q.iter().map(|n| Adam::new(n.params().len(), hp.learning_rate)).collect(),
            v_opt: Adam::new(v.params().len(), hp.learning_rate),
            v_target: v.clone(),
            q,
            v,
            angle_dims: angle_dims.to_vec(),
        })
    }

    /// `V_target` at one state.
    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.v_target.forward(&features(state, &self.angle_dims))?[0])
    }

    fn q_input(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = features(state, &self.angle_dims);
        x.extend_from_slice(action);
        x
    }
}

/// One regression step of `net` toward `targets`; returns the loss before the step.
fn regress(net: &mut Mlp, opt: &mut Adam, inputs: Vec<f64>, targets: Vec<f64>, clip: f64) -> Result<f64> {
    let rows = targets.len();
    let mut tape = Tape::new();
    let p = net.param_leaf(&mut tape);
    let x = tape.constant(rows, inputs.len() / rows, inputs);
    let y = net.forward_tape(&mut tape, p, x);
    let t = tape.constant(rows, 1, targets);
    let e = tape.sub(y, t);
    let e2 = tape.square(e);
    let m = tape.mean(e2);
    let loss = tape.scale(m, 0.5);
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::Training("non-finite critic loss".into()));
    }
    let mut g = tape.backward(loss)?.wrt(p)?;
    clip_global(&mut [&mut g], clip);
    opt.step(net.params_mut(), &g)?;
    Ok(value)
}

/// Fits `Q` to `r + gamma V_target(s')` (zero past terminal states, while
/// time-limit truncations still bootstrap), fits `V` to
/// `min_i Q_i(s, a~) - alpha ln pi(a~|s)` with `a~` drawn from head 0, then
/// moves `V_target` toward `V` by `tau`.
pub fn critic_update_continuous<R: Rng + ?Sized>(
    critic: &mut ContinuousCritic,
    batch: &[&ContinuousTransition],
    stack: &ContinuousStack,
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<CriticLosses> {
    if batch.is_empty() {
        return Err(Error::param("empty critic batch"));
    }
    let mut q_in = Vec::new();
    let mut q_target = Vec::with_capacity(batch.len());
    for t in batch {
        q_in.extend(critic.q_input(&t.state, &t.action));
        let boot = if t.terminal { 0.0 } else { critic.value(&t.next_state)? };
        q_target.push(t.reward + hp.gamma * boot);
    }
    let mut q_loss = 0.0;
    for (net, opt) in critic.q.iter_mut().zip(critic.q_opt.iter_mut()) {
        q_loss += regress(net, opt, q_in.clone(), q_target.clone(), hp.grad_clip)?;
    }
    q_loss /= critic.q.len() as f64;

    let mut v_in = Vec::new();
    let mut v_target = Vec::with_capacity(batch.len());
    let head = &stack.heads[0];
    for t in batch {
        let f = features(&t.state, &critic.angle_dims);
        let noise: Vec<f64> = (0..head.action_dim()).map(|_| rng.sample(StandardNormal)).collect();
        let (a, logp) = head.sample_and_logprob(&f, &noise)?;
        let x = critic.q_input(&t.state, &a);
        let q_min = critic
            .q
            .iter()
            .map(|n| n.forward(&x).map(|o| o[0]))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        v_in.extend(f);
        v_target.push(q_min - hp.alpha * logp);
    }
    let v_loss = regress(&mut critic.v, &mut critic.v_opt, v_in, v_target, hp.grad_clip)?;
    let tau = hp.tau;
    let src = critic.v.params().to_vec();
    for (t, s) in critic.v_target.params_mut().iter_mut().zip(src) {
        *t = tau * s + (1.0 - tau) * *t;
    }
    Ok(CriticLosses { q_loss, v_loss })
}

/// Exogenous randomness of one batch of planned rollouts, drawn up front so
/// the objective is a deterministic function of the policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutNoise {
    /// `[t][row * action_dim + j]`
    pub policy: Vec<Vec<f64>>,
    /// `[t][row * state_dim + j]`
    pub model: Vec<Vec<f64>>,
    /// `[t][row]` ensemble member used at step `t`.
    pub member: Vec<Vec<usize>>,
}

impl RolloutNoise {
    pub fn draw<R: Rng + ?Sized>(
        rng: &mut R,
        horizon: usize,
        rows: usize,
        action_dim: usize,
        state_dim: usize,
        k: usize,
    ) -> Self {
        let mut normals = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let policy = (0..horizon).map(|_| normals(rows * action_dim)).collect();
        let model = (0..horizon).map(|_| normals(rows * state_dim)).collect();
        let member = (0..horizon).map(|_| (0..rows).map(|_| rng.random_range(0..k)).collect()).collect();
        Self { policy, model, member }
    }
}

/// Batch objective and per-head gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPlanGradient {
    /// Mean objective over the start states.
    pub objective: f64,
    /// `None` for heads no rollout reached.
    pub grads: Vec<Option<Vec<f64>>>,
    pub records: Vec<RolloutRecord>,
}

impl ContinuousPlanGradient {
    pub fn mean_horizon(&self) -> f64 {
        self.records.iter().map(|r| r.achieved_horizon as f64).sum::<f64>() / self.records.len().max(1) as f64
    }
}

fn gather<T: Copy>(flat: &[T], width: usize, rows: &[usize]) -> Vec<T> {
    rows.iter().flat_map(|&r| flat[r * width..(r + 1) * width].iter().copied()).collect()
}

struct Pending {
    terms: Vec<f64>,
    steps: Vec<StepRecord>,
    done: Option<(StopReason, f64)>,
}

/// Rolls every start state through the ensemble under the head stack and
/// differentiates the mean objective with respect to each head.
///
/// At step `t` a row whose disagreement passes the stop test pays
/// `gamma^{t+1} V(s_{t+1})` in place of its reward and ends. Otherwise it
/// collects `gamma^t (r - alpha ln pi_t - beta u_t)`; it ends at a terminal
/// state with zero value, or after the last head with `gamma^H V(s_H)`.
/// Model and critic weights are held fixed.
pub fn farsighted_gradient_continuous(
    starts: &[Vec<f64>],
    stack: &ContinuousStack,
    model: &GaussianEnsemble,
    env: &dyn ContinuousEnv,
    critic: &ContinuousCritic,
    hp: &Hyperparams,
    noise: &RolloutNoise,
) -> Result<ContinuousPlanGradient> {
    let b = starts.len();
    if b == 0 {
        return Err(Error::param("empty batch"));
    }
    let (d, m, h_max) = (model.state_dim(), model.action_dim(), stack.horizon());
    if noise.policy.len() < h_max || noise.policy.iter().any(|p| p.len() != b * m) {
        return Err(Error::param("rollout noise does not match the batch"));
    }
    let mut tape = Tape::new();
    let model_params = model.param_constants(&mut tape);
    let v_params = critic.v_target.param_constant(&mut tape);
    let mut head_params: Vec<Option<Var>> = vec![None; h_max];
    let angle = stack.angle_dims.clone();

    let flat: Vec<f64> = starts.iter().flatten().copied().collect();
    if flat.len() != b * d {
        return Err(Error::param("start states do not match the model width"));
    }
    let mut state = tape.constant(b, d, flat);
    let mut active: Vec<usize> = (0..b).collect();
    let mut pending: Vec<Pending> = (0..b)
        .map(|_| Pending {
            terms: Vec::new(),
            steps: Vec::new(),
            done: None,
        })
        .collect();
    let mut total: Option<Var> = None;
    let inv_b = 1.0 / b as f64;

    for t in 0..h_max {
        if active.is_empty() {
            break;
        }
        let n = active.len();
        let params = *head_params[t].get_or_insert_with(|| stack.heads[t].net.param_leaf(&mut tape));
        let feat = features_tape(&mut tape, state, &angle);
        let (action, logp) = stack.heads[t].sample_tape(&mut tape, params, feat, &gather(&noise.policy[t], m, &active));
        let reward = env.reward_tape(&mut tape, state, action);
        let choice = gather(&noise.member[t], 1, &active);
        let step = model.step_tape(&mut tape, &model_params, state, action, &choice, &gather(&noise.model[t], d, &active));
        let next_feat = features_tape(&mut tape, step.next_state, &angle);
        let v_next = critic.v_target.forward_tape(&mut tape, v_params, next_feat);

        let a_l = tape.scale(logp, -hp.alpha);
        let b_u = tape.scale(step.uncertainty, -hp.beta);
        let reg = tape.add(reward, a_l);
        let reg = tape.add(reg, b_u);

        let disc = hp.gamma.powi(t as i32);
        let mut c_reg = vec![0.0; n];
        let mut c_boot = vec![0.0; n];
        let mut keep = Vec::new();
        let last = t + 1 == h_max;
        for (local, &row) in active.iter().enumerate() {
            let u = tape.value(step.uncertainty)[local];
            let next = &tape.value(step.next_state)[local * d..(local + 1) * d];
            let terminal = env.is_terminal(next);
            let v = tape.value(v_next)[local];
            let r = tape.value(reward)[local];
            let lp = tape.value(logp)[local];
            let p = &mut pending[row];
            p.steps.push(StepRecord {
                action: tape.value(action)[local * m..(local + 1) * m].to_vec(),
                reward: r,
                log_prob: lp,
                uncertainty: u,
            });
            if hp.stops(u) {
                if !terminal {
                    c_boot[local] = disc * hp.gamma * inv_b;
                }
                p.terms.push(disc * hp.gamma * if terminal { 0.0 } else { v });
                p.done = Some((StopReason::Threshold, if terminal { 0.0 } else { v }));
                continue;
            }
            c_reg[local] = disc * inv_b;
            p.terms.push(disc * (r - hp.alpha * lp - hp.beta * u));
            if terminal {
                p.done = Some((StopReason::Terminal, 0.0));
            } else if last {
                c_boot[local] = disc * hp.gamma * inv_b;
                p.terms.push(disc * hp.gamma * v);
                p.done = Some((StopReason::MaxHorizon, v));
            } else {
                keep.push(local);
            }
        }
        let reg_w = tape.mul_const(reg, c_reg);
        let boot_w = tape.mul_const(v_next, c_boot);
        let part = tape.add(reg_w, boot_w);
        let part = tape.sum(part);
        total = Some(match total {
            Some(acc) => tape.add(acc, part),
            None => part,
        });
        state = tape.select_rows(step.next_state, &keep);
        active = keep.iter().map(|&l| active[l]).collect();
    }

    let total = total.expect("at least one step is simulated");
    let objective = tape.scalar(total);
    let records: Vec<RolloutRecord> = pending
        .into_iter()
        .zip(starts)
        .map(|(p, s)| {
            let (stop, bootstrap_value) = p.done.expect("every rollout ends");
            let achieved_horizon = match stop {
                StopReason::Threshold => p.steps.len() - 1,
                _ => p.steps.len(),
            };
            RolloutRecord {
                start_state: s.clone(),
                achieved_horizon,
                objective: p.terms.iter().sum(),
                steps: p.steps,
                bootstrap_value,
                stop,
            }
        })
        .collect();
    if !objective.is_finite() {
        let bad = records
            .iter()
            .find(|r| !r.objective.is_finite())
            .map(|r| format!("{:?}", r.start_state))
            .unwrap_or_else(|| "unknown".into());
        return Err(Error::Training(format!("non-finite planning objective from start state {bad}")));
    }
    let g = tape.backward(total)?;
    let grads = head_params
        .iter()
        .map(|p| p.map(|v| g.wrt(v)).transpose())
        .collect::<Result<Vec<_>>>()?;
    Ok(ContinuousPlanGradient {
        objective,
        grads,
        records,
    })
}

/// One ascent step on the sampled objective for every reached head, after
/// clipping the combined gradient to `grad_clip` in sup norm.
pub fn farsighted_improvement_continuous(
    starts: &[Vec<f64>],
    stack: &mut ContinuousStack,
    model: &GaussianEnsemble,
    env: &dyn ContinuousEnv,
    critic: &ContinuousCritic,
    hp: &Hyperparams,
    noise: &RolloutNoise,
) -> Result<ContinuousPlanGradient> {
    let mut out = farsighted_gradient_continuous(starts, stack, model, env, critic, hp, noise)?;
    let mut refs: Vec<&mut Vec<f64>> = out.grads.iter_mut().flatten().collect();
    clip_global(&mut refs, hp.grad_clip);
    for (h, g) in out.grads.iter().enumerate() {
        if let Some(g) = g {
            let ascent: Vec<f64> = g.iter().map(|x| -x).collect();
            stack.optimizers[h].step(stack.heads[h].net.params_mut(), &ascent)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffer::TransitionBuffer;
    use crate::ensemble::GaussianTrainer;
    use crate::ensemble::GaussianConfig;
    use crate::mdp::Pendulum;
    use crate::rng::seeded;

    fn tiny_hp(h: usize, threshold: Option<f64>) -> Hyperparams {
        Hyperparams {
            max_horizon: h,
            uncertainty_threshold: threshold,
            hidden: vec![8],
            model_hidden: vec![8],
            ensemble_size: 3,
            beta: 0.5,
            ..Hyperparams::default()
        }
    }

    fn fitted_model(seed: u64) -> GaussianEnsemble {
        let mut env = Pendulum::default();
        let mut rng = seeded(seed);
        let mut buffer = TransitionBuffer::new(1000).unwrap();
        env.reset(&mut rng);
        for _ in 0..200 {
            let a = vec![rng.random_range(-1.0..1.0)];
            buffer.push(env.step(&a).unwrap());
        }
        let config = GaussianConfig {
            k: 3,
            hidden: vec![8],
            epochs: 3,
            batch_size: 32,
            ..GaussianConfig::default()
        };
        let mut trainer = GaussianTrainer::new(2, 1, &[true, false], config, &mut rng).unwrap();
        trainer.fit(&buffer, &mut rng).unwrap();
        trainer.ensemble
    }

    fn setup(h: usize, threshold: Option<f64>) -> (Hyperparams, ContinuousStack, ContinuousCritic, GaussianEnsemble) {
        let hp = tiny_hp(h, threshold);
        let mut rng = seeded(11);
        let stack = ContinuousStack::new(&[true, false], 1, 1.0, &hp, &mut rng).unwrap();
        let critic = ContinuousCritic::new(&[true, false], 1, &hp, &mut rng).unwrap();
        (hp, stack, critic, fitted_model(12))
    }

    fn starts() -> Vec<Vec<f64>> {
        vec![vec![0.3, -0.2], vec![2.9, 0.5], vec![-1.0, 1.0]]
    }

    #[test]
    fn records_reproduce_the_objective() {
        let (hp, stack, critic, model) = setup(4, None);
        let noise = RolloutNoise::draw(&mut seeded(1), 4, 3, 1, 2, 3);
        let out = farsighted_gradient_continuous(&starts(), &stack, &model, &Pendulum::default(), &critic, &hp, &noise)
            .unwrap();
        let mean: f64 = out.records.iter().map(|r| r.objective).sum::<f64>() / 3.0;
        assert!((mean - out.objective).abs() < 1e-10);
        for r in &out.records {
            assert_eq!(r.stop, StopReason::MaxHorizon);
            assert_eq!(r.achieved_horizon, 4);
            assert!((r.recompute_objective(hp.gamma, hp.alpha, hp.beta) - r.objective).abs() < 1e-10);
        }
        assert!(out.grads.iter().all(|g| g.is_some()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (hp, stack, critic, model) = setup(3, None);
        let noise = RolloutNoise::draw(&mut seeded(2), 3, 3, 1, 2, 3);
        let env = Pendulum::default();
        let out = farsighted_gradient_continuous(&starts(), &stack, &model, &env, &critic, &hp, &noise).unwrap();
        let eps = 1e-6;
        for h in 0..3 {
            let g = out.grads[h].as_ref().unwrap();
            for k in [0, 3, g.len() - 1] {
                let mut plus = stack.clone();
                plus.heads[h].net.params_mut()[k] += eps;
                let mut minus = stack.clone();
                minus.heads[h].net.params_mut()[k] -= eps;
                let jp = farsighted_gradient_continuous(&starts(), &plus, &model, &env, &critic, &hp, &noise)
                    .unwrap()
                    .objective;
                let jm = farsighted_gradient_continuous(&starts(), &minus, &model, &env, &critic, &hp, &noise)
                    .unwrap()
                    .objective;
                let fd = (jp - jm) / (2.0 * eps);
                assert!((fd - g[k]).abs() <= 1e-6 + 1e-4 * fd.abs(), "head {h} param {k}: {} vs {fd}", g[k]);
            }
        }
    }

    #[test]
    fn threshold_stop_bootstraps_from_the_next_state() {
        // ln u >= -1e9 holds for any positive disagreement.
        let (hp, stack, critic, model) = setup(5, Some(-1e9));
        let noise = RolloutNoise::draw(&mut seeded(3), 5, 3, 1, 2, 3);
        let out = farsighted_gradient_continuous(&starts(), &stack, &model, &Pendulum::default(), &critic, &hp, &noise)
            .unwrap();
        for r in &out.records {
            assert_eq!(r.stop, StopReason::Threshold);
            assert_eq!(r.achieved_horizon, 0);
            assert_eq!(r.steps.len(), 1);
            assert!((r.objective - hp.gamma * r.bootstrap_value).abs() < 1e-12);
        }
        assert!(out.grads[0].is_some());
        assert!(out.grads[1..].iter().all(|g| g.is_none()));
    }

    #[test]
    fn improvement_raises_the_sampled_objective() {
        let (mut hp, _, critic, model) = setup(2, None);
        hp.learning_rate = 1e-2;
        let mut stack = ContinuousStack::new(&[true, false], 1, 1.0, &hp, &mut seeded(11)).unwrap();
        let noise = RolloutNoise::draw(&mut seeded(4), 2, 3, 1, 2, 3);
        let env = Pendulum::default();
        let before = farsighted_gradient_continuous(&starts(), &stack, &model, &env, &critic, &hp, &noise)
            .unwrap()
            .objective;
        for _ in 0..30 {
            farsighted_improvement_continuous(&starts(), &mut stack, &model, &env, &critic, &hp, &noise).unwrap();
        }
        let after = farsighted_gradient_continuous(&starts(), &stack, &model, &env, &critic, &hp, &noise)
            .unwrap()
            .objective;
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn unit_tau_copies_the_online_value() {
        let hp = Hyperparams {
            hidden: vec![6],
            tau: 1.0,
            ..Hyperparams::default()
        };
        let mut rng = seeded(6);
        let stack = ContinuousStack::new(&[true, false], 1, 1.0, &hp, &mut rng).unwrap();
        let mut critic = ContinuousCritic::new(&[true, false], 1, &hp, &mut rng).unwrap();
        let data = [ContinuousTransition {
            state: vec![0.4, -0.2],
            action: vec![0.3],
            reward: -1.0,
            next_state: vec![0.5, 0.1],
            terminal: false,
            truncated: false,
        }];
        let batch: Vec<&ContinuousTransition> = data.iter().collect();
        let before = critic.v_target.clone();
        critic_update_continuous(&mut critic, &batch, &stack, &hp, &mut rng).unwrap();
        assert_ne!(critic.v_target, before);
        assert_eq!(critic.v_target, critic.v);
    }

    #[test]
    fn critic_fits_a_constant_reward() {
        let hp = Hyperparams {
            hidden: vec![8],
            learning_rate: 1e-2,
            gamma: 0.5,
            tau: 1.0,
            alpha: 0.0,
            ..Hyperparams::default()
        };
        let mut rng = seeded(5);
        let stack = ContinuousStack::new(&[true, false], 1, 1.0, &hp, &mut rng).unwrap();
        let mut critic = ContinuousCritic::new(&[true, false], 1, &hp, &mut rng).unwrap();
        let data: Vec<ContinuousTransition> = (0..32)
            .map(|i| ContinuousTransition {
                state: vec![i as f64 * 0.1, 0.0],
                action: vec![0.0],
                reward: 1.0,
                next_state: vec![i as f64 * 0.1, 0.0],
                terminal: false,
                truncated: false,
            })
            .collect();
        let batch: Vec<&ContinuousTransition> = data.iter().collect();
        for _ in 0..1500 {
            critic_update_continuous(&mut critic, &batch, &stack, &hp, &mut rng).unwrap();
        }
        // Fixed point V = Q = 1 / (1 - gamma).
        assert!((critic.value(&[0.5, 0.0]).unwrap() - 2.0).abs() < 0.1);
    }
}
