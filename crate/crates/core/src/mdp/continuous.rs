use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ContinuousTransition;
use crate::error::{ensure_finite, Error, Result};
use crate::nn::tape::{wrap_angle, Tape, Var};
use crate::rng::Rng as StreamRng;

/// A continuous-state task the planner can differentiate through.
///
/// The reward is known to the agent, so besides stepping, an environment
/// exposes its reward as a tape expression. Coordinates flagged by
/// [`ContinuousEnv::angle_dims`] are fed to networks as `(cos, sin)` pairs and
/// their one-step differences are wrapped.
pub trait ContinuousEnv {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Actions live in the box `[-bound, bound]^action_dim`.
    fn action_bound(&self) -> f64;
    fn angle_dims(&self) -> Vec<bool>;
    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64>;
    fn state(&self) -> &[f64];
    fn step(&mut self, action: &[f64]) -> Result<ContinuousTransition>;
    fn reward(&self, state: &[f64], action: &[f64]) -> f64;
    /// `B x state_dim`, `B x action_dim` -> `B x 1`.
    fn reward_tape(&self, tape: &mut Tape, state: Var, action: Var) -> Var;
    fn is_terminal(&self, _state: &[f64]) -> bool {
        false
    }
}

/// Width of the network input produced by [`features`].
pub fn feature_dim(angle_dims: &[bool]) -> usize {
    angle_dims.iter().map(|&a| if a { 2 } else { 1 }).sum()
}

pub fn features(state: &[f64], angle_dims: &[bool]) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_dim(angle_dims));
    for (x, &is_angle) in state.iter().zip(angle_dims) {
        if is_angle {
            out.push(x.cos());
            out.push(x.sin());
        } else {
            out.push(*x);
        }
    }
    out
}

pub fn features_tape(tape: &mut Tape, state: Var, angle_dims: &[bool]) -> Var {
    if angle_dims.iter().all(|a| !a) {
        return state;
    }
    let mut parts = Vec::new();
    for (j, &is_angle) in angle_dims.iter().enumerate() {
        let col = tape.slice_cols(state, j, 1);
        if is_angle {
            parts.push(tape.cos(col));
            parts.push(tape.sin(col));
        } else {
            parts.push(col);
        }
    }
    tape.concat_cols(&parts)
}

/// `next - prev`, wrapped on angle coordinates.
pub fn state_delta(prev: &[f64], next: &[f64], angle_dims: &[bool]) -> Vec<f64> {
    prev.iter()
        .zip(next)
        .zip(angle_dims)
        .map(|((p, n), &a)| if a { wrap_angle(n - p) } else { n - p })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub gravity: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub max_episode_steps: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            gravity: 10.0,
            max_torque: 2.0,
            max_speed: 8.0,
            max_episode_steps: 200,
        }
    }
}

/// Torque-limited pendulum; angle 0 is upright.
///
/// State `(theta, theta_dot)`, action in `[-1, 1]` scaled by `max_torque`,
/// semi-implicit Euler integration, reward `-(theta^2 + 0.1 theta_dot^2 + 0.001 a^2)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    pub params: PendulumParams,
    state: Vec<f64>,
    elapsed: usize,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Self {
            params,
            state: vec![0.0, 0.0],
            elapsed: 0,
        }
    }

    pub fn set_state(&mut self, state: [f64; 2]) {
        self.state = vec![wrap_angle(state[0]), state[1]];
        self.elapsed = 0;
    }

    pub fn dynamics(&self, state: &[f64], action: f64) -> [f64; 2] {
        let p = &self.params;
        let torque = p.max_torque * action.clamp(-1.0, 1.0);
        let accel = 3.0 * p.gravity / (2.0 * p.length) * state[0].sin() + 3.0 / (p.mass * p.length * p.length) * torque;
        let speed = (state[1] + accel * p.dt).clamp(-p.max_speed, p.max_speed);
        [wrap_angle(state[0] + speed * p.dt), speed]
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new(PendulumParams::default())
    }
}

impl ContinuousEnv for Pendulum {
    fn name(&self) -> &str {
        "pendulum"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bound(&self) -> f64 {
        1.0
    }

    fn angle_dims(&self) -> Vec<bool> {
        vec![true, false]
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Vec<f64> {
        self.state = vec![rng.random_range(-PI..PI), rng.random_range(-1.0..1.0)];
        self.elapsed = 0;
        self.state.clone()
    }

    fn state(&self) -> &[f64] {
        &self.state
    }

    fn step(&mut self, action: &[f64]) -> Result<ContinuousTransition> {
        if action.len() != 1 {
            return Err(Error::param(format!("pendulum takes one action, got {}", action.len())));
        }
        ensure_finite("action", action)?;
        let a = action[0].clamp(-1.0, 1.0);
        let s = self.state.clone();
        let reward = self.reward(&s, &[a]);
        let next = self.dynamics(&s, a);
        self.state = next.to_vec();
        self.elapsed += 1;
        Ok(ContinuousTransition {
            state: s,
            action: vec![a],
            reward,
            next_state: self.state.clone(),
            terminal: false,
            truncated: self.elapsed >= self.params.max_episode_steps,
        })
    }

    fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let th = wrap_angle(state[0]);
        -(th * th + 0.1 * state[1] * state[1] + 0.001 * action[0] * action[0])
    }

    fn reward_tape(&self, tape: &mut Tape, state: Var, action: Var) -> Var {
        let th = tape.slice_cols(state, 0, 1);
        let th = tape.wrap_angle(th);
        let th2 = tape.square(th);
        let thd = tape.slice_cols(state, 1, 1);
        let thd2 = tape.square(thd);
        let a2 = tape.square(action);
        let a2 = tape.scale(a2, 0.001);
        let thd2 = tape.scale(thd2, 0.1);
        let cost = tape.add(th2, thd2);
        let cost = tape.add(cost, a2);
        tape.scale(cost, -1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    /// Written out independently of `Pendulum::dynamics`.
    fn reference_step(th: f64, thd: f64, a: f64) -> (f64, f64) {
        let (g, m, l, dt) = (10.0, 1.0, 1.0, 0.05);
        let u = 2.0 * a;
        let mut new_thd = thd + (3.0 * g / (2.0 * l) * th.sin() + 3.0 / (m * l * l) * u) * dt;
        new_thd = new_thd.clamp(-8.0, 8.0);
        let mut new_th = th + new_thd * dt;
        while new_th >= PI {
            new_th -= 2.0 * PI;
        }
        while new_th < -PI {
            new_th += 2.0 * PI;
        }
        (new_th, new_thd)
    }

    #[test]
    fn upright_rest_is_a_fixed_point() {
        let mut env = Pendulum::default();
        env.set_state([0.0, 0.0]);
        let t = env.step(&[0.0]).unwrap();
        assert_eq!(t.reward, 0.0);
        assert_eq!(t.next_state, vec![0.0, 0.0]);
    }

    #[test]
    fn full_torque_at_rest_costs_only_the_action() {
        let mut env = Pendulum::default();
        env.set_state([0.0, 0.0]);
        let t = env.step(&[1.0]).unwrap();
        assert!((t.reward + 0.001).abs() < 1e-15);
    }

    #[test]
    fn matches_reference_integrator() {
        let mut env = Pendulum::default();
        for (th, thd, a) in [(PI / 2.0, 0.0, 0.0), (3.0, 7.9, 1.0), (-3.1, -7.5, -1.0), (0.4, 2.0, 0.3)] {
            env.set_state([th, thd]);
            let t = env.step(&[a]).unwrap();
            let (eth, ethd) = reference_step(th, thd, a);
            assert!((t.next_state[0] - eth).abs() < 1e-12, "{th} {thd} {a}");
            assert!((t.next_state[1] - ethd).abs() < 1e-12);
        }
    }

    #[test]
    fn actions_are_clamped_and_validated() {
        let mut env = Pendulum::default();
        env.set_state([0.2, 0.0]);
        let t = env.step(&[5.0]).unwrap();
        assert_eq!(t.action, vec![1.0]);
        assert!(env.step(&[f64::NAN]).is_err());
        assert!(env.step(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn episodes_truncate_at_the_time_limit() {
        let mut env = Pendulum::default();
        let mut rng = seeded(3);
        env.reset(&mut rng);
        let flags: Vec<bool> = (0..200).map(|_| env.step(&[0.1]).unwrap().truncated).collect();
        assert!(flags[..199].iter().all(|f| !f) && flags[199]);
    }

    #[test]
    fn reward_is_nonpositive_and_state_stays_finite() {
        let mut env = Pendulum::default();
        let mut rng = seeded(5);
        env.reset(&mut rng);
        for k in 0..1000 {
            let a = ((k as f64) * 0.37).sin();
            let t = env.step(&[a]).unwrap();
            assert!(t.reward <= 0.0);
            assert!(t.next_state.iter().all(|x| x.is_finite()));
            assert!(t.next_state[0] >= -PI && t.next_state[0] < PI);
        }
    }

    #[test]
    fn tape_reward_matches_direct_reward() {
        let env = Pendulum::default();
        let states = [0.3, -1.0, 4.0, 2.0];
        let actions = [0.5, -0.9];
        let mut tape = Tape::new();
        let s = tape.leaf(2, 2, states.to_vec());
        let a = tape.leaf(2, 1, actions.to_vec());
        let r = env.reward_tape(&mut tape, s, a);
        for row in 0..2 {
            let direct = env.reward(&states[2 * row..2 * row + 2], &actions[row..row + 1]);
            assert!((tape.value(r)[row] - direct).abs() < 1e-12);
        }
    }
}
