use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::TabularTransition;
use crate::error::{ensure_finite, Error, Result};
use crate::rng::{seeded, Rng as StreamRng};

/// Finite MDP with an explicit `S x A x S` transition tensor.
///
/// Terminal states are absorbing: they self-loop with zero reward, so every
/// infinite discounted sum is well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMDP {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
}

impl TabularMDP {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::param("an MDP needs at least one state and one action"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::param(format!("gamma {gamma} must lie strictly inside (0, 1)")));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::param("transition tensor has the wrong size"));
        }
        if reward.len() != n_states * n_actions || terminal.len() != n_states {
            return Err(Error::param("reward table or terminal mask has the wrong size"));
        }
        ensure_finite("reward", &reward)?;
        for (row_idx, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::param(format!("transition row {row_idx} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::param(format!("transition row {row_idx} sums to {total}")));
            }
        }
        for s in (0..n_states).filter(|&s| terminal[s]) {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                if row[s] != 1.0 || reward[s * n_actions + a] != 0.0 {
                    return Err(Error::param(format!("terminal state {s} must self-loop with zero reward")));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            terminal,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            gamma,
            self.terminal.clone(),
        )
    }

    /// `p(. | s, a)`
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let off = (s * self.n_actions + a) * self.n_states;
        &self.transition[off..off + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn max_reward(&self) -> f64 {
        self.reward.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(s, a), rng)
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Round-off can leave `acc` a hair below 1; fall back to the last supported entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Draws a point of the probability simplex from a symmetric Dirichlet(1).
pub(crate) fn dirichlet_row<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = row.iter().sum();
    for p in &mut row {
        *p /= total;
    }
    row
}

/// Random MDP: Dirichlet(1) transition rows, rewards uniform in `[0, 1]`.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> Result<TabularMDP> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::param("an MDP needs at least one state and one action"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param(format!("gamma {gamma} must lie strictly inside (0, 1)")));
    }
    let mut rng = seeded(seed);
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(dirichlet_row(n_states, &mut rng));
    }
    let reward = (0..n_states * n_actions).map(|_| rng.random_range(0.0..=1.0)).collect();
    TabularMDP::new(n_states, n_actions, transition, reward, gamma, vec![false; n_states])
}

/// Six-state chain. Action 1 ("right") advances with probability 0.9 and
/// otherwise stays; action 0 ("left") returns to state 0. Going left from
/// state 0 pays 0.1, pushing right at the last state pays 1.
pub fn chain_mdp(gamma: f64) -> Result<TabularMDP> {
    const N: usize = 6;
    let mut transition = vec![0.0; N * 2 * N];
    let mut reward = vec![0.0; N * 2];
    for s in 0..N {
        transition[(s * 2) * N] = 1.0;
        let right = (s * 2 + 1) * N;
        if s + 1 < N {
            transition[right + s + 1] = 0.9;
            transition[right + s] = 0.1;
        } else {
            transition[right + s] = 1.0;
        }
    }
    reward[0] = 0.1;
    reward[(N - 1) * 2 + 1] = 1.0;
    TabularMDP::new(N, 2, transition, reward, gamma, vec![false; N])
}

/// 3x3 grid with four moves (up, down, left, right) that slip to a uniformly
/// random move 20% of the time. The bottom-right cell is a terminal goal;
/// the reward of a move is its probability of reaching the goal.
pub fn gridworld_mdp(gamma: f64) -> Result<TabularMDP> {
    const W: usize = 3;
    const N: usize = W * W;
    const GOAL: usize = N - 1;
    let moves: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let target = |s: usize, m: usize| -> usize {
        let (r, c) = ((s / W) as i64, (s % W) as i64);
        let (nr, nc) = (r + moves[m].0, c + moves[m].1);
        if (0..W as i64).contains(&nr) && (0..W as i64).contains(&nc) {
            (nr as usize) * W + nc as usize
        } else {
            s
        }
    };
    let mut transition = vec![0.0; N * 4 * N];
    let mut reward = vec![0.0; N * 4];
    let mut terminal = vec![false; N];
    terminal[GOAL] = true;
    for s in 0..N {
        for a in 0..4 {
            let off = (s * 4 + a) * N;
            if s == GOAL {
                transition[off + s] = 1.0;
                continue;
            }
            for m in 0..4 {
                let p = if m == a { 0.8 + 0.05 } else { 0.05 };
                transition[off + target(s, m)] += p;
            }
            reward[s * 4 + a] = transition[off + GOAL];
        }
    }
    TabularMDP::new(N, 4, transition, reward, gamma, terminal)
}

/// Episodic interaction with a [`TabularMDP`].
#[derive(Debug, Clone)]
pub struct TabularEnv {
    pub mdp: TabularMDP,
    pub start_state: usize,
    pub max_episode_steps: usize,
    state: usize,
    elapsed: usize,
}

impl TabularEnv {
    pub fn new(mdp: TabularMDP, start_state: usize, max_episode_steps: usize) -> Result<Self> {
        if start_state >= mdp.n_states() || max_episode_steps == 0 {
            return Err(Error::param("invalid start state or episode length"));
        }
        Ok(Self {
            mdp,
            start_state,
            max_episode_steps,
            state: start_state,
            elapsed: 0,
        })
    }

    pub fn reset(&mut self) -> usize {
        self.state = self.start_state;
        self.elapsed = 0;
        self.state
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn step(&mut self, action: usize, rng: &mut StreamRng) -> Result<TabularTransition> {
        if action >= self.mdp.n_actions() {
            return Err(Error::param(format!("action {action} out of range")));
        }
        let s = self.state;
        let next = self.mdp.sample_next(s, action, rng);
        self.elapsed += 1;
        self.state = next;
        let terminal = self.mdp.is_terminal(next);
        Ok(TabularTransition {
            state: s,
            action,
            reward: self.mdp.reward(s, action),
            next_state: next,
            terminal,
            truncated: !terminal && self.elapsed >= self.max_episode_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_stochastic(mdp: &TabularMDP) {
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let row = mdp.row(s, a);
                assert!(row.iter().all(|&p| p >= 0.0));
                let total: f64 = row.iter().sum();
                assert!((total - 1.0).abs() <= 1e-12, "row ({s},{a}) sums to {total}");
            }
        }
    }

    #[test]
    fn single_state_mdp_is_the_unique_vertex() {
        let mdp = random_mdp(1, 1, 0.9, 12345).unwrap();
        assert_eq!(mdp.row(0, 0), &[1.0]);
    }

    #[test]
    fn same_seed_same_mdp() {
        assert_eq!(random_mdp(3, 2, 0.95, 7).unwrap(), random_mdp(3, 2, 0.95, 7).unwrap());
        assert_ne!(random_mdp(3, 2, 0.95, 7).unwrap(), random_mdp(3, 2, 0.95, 8).unwrap());
    }

    #[test]
    fn rows_sum_to_one_by_direct_summation() {
        let mdp = random_mdp(4, 3, 0.9, 1).unwrap();
        assert_stochastic(&mdp);
        assert!(mdp.rewards().iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        for (s, a, g) in [(0, 1, 0.9), (1, 0, 0.9), (2, 2, 1.0), (2, 2, 0.0), (2, 2, -0.3)] {
            assert!(matches!(random_mdp(s, a, g, 0), Err(Error::Parameter(_))));
        }
        assert!(TabularMDP::new(1, 1, vec![0.5], vec![0.0], 0.9, vec![false]).is_err());
        // A terminal state that pays reward violates the absorbing convention.
        assert!(TabularMDP::new(1, 1, vec![1.0], vec![1.0], 0.9, vec![true]).is_err());
    }

    #[test]
    fn named_mdps_are_valid() {
        let chain = chain_mdp(0.95).unwrap();
        assert_stochastic(&chain);
        assert_eq!((chain.n_states(), chain.n_actions()), (6, 2));
        let grid = gridworld_mdp(0.95).unwrap();
        assert_stochastic(&grid);
        assert!(grid.is_terminal(8));
    }

    #[test]
    fn env_episode_limit_truncates() {
        let mut env = TabularEnv::new(chain_mdp(0.9).unwrap(), 0, 3).unwrap();
        let mut rng = seeded(0);
        let t: Vec<_> = (0..3).map(|_| env.step(0, &mut rng).unwrap()).collect();
        assert!(!t[0].truncated && !t[1].truncated && t[2].truncated);
        assert_eq!(t[0].reward, 0.1);
        assert!(env.step(2, &mut rng).is_err());
    }
}
