//! Environments: finite MDPs with exact dynamics, and a small continuous
//! control task for the function-approximation tier.

mod continuous;
mod montecarlo;
mod tabular;

pub use continuous::{feature_dim, features, features_tape, state_delta, ContinuousEnv, Pendulum, PendulumParams};
pub use montecarlo::{mc_soft_return, McEstimate};
pub use tabular::{chain_mdp, gridworld_mdp, random_mdp, TabularEnv, TabularMDP};
pub(crate) use tabular::{dirichlet_row as tabular_dirichlet_row, sample_categorical};

use serde::{Deserialize, Serialize};

/// One environment interaction `(s, a, r, s', terminal)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition<S, A> {
    pub state: S,
    pub action: A,
    pub reward: f64,
    pub next_state: S,
    /// `next_state` is terminal: the episode ends here and nothing is bootstrapped.
    pub terminal: bool,
    /// The episode was cut by its time limit; bootstrapping still applies.
    pub truncated: bool,
}

pub type TabularTransition = Transition<usize, usize>;
pub type ContinuousTransition = Transition<Vec<f64>, Vec<f64>>;
