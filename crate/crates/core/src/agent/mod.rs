//! The planning agent for both tiers.
//!
//! The deployed policy is the first head of a stack of `H_max` per-step
//! policies. Each improvement step rolls the batch start states through the
//! learned model, stops a rollout once the ensemble disagreement passes the
//! threshold, and ascends the accumulated entropy- and
//! uncertainty-regularized objective with respect to every head.

mod continuous;
mod hyperparams;
mod objective;
mod tabular;
mod train;

pub use continuous::{
    critic_update_continuous, farsighted_gradient_continuous, farsighted_improvement_continuous, ContinuousCritic,
    ContinuousPlanGradient, ContinuousStack, RolloutNoise,
};
pub use hyperparams::{Hyperparams, RunConfig, DESK_THRESHOLD, RUN_KEYS};
pub use objective::{regularized_reward, RolloutRecord, StepRecord, StopReason};
pub use tabular::{
    clip_sup_norm, critic_update_tabular, farsighted_gradient_tabular, farsighted_improvement_tabular,
    NextStateModel, TabularCritic, TabularPlanGradient, TabularStack,
};

pub use train::{
    evaluate_continuous, evaluate_tabular, read_metrics, train_continuous, train_tabular, Evaluation, MetricsRow,
    RunOutcome, Snapshot, SnapshotParams, CONFIG_FILE, METRICS_COLUMNS, METRICS_FILE, SNAPSHOT_FILE,
};

use serde::{Deserialize, Serialize};

/// Mean squared-error halves of the last critic step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticLosses {
    pub q_loss: f64,
    pub v_loss: f64,
}

impl CriticLosses {
    pub fn total(&self) -> f64 {
        self.q_loss + self.v_loss
    }
}
