//! Exact maximum-entropy policy iteration on finite MDPs.
//!
//! Everything here runs on the true dynamics with linear solves, so the
//! improvement and convergence properties of distilling an `H`-step plan
//! into a one-step policy can be checked to round-off.

mod evaluation;
mod horizon;
mod iteration;
mod planning;
mod policy;

pub use evaluation::{bellman_residual, reward_return, soft_policy_evaluation, SoftValueTable};
pub use horizon::{horizon_bound_report, CheckKind, HorizonBoundReport, HorizonEntry, Violation};
pub use iteration::{
    distill_from_values, distill_improve, extended_policy_iteration, soft_value_iteration, IterationOutcome,
    SoftOptimum,
};
pub use planning::{multi_step_objective, one_step_improvement, solve_multi_step, PlanningResult};
pub use policy::{HorizonPolicy, TabularPolicy, PROB_FLOOR};

/// `max_i |a_i - b_i|`
pub fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
