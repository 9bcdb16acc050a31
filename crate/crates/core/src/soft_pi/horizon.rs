use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::evaluation::soft_policy_evaluation;
use super::iteration::soft_value_iteration;
use super::planning::solve_multi_step;
use super::policy::TabularPolicy;
use crate::error::{Error, Result};
use crate::mdp::TabularMDP;

const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `J^{H'} >= J^H` for `H' > H`.
    ObjectiveMonotoneInHorizon,
    /// `V^{pi_new} >= J^H`.
    DistilledDominatesObjective,
    /// `V_* - J^H <= gamma^H |V_* - V_old|_inf`.
    GapWithinBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: CheckKind,
    pub horizon: usize,
    pub state: usize,
    /// How far past the slack the inequality failed.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonEntry {
    pub objective: Vec<f64>,
    pub v_new: Vec<f64>,
    /// `V_*(s) - J^H(s)` per state.
    pub gap: Vec<f64>,
    pub max_gap: f64,
    /// `gamma^H |V_* - V_old|_inf`.
    pub bound: f64,
    /// `gamma^H * 2 r_max / (1 - gamma)` with `r_max` the largest entropy-augmented
    /// reward magnitude under the old and optimal policies. Informational only.
    pub rmax_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonBoundReport {
    pub gamma: f64,
    pub alpha: f64,
    pub v_old: Vec<f64>,
    pub v_star: Vec<f64>,
    pub initial_gap: f64,
    pub entries: BTreeMap<usize, HorizonEntry>,
    pub violations: Vec<Violation>,
}

impl HorizonBoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn worst_violation(&self) -> f64 {
        self.violations.iter().map(|v| v.magnitude).fold(0.0, f64::max)
    }

    /// Ratios `max_gap(H_{k+1}) / max_gap(H_k)` across consecutive horizons,
    /// skipping steps where the gap has already hit round-off.
    pub fn gap_ratios(&self) -> Vec<f64> {
        let gaps: Vec<f64> = self.entries.values().map(|e| e.max_gap).collect();
        gaps.windows(2)
            .filter(|w| w[0] > 1e-12)
            .map(|w| w[1].max(0.0) / w[0])
            .collect()
    }
}

fn entropy_reward_magnitude(mdp: &TabularMDP, pi: &TabularPolicy, alpha: f64) -> f64 {
    let mut m: f64 = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            m = m.max((mdp.reward(s, a) - alpha * pi.log_prob(s, a)).abs());
        }
    }
    m
}

/// Exact horizon diagnostics for one old policy.
///
/// Each check failure becomes a [`Violation`]; the function itself only
/// errors on invalid input.
pub fn horizon_bound_report(
    mdp: &TabularMDP,
    pi_old: &TabularPolicy,
    horizons: &[usize],
    alpha: f64,
) -> Result<HorizonBoundReport> {
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::param("horizons must be a nonempty list of positive integers"));
    }
    let gamma = mdp.gamma();
    let old = soft_policy_evaluation(mdp, pi_old, alpha)?;
    let opt = soft_value_iteration(mdp, alpha, 1e-13, 1_000_000)?;
    let initial_gap = super::sup_norm_diff(&opt.v, &old.v);
    let r_max = entropy_reward_magnitude(mdp, pi_old, alpha).max(entropy_reward_magnitude(mdp, &opt.policy, alpha));

    let mut sorted = horizons.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut entries = BTreeMap::new();
    let mut violations = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    for &h in &sorted {
        let plan = solve_multi_step(mdp, &old, h, alpha)?;
        let v_new = soft_policy_evaluation(mdp, &plan.first_step, alpha)?.v;
        let discount = gamma.powi(h as i32);
        let bound = discount * initial_gap;
        let gap: Vec<f64> = opt.v.iter().zip(&plan.objective).map(|(vs, j)| vs - j).collect();
        for s in 0..mdp.n_states() {
            if let Some(prev) = &previous {
                let shortfall = prev[s] - plan.objective[s];
                if shortfall > SLACK {
                    violations.push(Violation {
                        check: CheckKind::ObjectiveMonotoneInHorizon,
                        horizon: h,
                        state: s,
                        magnitude: shortfall,
                    });
                }
            }
            let shortfall = plan.objective[s] - v_new[s];
            if shortfall > SLACK {
                violations.push(Violation {
                    check: CheckKind::DistilledDominatesObjective,
                    horizon: h,
                    state: s,
                    magnitude: shortfall,
                });
            }
            if gap[s] - bound > SLACK {
                violations.push(Violation {
                    check: CheckKind::GapWithinBound,
                    horizon: h,
                    state: s,
                    magnitude: gap[s] - bound,
                });
            }
        }
        entries.insert(
            h,
            HorizonEntry {
                max_gap: gap.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                gap,
                bound,
                rmax_bound: discount * 2.0 * r_max / (1.0 - gamma),
                v_new,
                objective: plan.objective.clone(),
            },
        );
        previous = Some(plan.objective);
    }
    Ok(HorizonBoundReport {
        gamma,
        alpha,
        v_old: old.v,
        v_star: opt.v,
        initial_gap,
        entries,
        violations,
    })
}
