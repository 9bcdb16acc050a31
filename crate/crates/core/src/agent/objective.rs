use serde::{Deserialize, Serialize};

/// `r - alpha * log_pi - beta * u`
pub fn regularized_reward(r: f64, logpi: f64, u: f64, alpha: f64, beta: f64) -> f64 {
    r - alpha * logpi - beta * u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    Terminal,
    MaxHorizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: Vec<f64>,
    pub reward: f64,
    pub log_prob: f64,
    pub uncertainty: f64,
}

/// One planned rollout from a start state.
///
/// `steps` holds every simulated step, including the one whose uncertainty
/// triggered the stop; that step's reward is not part of the objective.
/// `achieved_horizon` counts the steps whose rewards were accumulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub start_state: Vec<f64>,
    pub achieved_horizon: usize,
    pub steps: Vec<StepRecord>,
    /// Value paid at the end of the rollout, before discounting.
    pub bootstrap_value: f64,
    pub objective: f64,
    pub stop: StopReason,
}

impl RolloutRecord {
    /// `sum_{t < h} gamma^t (r_t - alpha log pi_t - beta u_t) + gamma^{h'} V`, where
    /// `h'` is the index of the state the bootstrap value was read at.
    pub fn recompute_objective(&self, gamma: f64, alpha: f64, beta: f64) -> f64 {
        let h = self.achieved_horizon;
        let mut j = 0.0;
        for (t, s) in self.steps.iter().take(h).enumerate() {
            j += gamma.powi(t as i32) * regularized_reward(s.reward, s.log_prob, s.uncertainty, alpha, beta);
        }
        let bootstrap_at = match self.stop {
            StopReason::Threshold => h + 1,
            _ => h,
        };
        j + gamma.powi(bootstrap_at as i32) * self.bootstrap_value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_arithmetic() {
        assert_eq!(regularized_reward(1.0, 0.0, 0.0, 0.2, 0.5), 1.0);
        assert!((regularized_reward(0.0, -1.0, 0.0, 0.2, 0.5) - 0.2).abs() < 1e-15);
        assert!((regularized_reward(1.0, 0.5, 2.0, 0.2, 0.5) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_three_step_objective() {
        let step = |r: f64, lp: f64, u: f64| StepRecord {
            action: vec![0.0],
            reward: r,
            log_prob: lp,
            uncertainty: u,
        };
        let record = RolloutRecord {
            start_state: vec![0.0],
            achieved_horizon: 3,
            steps: vec![step(1.0, -0.5, 0.01), step(-2.0, 0.3, 0.02), step(0.5, 1.0, 0.0), step(9.0, 0.0, 5.0)],
            bootstrap_value: 4.0,
            objective: 0.0,
            stop: StopReason::Threshold,
        };
        let (g, a, b) = (0.9, 0.2, 0.5);
        let hand = (1.0 + 0.1 - 0.005) + 0.9 * (-2.0 - 0.06 - 0.01) + 0.81 * (0.5 - 0.2) + 0.9f64.powi(4) * 4.0;
        assert!((record.recompute_objective(g, a, b) - hand).abs() < 1e-12);
    }
}
