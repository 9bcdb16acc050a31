use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::tape::{softplus, Tape, Var};
use crate::error::{ensure_finite, Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Tanh-squashed diagonal Gaussian policy.
///
/// The backbone emits `[mean; raw_log_std]` per action dimension. The raw
/// log-std is mapped smoothly into `[LOG_STD_MIN, LOG_STD_MAX]` with a scaled
/// tanh, so the density stays differentiable everywhere. Noise is always
/// supplied by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquashedGaussianPolicy {
    pub net: Mlp,
    action_dim: usize,
    action_bound: f64,
}

/// `ln(1 - tanh(u)^2)` computed without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn squash_log_std(raw: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

impl SquashedGaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        action_dim: usize,
        action_bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Self::from_net(Mlp::new(&sizes, rng)?, action_bound)
    }

    pub fn from_net(net: Mlp, action_bound: f64) -> Result<Self> {
        if !net.output_dim().is_multiple_of(2) {
            return Err(Error::param("policy backbone must emit mean and log-std pairs"));
        }
        if !(action_bound > 0.0 && action_bound.is_finite()) {
            return Err(Error::param(format!("action bound {action_bound} must be positive")));
        }
        Ok(Self {
            action_dim: net.output_dim() / 2,
            net,
            action_bound,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    /// Returns `(mean, log_std)` of the pre-squash Gaussian.
    pub fn distribution(&self, input: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.net.forward(input)?;
        let m = self.action_dim;
        Ok((out[..m].to_vec(), out[m..].iter().map(|&r| squash_log_std(r)).collect()))
    }

    /// `action = bound * tanh(mean + std * noise)` and its log-density,
    /// including the change-of-variables correction.
    pub fn sample_and_logprob(&self, input: &[f64], noise: &[f64]) -> Result<(Vec<f64>, f64)> {
        if noise.len() != self.action_dim {
            return Err(Error::param(format!(
                "noise has {} entries, policy acts in {} dimensions",
                noise.len(),
                self.action_dim
            )));
        }
        ensure_finite("noise", noise)?;
        let (mean, log_std) = self.distribution(input)?;
        let mut action = Vec::with_capacity(self.action_dim);
        let mut logp = 0.0;
        for j in 0..self.action_dim {
            let u = mean[j] + log_std[j].exp() * noise[j];
            action.push(self.action_bound * u.tanh());
            logp += -0.5 * noise[j] * noise[j] - log_std[j] - HALF_LN_2PI
                - self.action_bound.ln()
                - log_one_minus_tanh_sq(u);
        }
        Ok((action, logp))
    }

    /// Deterministic action `bound * tanh(mean)`.
    pub fn mean_action(&self, input: &[f64]) -> Result<Vec<f64>> {
        let (mean, _) = self.distribution(input)?;
        Ok(mean.iter().map(|m| self.action_bound * m.tanh()).collect())
    }

    /// Log-density of an action strictly inside the bounds.
    pub fn log_prob(&self, input: &[f64], action: &[f64]) -> Result<f64> {
        let (mean, log_std) = self.distribution(input)?;
        let mut logp = 0.0;
        for j in 0..self.action_dim {
            let y = action[j] / self.action_bound;
            if !(y > -1.0 && y < 1.0) {
                return Ok(f64::NEG_INFINITY);
            }
            let u = y.atanh();
            let z = (u - mean[j]) / log_std[j].exp();
            logp += -0.5 * z * z - log_std[j] - HALF_LN_2PI - self.action_bound.ln() - log_one_minus_tanh_sq(u);
        }
        Ok(logp)
    }

    /// Tape version of [`Self::sample_and_logprob`] over a batch: `input` is
    /// `B x input_dim`, `noise` is `B x action_dim` row-major. Returns the
    /// action node (`B x action_dim`) and the log-density node (`B x 1`).
    pub fn sample_tape(&self, tape: &mut Tape, params: Var, input: Var, noise: &[f64]) -> (Var, Var) {
        let rows = tape.shape(input).0;
        let m = self.action_dim;
        assert_eq!(noise.len(), rows * m, "noise shape mismatch");
        let out = self.net.forward_tape(tape, params, input);
        let mean = tape.slice_cols(out, 0, m);
        let raw = tape.slice_cols(out, m, m);
        let t = tape.tanh(raw);
        let half_range = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
        let log_std = tape.affine(t, half_range, LOG_STD_MIN + half_range);
        let std = tape.exp(log_std);
        let spread = tape.mul_const(std, noise.to_vec());
        let u = tape.add(mean, spread);
        let squashed = tape.tanh(u);
        let action = tape.scale(squashed, self.action_bound);

        // log(1 - tanh^2 u) = 2 (ln 2 - u - softplus(-2u))
        let neg2u = tape.scale(u, -2.0);
        let sp = tape.softplus(neg2u);
        let s = tape.add(u, sp);
        let correction = tape.affine(s, -2.0, 2.0 * std::f64::consts::LN_2);

        let noise_term: Vec<f64> = noise.iter().map(|e| -0.5 * e * e - HALF_LN_2PI - self.action_bound.ln()).collect();
        let per_dim = tape.add(log_std, correction);
        let neg = tape.affine(per_dim, -1.0, 0.0);
        let consts = tape.constant(rows, m, noise_term);
        let summed = tape.add(neg, consts);
        let logp = tape.sum_cols(summed);
        (action, logp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn policy_with_output(mean: f64, raw_log_std: f64, bound: f64) -> SquashedGaussianPolicy {
        // A single affine layer with zero weights emits its bias as the output.
        let net = Mlp::from_params(&[1, 2], vec![0.0, 0.0, mean, raw_log_std]).unwrap();
        SquashedGaussianPolicy::from_net(net, bound).unwrap()
    }

    #[test]
    fn symmetric_point_at_the_std_floor() {
        let p = policy_with_output(0.0, -50.0, 1.0);
        let (a, logp) = p.sample_and_logprob(&[0.3], &[0.0]).unwrap();
        assert_eq!(a, vec![0.0]);
        // At u = 0 the squash Jacobian is 1; only the Gaussian peak remains.
        let expected = -LOG_STD_MIN - HALF_LN_2PI;
        assert!((logp - expected).abs() < 1e-9, "{logp} vs {expected}");
    }

    #[test]
    fn log_prob_agrees_with_sampling_density() {
        let p = SquashedGaussianPolicy::new(3, &[6], 2, 2.0, &mut seeded(4)).unwrap();
        let input = [0.1, -0.4, 0.9];
        let (a, logp) = p.sample_and_logprob(&input, &[0.7, -1.3]).unwrap();
        let again = p.log_prob(&input, &a).unwrap();
        assert!((logp - again).abs() < 1e-8);
        assert!(a.iter().all(|x| x.abs() < 2.0));
    }

    #[test]
    fn tape_matches_direct_sampling() {
        let p = SquashedGaussianPolicy::new(2, &[5, 5], 2, 1.5, &mut seeded(9)).unwrap();
        let inputs = [0.2, -0.1, 1.4, 0.3];
        let noise = [0.5, -0.2, -1.1, 2.0];
        let mut tape = Tape::new();
        let params = p.net.param_leaf(&mut tape);
        let x = tape.leaf(2, 2, inputs.to_vec());
        let (a, logp) = p.sample_tape(&mut tape, params, x, &noise);
        for r in 0..2 {
            let (da, dl) = p.sample_and_logprob(&inputs[2 * r..2 * r + 2], &noise[2 * r..2 * r + 2]).unwrap();
            assert!((tape.value(a)[2 * r] - da[0]).abs() < 1e-12);
            assert!((tape.value(a)[2 * r + 1] - da[1]).abs() < 1e-12);
            assert!((tape.value(logp)[r] - dl).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_noise_width_is_rejected() {
        let p = policy_with_output(0.0, 0.0, 1.0);
        assert!(p.sample_and_logprob(&[0.0], &[0.0, 1.0]).is_err());
        assert!(p.sample_and_logprob(&[0.0], &[f64::INFINITY]).is_err());
    }
}
