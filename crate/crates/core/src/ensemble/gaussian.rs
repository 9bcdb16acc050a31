use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kl::{ovr_gaussian, ovr_gaussian_tape, UncertaintyEstimate};
use crate::buffer::TransitionBuffer;
use crate::error::{ensure_finite, Error, Result};
use crate::mdp::{feature_dim, features, features_tape, state_delta};
use crate::nn::tape::{softplus, wrap_angle};
use crate::nn::{Adam, Mlp, Tape, Var};
use crate::rng::seeded;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub k: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Caps the minibatches per member per epoch; `None` sweeps the whole resample.
    pub max_batches_per_epoch: Option<usize>,
    /// Share of the data kept aside to report held-out loss.
    pub holdout_fraction: f64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self {
            k: 7,
            hidden: vec![64, 64],
            epochs: 50,
            batch_size: 64,
            lr: 1e-3,
            max_batches_per_epoch: None,
            holdout_fraction: 0.1,
        }
    }
}

impl GaussianConfig {
    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::param(format!("ensemble size {} must be at least 2", self.k)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(Error::param("batch size and hidden widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::param("holdout fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-column affine map `x -> (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    fn identity(d: usize) -> Self {
        Self {
            shift: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut shift = vec![0.0; d];
        for r in rows {
            for (m, x) in shift.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut scale = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                scale[j] += (r[j] - shift[j]).powi(2) / n;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 1e-12 { s.sqrt() } else { 1.0 };
        }
        Self { shift, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.shift).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect()
    }
}

/// Upper ceiling used inside the clamp. The outer softplus adds at most
/// `ln(1 + e^-(hi - lo))` on top of it, so backing off by twice `e^-(hi - lo)`
/// keeps the result at or below `hi`.
fn inner_ceiling(lo: f64, hi: f64) -> f64 {
    hi - 2.0 * (-(hi - lo)).exp()
}

/// `lo + softplus(c - softplus(c - x) - lo)` with `c` just under `hi`: a smooth
/// clamp into `[lo, hi]`.
fn soft_clamp(x: f64, lo: f64, hi: f64) -> f64 {
    let c = inner_ceiling(lo, hi);
    lo + softplus(c - softplus(c - x) - lo)
}

fn soft_clamp_tape(tape: &mut Tape, x: Var, lo: f64, hi: f64) -> Var {
    let c = inner_ceiling(lo, hi);
    let a = tape.affine(x, -1.0, c);
    let a = tape.softplus(a);
    let upper = tape.affine(a, -1.0, c - lo);
    let b = tape.softplus(upper);
    tape.affine(b, 1.0, lo)
}

/// Tape nodes for one member's predictive distribution of the state change.
#[derive(Debug, Clone, Copy)]
pub struct MemberNodes {
    pub mean_delta: Var,
    pub var: Var,
    pub logvar: Var,
}

/// Tape nodes of one reparameterized model step over a batch.
#[derive(Debug, Clone, Copy)]
pub struct StepNodes {
    /// `B x state_dim`, angles wrapped.
    pub next_state: Var,
    /// `B x 1` one-vs-rest disagreement.
    pub uncertainty: Var,
}

/// `K` networks mapping `(state, action)` to a diagonal Gaussian over the
/// state change. Inputs and targets are standardized with statistics from
/// the latest fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianEnsemble {
    members: Vec<Mlp>,
    state_dim: usize,
    action_dim: usize,
    angle_dims: Vec<bool>,
    input_norm: Normalizer,
    target_norm: Normalizer,
}

impl GaussianEnsemble {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        angle_dims: &[bool],
        k: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if angle_dims.len() != state_dim {
            return Err(Error::param("angle mask must cover every state coordinate"));
        }
        if k < 2 {
            return Err(Error::param(format!("ensemble size {k} must be at least 2")));
        }
        let n_in = feature_dim(angle_dims) + action_dim;
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * state_dim);
        let members = (0..k).map(|_| Mlp::new(&sizes, rng)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members,
            state_dim,
            action_dim,
            angle_dims: angle_dims.to_vec(),
            input_norm: Normalizer::identity(n_in),
            target_norm: Normalizer::identity(state_dim),
        })
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Mlp] {
        &mut self.members
    }

    fn raw_input(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = features(state, &self.angle_dims);
        x.extend_from_slice(action);
        x
    }

    fn check_io(&self, state: &[f64], action: &[f64]) -> Result<()> {
        if state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::param("state or action width does not match the model"));
        }
        ensure_finite("state", state)?;
        ensure_finite("action", action)
    }

    /// `(mean, logvar)` of the state change predicted by member `i`.
    pub fn member_delta(&self, i: usize, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_io(state, action)?;
        let out = self.members[i].forward(&self.input_norm.apply(&self.raw_input(state, action)))?;
        Ok(self.decode(&out))
    }

    fn decode(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.state_dim;
        let (tm, ts) = (&self.target_norm.shift, &self.target_norm.scale);
        let mean = (0..d).map(|j| out[j] * ts[j] + tm[j]).collect();
        let logvar = (0..d)
            .map(|j| soft_clamp(out[d + j] + 2.0 * ts[j].ln(), LOGVAR_MIN, LOGVAR_MAX))
            .collect();
        (mean, logvar)
    }

    fn apply_delta(&self, state: &[f64], delta: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(delta)
            .zip(&self.angle_dims)
            .map(|((s, d), &a)| if a { wrap_angle(s + d) } else { s + d })
            .collect()
    }

    /// Member `i`'s next-state mean and variance.
    pub fn predict_member(&self, i: usize, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mean, logvar) = self.member_delta(i, state, action)?;
        Ok((self.apply_delta(state, &mean), logvar.iter().map(|l| l.exp()).collect()))
    }

    /// Average of the members' mean predictions.
    pub fn mean_prediction(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let mut delta = vec![0.0; self.state_dim];
        for i in 0..self.k() {
            let (m, _) = self.member_delta(i, state, action)?;
            for (d, x) in delta.iter_mut().zip(m) {
                *d += x / self.k() as f64;
            }
        }
        Ok(self.apply_delta(state, &delta))
    }

    /// Disagreement is measured on the state change, which shifts every
    /// member by the same `s` and so leaves the KL terms unchanged while
    /// avoiding angle wrap-around.
    pub fn ovr_uncertainty(&self, state: &[f64], action: &[f64]) -> Result<UncertaintyEstimate> {
        let mut means = Vec::with_capacity(self.k());
        let mut vars = Vec::with_capacity(self.k());
        for i in 0..self.k() {
            let (m, lv) = self.member_delta(i, state, action)?;
            means.push(m);
            vars.push(lv.iter().map(|l| l.exp()).collect::<Vec<f64>>());
        }
        let mr: Vec<&[f64]> = means.iter().map(|m| m.as_slice()).collect();
        let vr: Vec<&[f64]> = vars.iter().map(|v| v.as_slice()).collect();
        ovr_gaussian(&mr, &vr)
    }

    /// `mean + std * noise` from member `member`.
    pub fn sample_next(&self, member: usize, state: &[f64], action: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        if member >= self.k() || noise.len() != self.state_dim {
            return Err(Error::param("member index or noise width out of range"));
        }
        let (mean, logvar) = self.member_delta(member, state, action)?;
        let delta: Vec<f64> = (0..self.state_dim).map(|j| mean[j] + (0.5 * logvar[j]).exp() * noise[j]).collect();
        Ok(self.apply_delta(state, &delta))
    }

    /// Draws a member uniformly and samples its prediction.
    pub fn predict_next<R: Rng + ?Sized>(&self, state: &[f64], action: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let member = rng.random_range(0..self.k());
        let noise: Vec<f64> = (0..self.state_dim).map(|_| rng.sample(StandardNormal)).collect();
        self.sample_next(member, state, action, &noise)
    }

    /// One constant parameter node per member, for rollouts that do not
    /// train the model.
    pub fn param_constants(&self, tape: &mut Tape) -> Vec<Var> {
        self.members.iter().map(|m| m.param_constant(tape)).collect()
    }

    /// Normalized network input for a batch of states and actions.
    pub fn input_tape(&self, tape: &mut Tape, state: Var, action: Var) -> Var {
        let f = features_tape(tape, state, &self.angle_dims);
        let x = tape.concat_cols(&[f, action]);
        let scale: Vec<f64> = self.input_norm.scale.iter().map(|s| 1.0 / s).collect();
        let shift: Vec<f64> = self.input_norm.shift.iter().zip(&scale).map(|(m, s)| -m * s).collect();
        tape.column_affine(x, &scale, &shift)
    }

    pub fn member_tape(&self, tape: &mut Tape, i: usize, params: Var, input: Var) -> MemberNodes {
        let d = self.state_dim;
        let out = self.members[i].forward_tape(tape, params, input);
        let mean_n = tape.slice_cols(out, 0, d);
        let raw = tape.slice_cols(out, d, d);
        let (tm, ts) = (&self.target_norm.shift, &self.target_norm.scale);
        let mean_delta = tape.column_affine(mean_n, ts, tm);
        let lv_shift: Vec<f64> = ts.iter().map(|s| 2.0 * s.ln()).collect();
        let lv = tape.column_affine(raw, &vec![1.0; d], &lv_shift);
        let logvar = soft_clamp_tape(tape, lv, LOGVAR_MIN, LOGVAR_MAX);
        let var = tape.exp(logvar);
        MemberNodes {
            mean_delta,
            var,
            logvar,
        }
    }

    /// Reparameterized step `s' = s + sum_k mask_k (mu_k + sigma_k noise)`.
    /// `choice[r]` selects the member for row `r`; `noise` is `B x state_dim`.
    pub fn step_tape(
        &self,
        tape: &mut Tape,
        params: &[Var],
        state: Var,
        action: Var,
        choice: &[usize],
        noise: &[f64],
    ) -> StepNodes {
        let (rows, d) = tape.shape(state);
        assert_eq!(choice.len(), rows, "one member choice per row");
        assert_eq!(noise.len(), rows * d, "noise shape mismatch");
        let input = self.input_tape(tape, state, action);
        let nodes: Vec<MemberNodes> = (0..self.k()).map(|i| self.member_tape(tape, i, params[i], input)).collect();
        let mut delta: Option<Var> = None;
        for (i, n) in nodes.iter().enumerate() {
            if !choice.contains(&i) {
                continue;
            }
            let mask: Vec<f64> = (0..rows * d).map(|k| if choice[k / d] == i { 1.0 } else { 0.0 }).collect();
            let half = tape.scale(n.logvar, 0.5);
            let std = tape.exp(half);
            let spread = tape.mul_const(std, noise.to_vec());
            let sample = tape.add(n.mean_delta, spread);
            let picked = tape.mul_const(sample, mask);
            delta = Some(match delta {
                Some(acc) => tape.add(acc, picked),
                None => picked,
            });
        }
        let raw_next = tape.add(state, delta.expect("at least one row"));
        let next_state = if self.angle_dims.iter().any(|&a| a) {
            let cols: Vec<Var> = (0..d)
                .map(|j| {
                    let c = tape.slice_cols(raw_next, j, 1);
                    if self.angle_dims[j] {
                        tape.wrap_angle(c)
                    } else {
                        c
                    }
                })
                .collect();
            tape.concat_cols(&cols)
        } else {
            raw_next
        };
        let means: Vec<Var> = nodes.iter().map(|n| n.mean_delta).collect();
        let vars: Vec<Var> = nodes.iter().map(|n| n.var).collect();
        let logvars: Vec<Var> = nodes.iter().map(|n| n.logvar).collect();
        let uncertainty = ovr_gaussian_tape(tape, &means, &vars, &logvars);
        StepNodes {
            next_state,
            uncertainty,
        }
    }
}

/// Per-epoch losses averaged over members, in nats per state coordinate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub train_loss: Vec<f64>,
    /// Empty when no data was held out.
    pub holdout_loss: Vec<f64>,
}

/// Owns an ensemble and its optimizer state so repeated fits warm-start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianTrainer {
    pub ensemble: GaussianEnsemble,
    pub config: GaussianConfig,
    optimizers: Vec<Adam>,
}

struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl GaussianTrainer {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        angle_dims: &[bool],
        config: GaussianConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let ensemble = GaussianEnsemble::new(state_dim, action_dim, angle_dims, config.k, &config.hidden, rng)?;
        let optimizers = ensemble.members.iter().map(|m| Adam::new(m.params().len(), config.lr)).collect();
        Ok(Self {
            ensemble,
            config,
            optimizers,
        })
    }

    fn dataset(&self, buffer: &TransitionBuffer<Vec<f64>, Vec<f64>>) -> Result<Dataset> {
        let e = &self.ensemble;
        let mut inputs = Vec::with_capacity(buffer.len());
        let mut targets = Vec::with_capacity(buffer.len());
        for t in buffer.iter() {
            e.check_io(&t.state, &t.action)?;
            ensure_finite("next_state", &t.next_state)?;
            inputs.push(e.raw_input(&t.state, &t.action));
            targets.push(state_delta(&t.state, &t.next_state, &e.angle_dims));
        }
        Ok(Dataset { inputs, targets })
    }

    /// Mean Gaussian NLL of member `i` on normalized rows, recorded on `tape`.
    fn nll_tape(&self, tape: &mut Tape, i: usize, params: Var, x: &[f64], y: &[f64], rows: usize) -> Var {
        let e = &self.ensemble;
        let d = e.state_dim;
        let input = tape.constant(rows, x.len() / rows, x.to_vec());
        let out = e.members[i].forward_tape(tape, params, input);
        let mean_n = tape.slice_cols(out, 0, d);
        let raw = tape.slice_cols(out, d, d);
        let ts = &e.target_norm.scale;
        let lv_shift: Vec<f64> = ts.iter().map(|s| 2.0 * s.ln()).collect();
        let lv = tape.column_affine(raw, &vec![1.0; d], &lv_shift);
        let logvar = soft_clamp_tape(tape, lv, LOGVAR_MIN, LOGVAR_MAX);
        // Back to normalized units: ln var_n = ln var - 2 ln scale.
        let neg_shift: Vec<f64> = lv_shift.iter().map(|s| -s).collect();
        let lvn = tape.column_affine(logvar, &vec![1.0; d], &neg_shift);
        let target = tape.constant(rows, d, y.to_vec());
        let err = tape.sub(mean_n, target);
        let err2 = tape.square(err);
        let neg = tape.scale(lvn, -1.0);
        let prec = tape.exp(neg);
        let quad = tape.mul(err2, prec);
        let total = tape.add(quad, lvn);
        let m = tape.mean(total);
        tape.scale(m, 0.5)
    }

    fn pure_nll(&self, i: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        let e = &self.ensemble;
        let d = e.state_dim;
        let out = e.members[i].forward(x)?;
        let ts = &e.target_norm.scale;
        let mut total = 0.0;
        for j in 0..d {
            let lvn = soft_clamp(out[d + j] + 2.0 * ts[j].ln(), LOGVAR_MIN, LOGVAR_MAX) - 2.0 * ts[j].ln();
            total += 0.5 * ((out[j] - y[j]).powi(2) * (-lvn).exp() + lvn);
        }
        Ok(total / d as f64)
    }

    /// Refits every member on a fresh bootstrap resample of `buffer`,
    /// continuing from the current parameters and optimizer state.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        buffer: &TransitionBuffer<Vec<f64>, Vec<f64>>,
        rng: &mut R,
    ) -> Result<FitReport> {
        if buffer.is_empty() {
            return Err(Error::param("cannot fit a model to an empty buffer"));
        }
        let data = self.dataset(buffer)?;
        let n = data.inputs.len();
        self.ensemble.input_norm = Normalizer::fit(&data.inputs);
        self.ensemble.target_norm = Normalizer::fit(&data.targets);
        let xs: Vec<Vec<f64>> = data.inputs.iter().map(|x| self.ensemble.input_norm.apply(x)).collect();
        let ys: Vec<Vec<f64>> = data.targets.iter().map(|y| self.ensemble.target_norm.apply(y)).collect();

        let mut order: Vec<usize> = (0..n).collect();
        let n_hold = if n >= 10 {
            (n as f64 * self.config.holdout_fraction).floor() as usize
        } else {
            0
        };
        if n_hold > 0 {
            order.shuffle(rng);
        }
        let (hold, train) = order.split_at(n_hold);
        let k = self.ensemble.k();
        let resamples: Vec<Vec<usize>> = (0..k)
            .map(|_| (0..train.len()).map(|_| train[rng.random_range(0..train.len())]).collect())
            .collect();

        let bs = self.config.batch_size.min(train.len());
        let (d_in, d) = (xs[0].len(), self.ensemble.state_dim);
        let mut report = FitReport::default();
        for epoch in 0..self.config.epochs {
            let snapshot = self.ensemble.clone();
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for i in 0..k {
                let mut idx = resamples[i].clone();
                idx.shuffle(rng);
                let limit = self.config.max_batches_per_epoch.unwrap_or(usize::MAX);
                for chunk in idx.chunks(bs).filter(|c| c.len() == bs).take(limit) {
                    let mut x = Vec::with_capacity(bs * d_in);
                    let mut y = Vec::with_capacity(bs * d);
                    for &r in chunk {
                        x.extend_from_slice(&xs[r]);
                        y.extend_from_slice(&ys[r]);
                    }
                    let mut tape = Tape::new();
                    let params = self.ensemble.members[i].param_leaf(&mut tape);
                    let loss = self.nll_tape(&mut tape, i, params, &x, &y, bs);
                    let value = tape.scalar(loss);
                    if !value.is_finite() {
                        return Err(Error::Diverged {
                            message: format!("non-finite loss for member {i} in epoch {epoch}"),
                            last_snapshot: Box::new(snapshot),
                        });
                    }
                    let grads = tape.backward(loss)?.wrt(params)?;
                    if self.optimizers[i].step(self.ensemble.members[i].params_mut(), &grads).is_err() {
                        return Err(Error::Diverged {
                            message: format!("non-finite gradient for member {i} in epoch {epoch}"),
                            last_snapshot: Box::new(snapshot),
                        });
                    }
                    epoch_loss += value;
                    batches += 1;
                }
            }
            report.train_loss.push(epoch_loss / batches.max(1) as f64);
            if !hold.is_empty() {
                let mut total = 0.0;
                for i in 0..k {
                    for &r in hold {
                        total += self.pure_nll(i, &xs[r], &ys[r])?;
                    }
                }
                report.holdout_loss.push(total / (k * hold.len()) as f64);
            }
        }
        Ok(report)
    }
}

/// Fits a fresh ensemble with `config.k` members.
pub fn train_gaussian(
    buffer: &TransitionBuffer<Vec<f64>, Vec<f64>>,
    angle_dims: &[bool],
    config: GaussianConfig,
    seed: u64,
) -> Result<(GaussianEnsemble, FitReport)> {
    let first = buffer
        .iter()
        .next()
        .ok_or_else(|| Error::param("cannot fit a model to an empty buffer"))?;
    let mut rng = seeded(seed);
    let mut trainer = GaussianTrainer::new(first.state.len(), first.action.len(), angle_dims, config, &mut rng)?;
    let report = trainer.fit(buffer, &mut rng)?;
    Ok((trainer.ensemble, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::ContinuousTransition;

    fn record(state: Vec<f64>, action: Vec<f64>, next_state: Vec<f64>) -> ContinuousTransition {
        ContinuousTransition {
            state,
            action,
            reward: 0.0,
            next_state,
            terminal: false,
            truncated: false,
        }
    }

    #[test]
    fn soft_clamp_stays_inside() {
        for x in [-1e3, -10.0, -3.0, 0.0, 2.0, 50.0, 1e3] {
            let y = soft_clamp(x, LOGVAR_MIN, LOGVAR_MAX);
            assert!((LOGVAR_MIN..=LOGVAR_MAX).contains(&y));
        }
        assert!((soft_clamp(-4.0, LOGVAR_MIN, LOGVAR_MAX) + 4.0).abs() < 0.02);
    }

    #[test]
    fn learns_a_noiseless_linear_map() {
        let mut rng = seeded(1);
        let data = (0..500).map(|_| {
            let s: f64 = rng.random_range(-1.0..1.0);
            let a: f64 = rng.random_range(-1.0..1.0);
            record(vec![s], vec![a], vec![s + a])
        });
        let buf = TransitionBuffer::from_records(1000, data).unwrap();
        let cfg = GaussianConfig {
            k: 3,
            hidden: vec![16],
            epochs: 200,
            batch_size: 32,
            lr: 3e-3,
            ..Default::default()
        };
        let (ens, report) = train_gaussian(&buf, &[false], cfg, 2).unwrap();
        assert!(report.holdout_loss.last().unwrap() < &report.holdout_loss[0]);
        for t in buf.iter().take(100) {
            for i in 0..3 {
                let (m, _) = ens.predict_member(i, &t.state, &t.action).unwrap();
                assert!((m[0] - t.next_state[0]).abs() < 0.05, "{} vs {}", m[0], t.next_state[0]);
            }
        }
    }

    #[test]
    fn recovers_noise_scale() {
        let mut rng = seeded(3);
        let data = (0..1000).map(|_| {
            let s: f64 = rng.random_range(-1.0..1.0);
            let eps: f64 = rng.sample(StandardNormal);
            record(vec![s], vec![0.0], vec![0.1 * eps])
        });
        let buf = TransitionBuffer::from_records(1000, data).unwrap();
        let cfg = GaussianConfig {
            k: 2,
            hidden: vec![16],
            epochs: 60,
            batch_size: 32,
            lr: 3e-3,
            ..Default::default()
        };
        let (ens, _) = train_gaussian(&buf, &[false], cfg, 4).unwrap();
        for s in [-0.5, 0.0, 0.7] {
            for i in 0..2 {
                let (_, var) = ens.predict_member(i, &[s], &[0.0]).unwrap();
                let sd = var[0].sqrt();
                assert!((0.05..=0.2).contains(&sd), "sd {sd}");
            }
        }
    }

    #[test]
    fn empty_buffer_is_a_parameter_error() {
        let buf = TransitionBuffer::<Vec<f64>, Vec<f64>>::new(4).unwrap();
        assert!(matches!(
            train_gaussian(&buf, &[false], GaussianConfig::default(), 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn tape_step_matches_direct_sampling() {
        let ens = GaussianEnsemble::new(2, 1, &[true, false], 3, &[8], &mut seeded(5)).unwrap();
        let states = [3.1, 0.5, -0.4, -2.0];
        let actions = [0.3, -0.9];
        let noise = [0.2, -1.0, 1.5, 0.1];
        let choice = [2, 0];
        let mut tape = Tape::new();
        let params = ens.param_constants(&mut tape);
        let s = tape.leaf(2, 2, states.to_vec());
        let a = tape.leaf(2, 1, actions.to_vec());
        let out = ens.step_tape(&mut tape, &params, s, a, &choice, &noise);
        for r in 0..2 {
            let st = &states[2 * r..2 * r + 2];
            let direct = ens.sample_next(choice[r], st, &actions[r..r + 1], &noise[2 * r..2 * r + 2]).unwrap();
            assert!((tape.value(out.next_state)[2 * r] - direct[0]).abs() < 1e-12);
            assert!((tape.value(out.next_state)[2 * r + 1] - direct[1]).abs() < 1e-12);
            let u = ens.ovr_uncertainty(st, &actions[r..r + 1]).unwrap();
            assert!((tape.value(out.uncertainty)[r] - u.value).abs() < 1e-10);
        }
    }

    #[test]
    fn member_order_does_not_change_uncertainty() {
        let ens = GaussianEnsemble::new(2, 1, &[true, false], 4, &[8], &mut seeded(6)).unwrap();
        let mut flipped = ens.clone();
        flipped.members_mut().reverse();
        let u = ens.ovr_uncertainty(&[0.4, -1.0], &[0.2]).unwrap().value;
        let v = flipped.ovr_uncertainty(&[0.4, -1.0], &[0.2]).unwrap().value;
        assert!((u - v).abs() < 1e-9);
    }
}
