//! Property suites exposed by name to the command-line harness.
//!
//! Each suite draws its instances from a single seed, checks one family of
//! guarantees exactly, and reports the worst violation it saw.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agent::{farsighted_gradient_continuous, farsighted_gradient_tabular, ContinuousCritic, ContinuousStack};
use crate::agent::{Hyperparams, RolloutNoise, TabularStack};
use crate::ensemble::{ovr_categorical, ovr_gaussian, ovr_gaussian_tape, GaussianEnsemble};
use crate::error::{Error, Result};
use crate::mdp::{random_mdp, ContinuousEnv, Pendulum, TabularMDP};
use crate::nn::{Mlp, SquashedGaussianPolicy, Tape, Var};
use crate::rng::Rng as StreamRng;
use crate::soft_pi::{
    distill_improve, extended_policy_iteration, horizon_bound_report, soft_policy_evaluation, soft_value_iteration,
    CheckKind, TabularPolicy,
};

/// Outcome of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: usize,
    pub passed: bool,
    /// The checked error measure; the pass threshold is per suite.
    pub violation: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub seed: u64,
    pub case_count: usize,
    pub passed: usize,
    pub failed: usize,
    pub worst_violation: f64,
    pub cases: Vec<CaseResult>,
}

impl VerificationReport {
    pub fn new(suite: &str, seed: u64, cases: Vec<CaseResult>) -> Self {
        let passed = cases.iter().filter(|c| c.passed).count();
        Self {
            suite: suite.to_string(),
            seed,
            case_count: cases.len(),
            passed,
            failed: cases.len() - passed,
            worst_violation: cases.iter().map(|c| c.violation).fold(0.0, f64::max),
            cases,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    /// Pretty JSON with keys in sorted order.
    pub fn to_json_string(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        Ok(text)
    }
}

/// A named family of checks.
pub trait VerifySuite: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn default_cases(&self) -> usize;
    fn run(&self, seed: u64, cases: usize) -> Result<VerificationReport>;
}

/// Independent generator for case `case` of a run seeded with `seed`.
pub fn case_rng(seed: u64, case: usize) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(case as u64 + 1);
    rng
}

/// A random MDP with `2..=max_states` states and `2..=max_actions` actions.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_actions: usize) -> Result<TabularMDP> {
    let ns = rng.random_range(2..=max_states);
    let na = rng.random_range(2..=max_actions);
    let gamma = rng.random_range(0.5..0.95);
    random_mdp(ns, na, gamma, rng.random())
}

fn alpha_for<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.05..1.0)
}

pub const LEMMA1_HORIZONS: [usize; 4] = [1, 2, 3, 5];
pub const THM1_HORIZONS: [usize; 3] = [1, 2, 3];
pub const LEMMA2_HORIZONS: [usize; 7] = [1, 2, 3, 4, 5, 6, 7];
const SLACK: f64 = 1e-9;

/// Distilling the `H`-step plan never lowers the soft value.
pub struct Lemma1Suite;

impl VerifySuite for Lemma1Suite {
    fn name(&self) -> &'static str {
        "lemma1"
    }

    fn description(&self) -> &'static str {
        "monotone improvement of distilled H-step plans, H in {1,2,3,5}"
    }

    fn default_cases(&self) -> usize {
        200
    }

    fn run(&self, seed: u64, cases: usize) -> Result<VerificationReport> {
        let mut out = Vec::with_capacity(cases);
        for case in 0..cases {
            let mut rng = case_rng(seed, case);
            let mdp = random_instance(&mut rng, 8, 4)?;
            let alpha = alpha_for(&mut rng);
            let pi_old = TabularPolicy::random(mdp.n_states(), mdp.n_actions(), &mut rng);
            let v_old = soft_policy_evaluation(&mdp, &pi_old, alpha)?.v;
            let mut worst: f64 = 0.0;
            for h in LEMMA1_HORIZONS {
                let pi_new = distill_improve(&mdp, &pi_old, h, alpha)?;
                let v_new = soft_policy_evaluation(&mdp, &pi_new, alpha)?.v;
                for (o, n) in v_old.iter().zip(&v_new) {
                    worst = worst.max(o - n);
                }
            }
            out.push(CaseResult {
                case,
                passed: worst <= SLACK,
                violation: worst.max(0.0),
                detail: format!("{}x{} gamma {:.3}", mdp.n_states(), mdp.n_actions(), mdp.gamma()),
            });
        }
        Ok(VerificationReport::new(self.name(), seed, out))
    }
}

/// Extended policy iteration from many starts reaches the soft optimum.
pub struct Theorem1Suite {
    pub starts: usize,
}

impl VerifySuite for Theorem1Suite {
    fn name(&self) -> &'static str {
        "thm1"
    }

    fn description(&self) -> &'static str {
        "extended policy iteration converges to the soft value iteration optimum for H in {1,2,3}"
    }

    fn default_cases(&self) -> usize {
        50
    }

    fn run(&self, seed: u64, cases: usize) -> Result<VerificationReport> {
        let mut out = Vec::with_capacity(cases);
        for case in 0..cases {
            let mut rng = case_rng(seed, case);
            let mdp = random_instance(&mut rng, 6, 3)?;
            let alpha = alpha_for(&mut rng);
            let opt = soft_value_iteration(&mdp, alpha, 1e-12, 10_000_000)?;
            let mut worst: f64 = 0.0;
            let mut failures = 0;
            for _ in 0..self.starts {
                let pi0 = TabularPolicy::random(mdp.n_states(), mdp.n_actions(), &mut rng);
                for h in THM1_HORIZONS {
                    match extended_policy_iteration(&mdp, &pi0, h, alpha, 1e-8, 10_000) {
                        Ok(run) => worst = worst.max(crate::soft_pi::sup_norm_diff(&run.values.v, &opt.v)),
                        Err(Error::NonConvergence { .. }) => failures += 1,
                        Err(e) => return Err(e),
                    }
                }
            }
            out.push(CaseResult {
                case,
                passed: failures == 0 && worst <= 1e-6,
                violation: worst,
                detail: format!(
                    "{}x{} gamma {:.3}, {} of {} runs did not converge",
                    mdp.n_states(),
                    mdp.n_actions(),
                    mdp.gamma(),
                    failures,
                    self.starts * THM1_HORIZONS.len()
                ),
            });
        }
        Ok(VerificationReport::new(self.name(), seed, out))
    }
}

/// The optimal `H`-step objective is nondecreasing in `H`.
pub struct Lemma2Suite;

/// The optimality gap of the `H`-step objective shrinks at least like `gamma^H`.
pub struct Theorem2Suite;

fn horizon_case(seed: u64, case: usize, checks: &[CheckKind], ratio_check: bool) -> Result<CaseResult> {
    let mut rng = case_rng(seed, case);
    let mdp = random_instance(&mut rng, 8, 4)?;
    let alpha = alpha_for(&mut rng);
    let pi_old = TabularPolicy::random(mdp.n_states(), mdp.n_actions(), &mut rng);
    let report = horizon_bound_report(&mdp, &pi_old, &LEMMA2_HORIZONS, alpha)?;
    let mut worst = report
        .violations
        .iter()
        .filter(|v| checks.contains(&v.check))
        .map(|v| v.magnitude)
        .fold(0.0, f64::max);
    let mut passed = worst == 0.0;
    let mut detail = format!("{}x{} gamma {:.3}", mdp.n_states(), mdp.n_actions(), mdp.gamma());
    if ratio_check {
        if let Some(m) = crate::stats::median(&report.gap_ratios()) {
            detail.push_str(&format!(", median gap ratio {m:.4}"));
            if m > mdp.gamma() + 0.01 {
                passed = false;
                worst = worst.max(m - mdp.gamma());
            }
        }
    }
    Ok(CaseResult {
        case,
        passed,
        violation: worst,
        detail,
    })
}

impl VerifySuite for Lemma2Suite {
    fn name(&self) -> &'static str {
        "lemma2"
    }

    fn description(&self) -> &'static str {
        "the optimal H-step objective is nondecreasing for H = 1..7"
    }

    fn default_cases(&self) -> usize {
        100
    }

    fn run(&self, seed: u64, cases: usize) -> Result<VerificationReport> {
        let out = (0..cases)
            .map(|c| horizon_case(seed, c, &[CheckKind::ObjectiveMonotoneInHorizon], false))
            .collect::<Result<Vec<_>>>()?;
        Ok(VerificationReport::new(self.name(), seed, out))
    }
}

impl VerifySuite for Theorem2Suite {
    fn name(&self) -> &'static str {
        "thm2"
    }

    fn description(&self) -> &'static str {
        "gap to the optimum within gamma^H times the initial gap, distilled value above the objective, geometric decay"
    }

    fn default_cases(&self) -> usize {
        100
    }

    fn run(&self, seed: u64, cases: usize) -> Result<VerificationReport> {
        let checks = [CheckKind::GapWithinBound, CheckKind::DistilledDominatesObjective];
        let out = (0..cases)
            .map(|c| horizon_case(seed, c, &checks, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(VerificationReport::new(self.name(), seed, out))
    }
}

/// Relative error with an absolute floor: `|g - fd| / max(|fd|, floor / rel)`,
/// so a value at most `rel` means `|g - fd| <= max(rel |fd|, floor)`.
pub fn gradient_error(analytic: f64, numeric: f64, rel: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(floor / rel)
}

pub const GRAD_REL_TOL: f64 = 1e-4;
pub const GRAD_ABS_FLOOR: f64 = 1e-7;
const FD_STEP: f64 = 1e-6;

/// Compares the reverse sweep of `build` at `x0` with central differences
/// on every coordinate (or the listed ones). Returns the worst error and
/// the name-free coordinate where it occurred.
pub fn check_tape_gradient(
    x0: &[f64],
    rows: usize,
    coords: Option<&[usize]>,
    build: &dyn Fn(&mut Tape, Var) -> Var,
) -> Result<(f64, usize)> {
    let mut tape = Tape::new();
    let x = tape.leaf(rows, x0.len() / rows, x0.to_vec());
    let y = build(&mut tape, x);
    let g = tape.backward(y)?.wrt(x)?;
    let eval = |p: &[f64]| -> f64 {
        let mut t = Tape::new();
        let v = t.leaf(rows, p.len() / rows, p.to_vec());
        let out = build(&mut t, v);
        t.scalar(out)
    };
    let all: Vec<usize> = (0..x0.len()).collect();
    let mut worst = (0.0, 0);
    for &k in coords.unwrap_or(&all) {
        let mut p = x0.to_vec();
        p[k] = x0[k] + FD_STEP;
        let plus = eval(&p);
        p[k] = x0[k] - FD_STEP;
        let minus = eval(&p);
        let fd = (plus - minus) / (2.0 * FD_STEP);
        let e = gradient_error(g[k], fd, GRAD_REL_TOL, GRAD_ABS_FLOOR);
        if e > worst.0 || e.is_nan() {
            worst = (e, k);
        }
    }
    Ok(worst)
}

fn normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Every tape operation in one composite expression.
fn composite(t: &mut Tape, a: Var, k: &[f64]) -> Var {
    let t1 = t.tanh(a);
    let s = t.scale(a, 0.3);
    let t2 = t.exp(s);
    let t3 = t.ln(a);
    let t4 = t.sin(a);
    let t5 = t.cos(a);
    let t6 = t.square(a);
    let t7 = t.softplus(a);
    let t8 = t.recip(a);
    let shifted = t.affine(a, 1.0, 0.5);
    let t9 = t.wrap_angle(shifted);
    let b = t.add(t1, t2);
    let b = t.sub(b, t3);
    let b = t.mul(b, t4);
    let b = t.add(b, t8);
    let b = t.mul(b, t9);
    let ca = t.column_affine(b, &[1.5, -0.5, 2.0], &[0.1, 0.2, 0.3]);
    let mc = t.mul_const(ca, k.to_vec());
    let sl = t.slice_cols(mc, 1, 2);
    let cc = t.concat_cols(&[sl, t5]);
    let sc = t.sum_cols(cc);
    let bc = t.broadcast_cols(sc, 3);
    let m2 = t.mul(bc, t6);
    let sel = t.select_rows(m2, &[1, 0, 1]);
    let mean = t.mean(sel);
    let rest = t.sum(t7);
    t.add(mean, rest)
}

/// Reverse-mode gradients of the building blocks and of the full planning
/// objective against central differences.
pub struct GradcheckSuite;

impl GradcheckSuite {
    fn case(&self, seed: u64, case: usize) -> Result<Vec<(&'static str, f64)>> {
        let mut rng = case_rng(seed, case);
        let mut results = Vec::new();

        let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.5..1.5)).collect();
        let k: Vec<f64> = normals(&mut rng, 6);
        results.push(("tape ops", check_tape_gradient(&x, 2, None, &|t, v| composite(t, v, &k))?.0));

        let mlp = Mlp::new(&[3, 5, 2], &mut rng)?;
        let input = normals(&mut rng, 6);
        let by_params = |t: &mut Tape, p: Var| {
            let xi = t.constant(2, 3, input.clone());
            let y = mlp.forward_tape(t, p, xi);
            let y2 = t.square(y);
            t.sum(y2)
        };
        results.push(("mlp params", check_tape_gradient(mlp.params(), 1, None, &by_params)?.0));
        let by_input = |t: &mut Tape, xi: Var| {
            let p = mlp.param_constant(t);
            let y = mlp.forward_tape(t, p, xi);
            let y = t.tanh(y);
            t.sum(y)
        };
        results.push(("mlp input", check_tape_gradient(&input, 2, None, &by_input)?.0));

        let policy = SquashedGaussianPolicy::new(3, &[4], 2, 1.5, &mut rng)?;
        let pin = normals(&mut rng, 6);
        let pnoise = normals(&mut rng, 4);
        let by_policy = |t: &mut Tape, p: Var| {
            let xi = t.constant(2, 3, pin.clone());
            let (a, logp) = policy.sample_tape(t, p, xi, &pnoise);
            let sa = t.sum(a);
            let sl = t.sum(logp);
            t.add(sa, sl)
        };
        results.push(("policy sample", check_tape_gradient(policy.net.params(), 1, None, &by_policy)?.0));

        let env = Pendulum::default();
        let sa: Vec<f64> = vec![
            rng.random_range(-2.5..2.5),
            rng.random_range(-3.0..3.0),
            rng.random_range(-0.9..0.9),
        ];
        let by_reward = |t: &mut Tape, v: Var| {
            let s = t.slice_cols(v, 0, 2);
            let a = t.slice_cols(v, 2, 1);
            let r = env.reward_tape(t, s, a);
            t.sum(r)
        };
        results.push(("reward", check_tape_gradient(&sa, 1, None, &by_reward)?.0));

        let kk = rng.random_range(2..=4);
        let model = GaussianEnsemble::new(2, 1, &[true, false], kk, &[6], &mut rng)?;
        let choice: Vec<usize> = (0..2).map(|_| rng.random_range(0..kk)).collect();
        let mnoise = normals(&mut rng, 4);
        let w = normals(&mut rng, 4);
        let states = [
            rng.random_range(-2.5..2.5),
            rng.random_range(-1.0..1.0),
            rng.random_range(-2.5..2.5),
            rng.random_range(-1.0..1.0),
        ];
        let by_action = |t: &mut Tape, a: Var| {
            let params = model.param_constants(t);
            let s = t.constant(2, 2, states.to_vec());
            let step = model.step_tape(t, &params, s, a, &choice, &mnoise);
            let weighted = t.mul_const(step.next_state, w.clone());
            let ws = t.sum(weighted);
            let us = t.sum(step.uncertainty);
            t.add(ws, us)
        };
        let acts = [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)];
        results.push(("model step", check_tape_gradient(&acts, 2, None, &by_action)?.0));

        // means (k x 2), logvars (k x 2) stacked in one leaf.
        let kg = rng.random_range(2..=5);
        let mv: Vec<f64> = (0..kg * 4)
            .map(|i| if i % 4 < 2 { rng.sample(StandardNormal) } else { rng.random_range(-2.0..1.0) })
            .collect();
        let by_ovr = |t: &mut Tape, v: Var| {
            let mut means = Vec::new();
            let mut vars = Vec::new();
            let mut logvars = Vec::new();
            for i in 0..kg {
                let row = t.select_rows(v, &[i]);
                means.push(t.slice_cols(row, 0, 2));
                let lv = t.slice_cols(row, 2, 2);
                logvars.push(lv);
                vars.push(t.exp(lv));
            }
            let u = ovr_gaussian_tape(t, &means, &vars, &logvars);
            t.sum(u)
        };
        results.push(("ovr", check_tape_gradient(&mv, kg, None, &by_ovr)?.0));

        results.push(("planning objective", self.planning_case(&mut rng, &model)?));
        results.push(("tabular planning objective", self.tabular_planning_case(&mut rng)?));
        Ok(results)
    }

    /// Algorithm-level check: two planned steps from three start states,
    /// every head parameter perturbed.
    fn planning_case(&self, rng: &mut StreamRng, model: &GaussianEnsemble) -> Result<f64> {
        let hp = Hyperparams {
            max_horizon: 2,
            uncertainty_threshold: None,
            hidden: vec![4],
            beta: 0.5,
            ..Hyperparams::default()
        };
        let angle = [true, false];
        let stack = ContinuousStack::new(&angle, 1, 1.0, &hp, rng)?;
        let critic = ContinuousCritic::new(&angle, 1, &hp, rng)?;
        let starts: Vec<Vec<f64>> = (0..3)
            .map(|_| vec![rng.random_range(-2.5..2.5), rng.random_range(-1.0..1.0)])
            .collect();
        let noise = RolloutNoise::draw(rng, 2, 3, 1, 2, model.k());
        let env = Pendulum::default();
        let out = farsighted_gradient_continuous(&starts, &stack, model, &env, &critic, &hp, &noise)?;
        let mut worst: f64 = 0.0;
        for h in 0..2 {
            let g = out.grads[h].as_ref().ok_or_else(|| Error::Training("head without gradient".into()))?;
            for k in 0..g.len() {
                let eval = |delta: f64| -> Result<f64> {
                    let mut s = stack.clone();
                    s.heads[h].net.params_mut()[k] += delta;
                    Ok(farsighted_gradient_continuous(&starts, &s, model, &env, &critic, &hp, &noise)?.objective)
                };
                let fd = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
                worst = worst.max(gradient_error(g[k], fd, GRAD_REL_TOL, GRAD_ABS_FLOOR));
            }
        }
        Ok(worst)
    }

    fn tabular_planning_case(&self, rng: &mut StreamRng) -> Result<f64> {
        let mdp = random_instance(rng, 5, 3)?;
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let hp = Hyperparams {
            max_horizon: 2,
            uncertainty_threshold: None,
            gamma: mdp.gamma(),
            ..Hyperparams::default()
        };
        let mut stack = TabularStack::new(ns, na, 2, 1e-2)?;
        for h in 0..2 {
            stack.set_logits(h, normals(rng, ns * na))?;
        }
        let v = normals(rng, ns);
        let terminal = vec![false; ns];
        let starts: Vec<usize> = (0..4).map(|_| rng.random_range(0..ns)).collect();
        let out = farsighted_gradient_tabular(&starts, &stack, &mdp, mdp.rewards(), &terminal, &v, &hp)?;
        let mut worst: f64 = 0.0;
        for h in 0..2 {
            for k in 0..ns * na {
                let eval = |delta: f64| -> Result<f64> {
                    let mut s = stack.clone();
                    let mut l = s.logits(h).to_vec();
                    l[k] += delta;
                    s.set_logits(h, l)?;
                    Ok(farsighted_gradient_tabular(&starts, &s, &mdp, mdp.rewards(), &terminal, &v, &hp)?.objective)
                };
                let fd = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
                worst = worst.max(gradient_error(out.grads[h][k], fd, GRAD_REL_TOL, GRAD_ABS_FLOOR));
            }
        }
        Ok(worst)
    }
}

impl VerifySuite for GradcheckSuite {
    fn name(&self) -> &'static str {
        "gradcheck"
    }

    fn description(&self) -> &'static str {
        "reverse-mode gradients of every differentiable block and the planning objective vs central differences"
    }

    fn default_cases(&self) -> usize {
        100
    }

    fn run(&self, seed: u64, cases: usize) -> Result<VerificationReport> {
        let mut out = Vec::with_capacity(cases);
        for case in 0..cases {
            let checks = self.case(seed, case)?;
            let (name, worst) = checks
                .iter()
                .copied()
                .fold(("none", 0.0), |acc, c| if c.1 > acc.1 || c.1.is_nan() { c } else { acc });
            out.push(CaseResult {
                case,
                passed: checks.iter().all(|c| c.1 <= GRAD_REL_TOL),
                violation: worst,
                detail: format!("worst block: {name}"),
            });
        }
        Ok(VerificationReport::new(self.name(), seed, out))
    }
}

/// `KL(N(m1, v1) || N(m2, v2))` by composite Simpson quadrature over
/// `m1 +- 12 sd`, integrating `p (ln p - ln q)` pointwise.
pub fn kl_gaussian_quadrature(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    const N: usize = 20_000;
    let sd = v1.sqrt();
    let (lo, hi) = (m1 - 12.0 * sd, m1 + 12.0 * sd);
    let h = (hi - lo) / N as f64;
    let f = |x: f64| {
        let lp = -0.5 * (x - m1).powi(2) / v1 - 0.5 * (2.0 * std::f64::consts::PI * v1).ln();
        let lq = -0.5 * (x - m2).powi(2) / v2 - 0.5 * (2.0 * std::f64::consts::PI * v2).ln();
        lp.exp() * (lp - lq)
    };
    let mut total = f(lo) + f(hi);
    for i in 1..N {
        total += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    total * h / 3.0
}

/// One-vs-rest disagreement: zero for identical members, a hand-checked
/// two-model value, agreement with quadrature, and nonnegativity.
pub struct OvrSuite;

impl OvrSuite {
    fn case(&self, seed: u64, case: usize) -> Result<CaseResult> {
        let mut rng = case_rng(seed, case);
        let mut worst: f64 = 0.0;
        let mut ok = true;

        let hand = ovr_categorical(&[&[0.6, 0.4], &[0.4, 0.6]])?.value;
        let e = (hand - 0.4 * 1.5f64.ln()).abs();
        ok &= e <= 1e-9;
        worst = worst.max(e);

        let k = rng.random_range(2..=7);
        let n = rng.random_range(2..=6);
        let row = crate::mdp::tabular_dirichlet_row(n, &mut rng);
        let same: Vec<&[f64]> = (0..k).map(|_| row.as_slice()).collect();
        let u = ovr_categorical(&same)?.value;
        ok &= u.abs() <= 1e-12;
        worst = worst.max(u.abs());

        let d = rng.random_range(1..=3);
        let mean = normals(&mut rng, d);
        let var: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..2.0)).collect();
        let gm: Vec<&[f64]> = (0..k).map(|_| mean.as_slice()).collect();
        let gv: Vec<&[f64]> = (0..k).map(|_| var.as_slice()).collect();
        let u = ovr_gaussian(&gm, &gv)?.value;
        ok &= u.abs() <= 1e-12;
        worst = worst.max(u.abs());

        let rows: Vec<Vec<f64>> = (0..k).map(|_| crate::mdp::tabular_dirichlet_row(n, &mut rng)).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        ok &= ovr_categorical(&refs)?.value >= 0.0;

        let means: Vec<Vec<f64>> = (0..k).map(|_| normals(&mut rng, d)).collect();
        let vars: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(0.2..2.0)).collect())
            .collect();
        let mr: Vec<&[f64]> = means.iter().map(|m| m.as_slice()).collect();
        let vr: Vec<&[f64]> = vars.iter().map(|v| v.as_slice()).collect();
        let u = ovr_gaussian(&mr, &vr)?.value;
        ok &= u >= 0.0;
        let mut quad = 0.0;
        for i in 0..k {
            let (m, v) = crate::ensemble::rest_moments(&mr, &vr, i);
            for j in 0..d {
                quad += kl_gaussian_quadrature(means[i][j], vars[i][j], m[j], v[j]);
            }
        }
        let e = (u - quad).abs();
        ok &= e <= 1e-6;
        worst = worst.max(e);

        Ok(CaseResult {
            case,
            passed: ok,
            violation: worst,
            detail: format!("K = {k}, {d} Gaussian dims, {n} categories"),
        })
    }
}

impl VerifySuite for OvrSuite {
    fn name(&self) -> &'static str {
        "ovr"
    }

    fn description(&self) -> &'static str {
        "one-vs-rest disagreement: identical members, hand case, quadrature, nonnegativity"
    }

    fn default_cases(&self) -> usize {
        20
    }

    fn run(&self, seed: u64, cases: usize) -> Result<VerificationReport> {
        let out = (0..cases).map(|c| self.case(seed, c)).collect::<Result<Vec<_>>>()?;
        Ok(VerificationReport::new(self.name(), seed, out))
    }
}

/// Runs every other suite at its default size; `cases`, when nonzero,
/// caps each one.
pub struct AllSuites {
    pub suites: Vec<Box<dyn VerifySuite>>,
}

impl VerifySuite for AllSuites {
    fn name(&self) -> &'static str {
        "all"
    }

    fn description(&self) -> &'static str {
        "every suite in turn"
    }

    fn default_cases(&self) -> usize {
        0
    }

    fn run(&self, seed: u64, cases: usize) -> Result<VerificationReport> {
        let mut out = Vec::new();
        for suite in &self.suites {
            let n = if cases == 0 { suite.default_cases() } else { cases.min(suite.default_cases()) };
            for c in suite.run(seed, n)?.cases {
                out.push(CaseResult {
                    case: out.len(),
                    detail: format!("{} #{}: {}", suite.name(), c.case, c.detail),
                    ..c
                });
            }
        }
        Ok(VerificationReport::new(self.name(), seed, out))
    }
}
