use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Tape, Var};

/// One-vs-rest disagreement `u(s, a) = sum_i KL(p_i || p_{-i})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEstimate {
    pub value: f64,
    pub per_model_kl: Vec<f64>,
}

impl UncertaintyEstimate {
    fn from_terms(per_model_kl: Vec<f64>) -> Self {
        Self {
            value: per_model_kl.iter().sum(),
            per_model_kl,
        }
    }
}

/// `sum p ln(p / q)`, with `0 ln 0 = 0`.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// KL between diagonal Gaussians given means and variances.
pub fn kl_gaussian_diag(mu_p: &[f64], var_p: &[f64], mu_q: &[f64], var_q: &[f64]) -> f64 {
    let mut total = 0.0;
    for j in 0..mu_p.len() {
        let ratio = var_p[j] / var_q[j];
        let diff = mu_p[j] - mu_q[j];
        // ratio - 1 - ln(ratio) is nonnegative; ln_1p keeps it so near ratio = 1.
        let shape = (ratio - 1.0) - (ratio - 1.0).ln_1p();
        total += 0.5 * (shape.max(0.0) + diff * diff / var_q[j]);
    }
    total
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::param(format!("one-vs-rest needs at least two models, got {k}")));
    }
    Ok(())
}

/// The arithmetic mean of every row except `skip`.
pub fn rest_mean(rows: &[&[f64]], skip: usize) -> Vec<f64> {
    let n = rows[0].len();
    let mut out = vec![0.0; n];
    for (_, row) in rows.iter().enumerate().filter(|(j, _)| *j != skip) {
        for (o, x) in out.iter_mut().zip(row.iter()) {
            *o += x;
        }
    }
    let denom = (rows.len() - 1) as f64;
    out.iter_mut().for_each(|o| *o /= denom);
    out
}

/// Moment-matched Gaussian of every member except `skip`: the mean of the
/// means, and the mean of `var + (mu - mean)^2`.
pub fn rest_moments(means: &[&[f64]], vars: &[&[f64]], skip: usize) -> (Vec<f64>, Vec<f64>) {
    let m = rest_mean(means, skip);
    let d = m.len();
    let mut v = vec![0.0; d];
    for j in (0..means.len()).filter(|&j| j != skip) {
        for c in 0..d {
            let dev = means[j][c] - m[c];
            v[c] += vars[j][c] + dev * dev;
        }
    }
    let denom = (means.len() - 1) as f64;
    v.iter_mut().for_each(|x| *x /= denom);
    (m, v)
}

pub fn ovr_categorical(rows: &[&[f64]]) -> Result<UncertaintyEstimate> {
    check_k(rows.len())?;
    let terms = (0..rows.len()).map(|i| kl_categorical(rows[i], &rest_mean(rows, i))).collect();
    Ok(UncertaintyEstimate::from_terms(terms))
}

pub fn ovr_gaussian(means: &[&[f64]], vars: &[&[f64]]) -> Result<UncertaintyEstimate> {
    check_k(means.len())?;
    if vars.len() != means.len() {
        return Err(Error::param("mean and variance lists differ in length"));
    }
    let terms = (0..means.len())
        .map(|i| {
            let (m, v) = rest_moments(means, vars, i);
            kl_gaussian_diag(means[i], vars[i], &m, &v)
        })
        .collect();
    Ok(UncertaintyEstimate::from_terms(terms))
}

/// Tape form of [`ovr_gaussian`] over a batch. Each member contributes a
/// `B x d` mean, variance, and log-variance node; the result is `B x 1`.
pub fn ovr_gaussian_tape(tape: &mut Tape, means: &[Var], vars: &[Var], logvars: &[Var]) -> Var {
    let k = means.len();
    assert!(k >= 2 && vars.len() == k && logvars.len() == k, "one-vs-rest needs matching lists of >= 2 members");
    let inv = 1.0 / (k - 1) as f64;
    let mut total: Option<Var> = None;
    for i in 0..k {
        let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        let mut mean_sum = means[others[0]];
        for &j in &others[1..] {
            mean_sum = tape.add(mean_sum, means[j]);
        }
        let m = tape.scale(mean_sum, inv);
        let mut second: Option<Var> = None;
        for &j in &others {
            let dev = tape.sub(means[j], m);
            let dev2 = tape.square(dev);
            let term = tape.add(vars[j], dev2);
            second = Some(match second {
                Some(s) => tape.add(s, term),
                None => term,
            });
        }
        let s2 = tape.scale(second.expect("at least one other member"), inv);
        // 0.5 * [ln s2 - ln v_i + (v_i + (mu_i - m)^2) / s2 - 1]
        let ln_s2 = tape.ln(s2);
        let log_ratio = tape.sub(ln_s2, logvars[i]);
        let diff = tape.sub(means[i], m);
        let diff2 = tape.square(diff);
        let num = tape.add(vars[i], diff2);
        let inv_s2 = tape.recip(s2);
        let quad = tape.mul(num, inv_s2);
        let inner = tape.add(log_ratio, quad);
        let per_dim = tape.affine(inner, 0.5, -0.5);
        let kl = tape.sum_cols(per_dim);
        total = Some(match total {
            Some(t) => tape.add(t, kl),
            None => kl,
        });
    }
    total.expect("k >= 2")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_members_have_zero_disagreement() {
        let row = [0.2, 0.5, 0.3];
        let u = ovr_categorical(&[&row, &row, &row, &row]).unwrap();
        assert!(u.value.abs() <= 1e-12);
        let mu = [0.3, -1.2];
        let var = [0.04, 0.5];
        let g = ovr_gaussian(&[&mu, &mu, &mu], &[&var, &var, &var]).unwrap();
        assert!(g.value.abs() <= 1e-12);
    }

    #[test]
    fn two_model_hand_case() {
        let u = ovr_categorical(&[&[0.6, 0.4], &[0.4, 0.6]]).unwrap();
        assert!((u.value - 0.4 * 1.5f64.ln()).abs() < 1e-12);
        assert!((u.value - u.per_model_kl.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_kl_closed_form() {
        // KL(N(0,1) || N(1,4)) = ln 2 + (1 + 1) / 8 - 1/2
        let kl = kl_gaussian_diag(&[0.0], &[1.0], &[1.0], &[4.0]);
        assert!((kl - (2f64.ln() + 0.25 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn rest_moments_match_definition() {
        let means: [&[f64]; 3] = [&[0.0], &[1.0], &[3.0]];
        let vars: [&[f64]; 3] = [&[1.0], &[0.5], &[2.0]];
        let (m, v) = rest_moments(&means, &vars, 0);
        assert_eq!(m, vec![2.0]);
        assert!((v[0] - (0.5 + 1.0 + 2.0 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn fewer_than_two_models_is_an_error() {
        assert!(ovr_categorical(&[&[1.0]]).is_err());
        assert!(ovr_gaussian(&[&[0.0]], &[&[1.0]]).is_err());
    }

    #[test]
    fn tape_matches_direct() {
        let means = [[0.1, -0.3], [0.4, 0.0], [-0.2, 0.2]];
        let vars = [[0.05, 0.2], [0.1, 0.1], [0.3, 0.02]];
        let direct = ovr_gaussian(
            &means.iter().map(|m| &m[..]).collect::<Vec<_>>(),
            &vars.iter().map(|v| &v[..]).collect::<Vec<_>>(),
        )
        .unwrap();
        let mut t = Tape::new();
        let mv: Vec<Var> = means.iter().map(|m| t.leaf(1, 2, m.to_vec())).collect();
        let vv: Vec<Var> = vars.iter().map(|v| t.leaf(1, 2, v.to_vec())).collect();
        let lv: Vec<Var> = vv.iter().map(|&v| t.ln(v)).collect();
        let u = ovr_gaussian_tape(&mut t, &mv, &vv, &lv);
        assert!((t.value(u)[0] - direct.value).abs() < 1e-12);
    }
}
