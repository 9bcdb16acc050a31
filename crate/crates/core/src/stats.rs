//! Rank statistics for comparing training runs.

use crate::error::{Error, Result};

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation: Pearson correlation of average ranks.
/// `None` when either series is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::param("series lengths differ"));
    }
    if x.len() < 2 {
        return Err(Error::param("rank correlation needs at least two points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::param("rank correlation needs finite values"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// One-sided sign test of `P(a < b) > 1/2` over paired samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    /// Pairs with `a < b`.
    pub wins: usize,
    /// Pairs that differ.
    pub trials: usize,
    /// `P(X >= wins)` for `X ~ Binomial(trials, 1/2)`.
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::param("sign test needs equally long, non-empty samples"));
    }
    let mut wins = 0;
    let mut trials = 0;
    for (x, y) in a.iter().zip(b) {
        if x != y {
            trials += 1;
            if x < y {
                wins += 1;
            }
        }
    }
    let p_value = (wins..=trials).map(|k| binomial(trials, k)).sum::<f64>() / 2f64.powi(trials as i32);
    Ok(SignTest { wins, trials, p_value })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |c, i| c * (n - i) as f64 / (i + 1) as f64)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_share_their_mean_rank() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_of_monotone_series() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.1, 0.5, 0.6, 10.0, 11.0];
        assert!((spearman(&x, &y).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = y.iter().rev().copied().collect();
        assert!((spearman(&x, &rev).unwrap().unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 5]).unwrap(), None);
        assert!(spearman(&x[..1], &y[..1]).is_err());
    }

    #[test]
    fn spearman_textbook_value() {
        // d = (0, 1, -1, 0, 0): rho = 1 - 6 * 2 / (5 * 24) = 0.9
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap().unwrap();
        assert!((rho - 0.9).abs() < 1e-12);
    }

    #[test]
    fn five_of_five_is_significant_four_is_not() {
        let t = sign_test(&[1.0; 5], &[2.0; 5]).unwrap();
        assert_eq!((t.wins, t.trials), (5, 5));
        assert!((t.p_value - 1.0 / 32.0).abs() < 1e-15);
        let t = sign_test(&[1.0, 1.0, 1.0, 1.0, 3.0], &[2.0; 5]).unwrap();
        assert!((t.p_value - 6.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
