use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kl::{ovr_categorical, UncertaintyEstimate};
use crate::buffer::TransitionBuffer;
use crate::error::{Error, Result};
use crate::mdp::sample_categorical;
use crate::rng::seeded;

/// Count-based next-state models with Dirichlet smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEnsemble {
    n_states: usize,
    n_actions: usize,
    smoothing: f64,
    /// One `S x A x S` count table per member.
    counts: Vec<Vec<f64>>,
}

impl CategoricalEnsemble {
    pub fn from_counts(n_states: usize, n_actions: usize, smoothing: f64, counts: Vec<Vec<f64>>) -> Result<Self> {
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(Error::param(format!("smoothing {smoothing} must be positive")));
        }
        if counts.is_empty() {
            return Err(Error::param("an ensemble needs at least one member"));
        }
        let size = n_states * n_actions * n_states;
        if counts.iter().any(|c| c.len() != size || c.iter().any(|x| !(*x >= 0.0 && x.is_finite()))) {
            return Err(Error::param("count tables must be nonnegative with S x A x S entries"));
        }
        Ok(Self {
            n_states,
            n_actions,
            smoothing,
            counts,
        })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn counts(&self, member: usize) -> &[f64] {
        &self.counts[member]
    }

    /// `p_i(. | s, a)`
    pub fn predict(&self, member: usize, s: usize, a: usize) -> Vec<f64> {
        let n = self.n_states;
        let row = &self.counts[member][(s * self.n_actions + a) * n..][..n];
        let total: f64 = row.iter().sum::<f64>() + self.smoothing * n as f64;
        row.iter().map(|c| (c + self.smoothing) / total).collect()
    }

    pub fn predictions(&self, s: usize, a: usize) -> Vec<Vec<f64>> {
        (0..self.k()).map(|i| self.predict(i, s, a)).collect()
    }

    /// Uniform mixture of the members.
    pub fn mean_prediction(&self, s: usize, a: usize) -> Vec<f64> {
        let preds = self.predictions(s, a);
        let k = preds.len() as f64;
        (0..self.n_states).map(|j| preds.iter().map(|p| p[j]).sum::<f64>() / k).collect()
    }

    pub fn ovr_uncertainty(&self, s: usize, a: usize) -> Result<UncertaintyEstimate> {
        let preds = self.predictions(s, a);
        let rows: Vec<&[f64]> = preds.iter().map(|p| p.as_slice()).collect();
        ovr_categorical(&rows)
    }

    /// Draws a member uniformly, then a next state from it.
    pub fn predict_next<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let member = rng.random_range(0..self.k());
        sample_categorical(&self.predict(member, s, a), rng)
    }
}

/// Fits `k` members, each on its own bootstrap resample of `buffer`.
pub fn train_categorical(
    buffer: &TransitionBuffer<usize, usize>,
    n_states: usize,
    n_actions: usize,
    k: usize,
    smoothing: f64,
    seed: u64,
) -> Result<CategoricalEnsemble> {
    if buffer.is_empty() {
        return Err(Error::param("cannot fit a model to an empty buffer"));
    }
    if k < 2 {
        return Err(Error::param(format!("ensemble size {k} must be at least 2")));
    }
    if buffer
        .iter()
        .any(|t| t.state >= n_states || t.next_state >= n_states || t.action >= n_actions)
    {
        return Err(Error::param("buffer holds a transition outside the state or action range"));
    }
    let mut rng = seeded(seed);
    let n = buffer.len();
    let mut counts = Vec::with_capacity(k);
    for _ in 0..k {
        let mut table = vec![0.0; n_states * n_actions * n_states];
        for _ in 0..n {
            let t = buffer.get(rng.random_range(0..n));
            table[(t.state * n_actions + t.action) * n_states + t.next_state] += 1.0;
        }
        counts.push(table);
    }
    CategoricalEnsemble::from_counts(n_states, n_actions, smoothing, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{random_mdp, TabularTransition};

    fn transition(s: usize, a: usize, next: usize) -> TabularTransition {
        TabularTransition {
            state: s,
            action: a,
            reward: 0.0,
            next_state: next,
            terminal: false,
            truncated: false,
        }
    }

    #[test]
    fn point_mass_data() {
        let buf = TransitionBuffer::from_records(100, (0..50).map(|_| transition(0, 0, 1))).unwrap();
        let ens = train_categorical(&buf, 3, 2, 5, 1e-12, 1).unwrap();
        for i in 0..5 {
            assert!(ens.predict(i, 0, 0)[1] > 1.0 - 1e-10);
        }
        assert_eq!(ens.predict_next(0, 0, &mut seeded(2)), 1);
    }

    #[test]
    fn unseen_pairs_are_uniform_and_valid() {
        let buf = TransitionBuffer::from_records(10, [transition(0, 0, 1)]).unwrap();
        let ens = train_categorical(&buf, 4, 2, 3, 1e-3, 1).unwrap();
        for i in 0..3 {
            let p = ens.predict(i, 2, 1);
            assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
            let row = ens.predict(i, 0, 0);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12 && row.iter().all(|x| *x > 0.0));
        }
    }

    #[test]
    fn large_sample_recovers_the_true_rows() {
        let mdp = random_mdp(3, 2, 0.9, 5).unwrap();
        let mut rng = seeded(6);
        let records = (0..100_000).map(|i| {
            let (s, a) = (i % 3, (i / 3) % 2);
            transition(s, a, mdp.sample_next(s, a, &mut rng))
        });
        let buf = TransitionBuffer::from_records(100_000, records).unwrap();
        let ens = train_categorical(&buf, 3, 2, 4, 1e-3, 7).unwrap();
        for i in 0..4 {
            for s in 0..3 {
                for a in 0..2 {
                    let tv: f64 =
                        0.5 * ens.predict(i, s, a).iter().zip(mdp.row(s, a)).map(|(p, q)| (p - q).abs()).sum::<f64>();
                    assert!(tv < 0.02, "member {i} ({s},{a}) tv {tv}");
                }
            }
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let buf = TransitionBuffer::from_records(100, (0..30).map(|i| transition(i % 2, 0, (i * 7) % 3))).unwrap();
        let a = train_categorical(&buf, 3, 1, 3, 0.1, 9).unwrap();
        let b = train_categorical(&buf, 3, 1, 3, 0.1, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_frequencies() {
        let mut c0 = vec![0.0; 2 * 2];
        let mut c1 = vec![0.0; 2 * 2];
        c0[0] = 1e9;
        c1[1] = 1e9;
        let ens = CategoricalEnsemble::from_counts(2, 1, 1e-9, vec![c0, c1]).unwrap();
        let mut rng = seeded(8);
        let n = 100_000;
        let ones = (0..n).filter(|_| ens.predict_next(0, 0, &mut rng) == 1).count();
        let tv = (ones as f64 / n as f64 - 0.5).abs();
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn invalid_inputs() {
        let empty = TransitionBuffer::<usize, usize>::new(5).unwrap();
        assert!(train_categorical(&empty, 2, 2, 3, 0.1, 0).is_err());
        let buf = TransitionBuffer::from_records(5, [transition(0, 0, 1)]).unwrap();
        assert!(train_categorical(&buf, 2, 2, 1, 0.1, 0).is_err());
        assert!(train_categorical(&buf, 1, 2, 2, 0.1, 0).is_err());
    }
}
