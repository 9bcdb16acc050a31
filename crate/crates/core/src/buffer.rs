//! Fixed-capacity replay storage.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Transition;

/// Ring buffer of transitions; once full, each insert evicts the oldest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionBuffer<S, A> {
    capacity: usize,
    records: Vec<Transition<S, A>>,
    /// Slot the next insert writes to once the buffer is full.
    head: usize,
    inserted: u64,
}

impl<S: Clone, A: Clone> TransitionBuffer<S, A> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::param("buffer capacity must be positive"));
        }
        Ok(Self {
            capacity,
            records: Vec::new(),
            head: 0,
            inserted: 0,
        })
    }

    pub fn from_records(capacity: usize, records: impl IntoIterator<Item = Transition<S, A>>) -> Result<Self> {
        let mut buf = Self::new(capacity)?;
        for r in records {
            buf.push(r);
        }
        Ok(buf)
    }

    pub fn push(&mut self, t: Transition<S, A>) {
        if self.records.len() < self.capacity {
            self.records.push(t);
        } else {
            self.records[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total inserts, including evicted records.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// `i`-th record counted from the oldest one still stored.
    pub fn get(&self, i: usize) -> &Transition<S, A> {
        assert!(i < self.records.len(), "buffer index {i} out of range");
        &self.records[(self.head + i) % self.records.len()]
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<S, A>> + '_ {
        (0..self.records.len()).map(move |i| self.get(i))
    }

    /// Indices of a uniform batch drawn without replacement. Asking for more
    /// than is stored returns every index once.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let n = n.min(self.records.len());
        index::sample(rng, self.records.len(), n).into_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition<S, A>> {
        self.sample_indices(n, rng).into_iter().map(|i| self.get(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn t(i: usize) -> Transition<usize, usize> {
        Transition {
            state: i,
            action: 0,
            reward: i as f64,
            next_state: i + 1,
            terminal: false,
            truncated: false,
        }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut b = TransitionBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(t(i));
            assert!(b.len() <= 3);
        }
        let states: Vec<usize> = b.iter().map(|r| r.state).collect();
        assert_eq!(states, vec![2, 3, 4]);
        assert_eq!(b.inserted(), 5);
    }

    #[test]
    fn batches_have_no_repeats() {
        let b = TransitionBuffer::from_records(100, (0..50).map(t)).unwrap();
        let mut rng = seeded(3);
        for _ in 0..20 {
            let mut idx = b.sample_indices(32, &mut rng);
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 32);
        }
        assert_eq!(b.sample_indices(80, &mut rng).len(), 50);
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let b = TransitionBuffer::from_records(10, (0..10).map(t)).unwrap();
        let mut rng = seeded(4);
        let mut counts = [0usize; 10];
        for _ in 0..20_000 {
            for i in b.sample_indices(3, &mut rng) {
                counts[i] += 1;
            }
        }
        // Each index is expected 6000 times; 5 sigma is about 330.
        assert!(counts.iter().all(|&c| (c as f64 - 6000.0).abs() < 400.0), "{counts:?}");
    }

    #[test]
    fn zero_capacity_is_rejected() {
        assert!(TransitionBuffer::<usize, usize>::new(0).is_err());
    }
}
