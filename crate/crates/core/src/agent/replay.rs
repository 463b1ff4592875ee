use alloc::vec::Vec;

use rand::seq::index;

use super::Transition;
use crate::rng::RngStream;

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Overwrites the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Distinct indices, uniformly chosen. Returns fewer than `n` only when
    /// the buffer holds fewer than `n` items.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut RngStream) -> Vec<&'a Transition> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Action, StateVector};
    use crate::rng::{stream, StreamId};

    fn tr(r: f64) -> Transition {
        Transition {
            ue: 0,
            state: StateVector::default(),
            action: Action(0),
            next_state: StateVector::default(),
            reward: r,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(tr(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let mut rewards: Vec<f64> = buf.items.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, [2.0, 3.0, 4.0]);
    }

    #[test]
    fn sample_without_replacement() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..50 {
            buf.push(tr(i as f64));
        }
        let mut rng = stream(0, StreamId::AgentReplay);
        let s = buf.sample(32, &mut rng);
        let mut r: Vec<u64> = s.iter().map(|t| t.reward as u64).collect();
        r.sort();
        r.dedup();
        assert_eq!(r.len(), 32);
    }
}
