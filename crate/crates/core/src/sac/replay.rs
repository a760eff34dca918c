use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ACTION_DIM, STATE_DIM};

/// One environment step. State layout is `x_m[6] ∥ x[6] ∥ u_b[3]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: [f64; STATE_DIM],
    pub u_l: [f64; ACTION_DIM],
    pub r: f64,
    pub s_next: [f64; STATE_DIM],
    pub done: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.r.is_finite()
            && self.s.iter().all(|v| v.is_finite())
            && self.s_next.iter().all(|v| v.is_finite())
            && self.u_l.iter().all(|v| v.is_finite())
    }
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

/// Structure-of-arrays view of sampled transitions, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    pub s_next: Vec<f64>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn from_transitions<'a>(items: impl IntoIterator<Item = &'a Transition>) -> Self {
        let mut b = Batch {
            size: 0,
            s: Vec::new(),
            u: Vec::new(),
            r: Vec::new(),
            s_next: Vec::new(),
            done: Vec::new(),
        };
        for t in items {
            b.size += 1;
            b.s.extend_from_slice(&t.s);
            b.u.extend_from_slice(&t.u_l);
            b.r.push(t.r);
            b.s_next.extend_from_slice(&t.s_next);
            b.done.push(t.done);
        }
        b
    }
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` distinct indices drawn uniformly; `None` if fewer are stored.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Option<Vec<usize>> {
        (n <= self.items.len()).then(|| rand::seq::index::sample(rng, self.items.len(), n).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Option<Batch> {
        let idx = self.sample_indices(rng, n)?;
        Some(Batch::from_transitions(idx.iter().map(|&i| &self.items[i])))
    }
}
