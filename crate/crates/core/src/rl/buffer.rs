use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::{Observation, RLAction, Violations};

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Task observation (wrench, position) before the step.
    pub s: [f64; 9],
    pub a: RLAction,
    pub r: f64,
    pub s_next: [f64; 9],
    /// Terminal: success or violation. Step-limit truncation is not terminal.
    pub done: bool,
    pub mask: Violations,
}

impl Transition {
    pub fn new(s: &Observation, a: RLAction, r: f64, s_next: &Observation, done: bool, mask: Violations) -> Self {
        Transition {
            s: s.task(),
            a,
            r,
            s_next: s_next.task(),
            done,
            mask,
        }
    }

    pub fn cost(&self) -> f64 {
        if self.mask.any() {
            1.0
        } else {
            0.0
        }
    }
}

/// Fixed-capacity ring buffer with an index of violating transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
    violations: Vec<usize>,
    violation_slot: Vec<Option<usize>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            items: Vec::new(),
            capacity,
            next: 0,
            violations: Vec::new(),
            violation_slot: Vec::new(),
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

    pub fn violation_count(&self) -> usize {
        self.violations.len()
    }

    pub fn push(&mut self, t: Transition) {
        let slot = self.next;
        if slot == self.items.len() {
            self.items.push(t);
            self.violation_slot.push(None);
        } else {
            if let Some(pos) = self.violation_slot[slot].take() {
                self.violations.swap_remove(pos);
                if let Some(&moved) = self.violations.get(pos) {
                    self.violation_slot[moved] = Some(pos);
                }
            }
            self.items[slot] = t;
        }
        if t.mask.any() {
            self.violation_slot[slot] = Some(self.violations.len());
            self.violations.push(slot);
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Transition>) {
        for t in ts {
            self.push(t);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        assert!(!self.items.is_empty(), "sampling an empty buffer");
        (0..n).map(|_| self.items[rng.random_range(0..self.items.len())]).collect()
    }

    /// Sample with about `fraction` of the batch drawn from violating
    /// transitions (if there are any), the rest uniformly.
    pub fn sample_safety<R: Rng + ?Sized>(&self, n: usize, fraction: f64, rng: &mut R) -> Vec<Transition> {
        assert!(!self.items.is_empty(), "sampling an empty buffer");
        let n_viol = if self.violations.is_empty() {
            0
        } else {
            (n as f64 * fraction).round() as usize
        };
        let mut out = Vec::with_capacity(n);
        for _ in 0..n_viol {
            out.push(self.items[self.violations[rng.random_range(0..self.violations.len())]]);
        }
        for _ in n_viol..n {
            out.push(self.items[rng.random_range(0..self.items.len())]);
        }
        out
    }
}
