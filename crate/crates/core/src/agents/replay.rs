//! Fixed-capacity FIFO replay memory with uniform sampling.

use ndarray::{Array1, Array2};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Raw action for continuous agents, head indices for H-DDQN.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(items: &[&Transition]) -> Self {
        let b = items.len();
        let (s, a) = items.first().map_or((0, 0), |t| (t.state.len(), t.action.len()));
        let mut batch = Batch {
            states: Array2::zeros((b, s)),
            actions: Array2::zeros((b, a)),
            rewards: Array1::zeros(b),
            next_states: Array2::zeros((b, s)),
        };
        for (i, t) in items.iter().enumerate() {
            batch.states.row_mut(i).assign(&Array1::from(t.state.clone()));
            batch.actions.row_mut(i).assign(&Array1::from(t.action.clone()));
            batch.rewards[i] = t.reward;
            batch.next_states.row_mut(i).assign(&Array1::from(t.next_state.clone()));
        }
        batch
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
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

    /// Stores a transition, evicting the oldest once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Oldest-first view.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Draws `n` transitions uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Batch {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        let picks: Vec<&Transition> = (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect();
        Batch::from_transitions(&picks)
    }
}
