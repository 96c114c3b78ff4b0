use crate::features::BipartiteState;
use crate::retro::Transition;
use crate::{Error, Result};
use rand::Rng;
use std::sync::Arc;

/// A transition with its n-step return folded in.
#[derive(Debug, Clone)]
pub struct NStepTransition {
    pub state: Arc<BipartiteState>,
    pub action: usize,
    /// `Σ_{k<m} γ^k r_{t+k}` over the window.
    pub return_n: f64,
    /// State to bootstrap from, `None` when the window reached the end.
    pub bootstrap: Option<Arc<BipartiteState>>,
    /// `γ^n` when bootstrapping, else 0.
    pub discount: f64,
}

/// Folds one trajectory into n-step transitions. Windows stop at the end of
/// the trajectory and bootstrap nothing there.
pub fn n_step_transitions(traj: &[Transition], n: usize, gamma: f64) -> Vec<NStepTransition> {
    (0..traj.len())
        .map(|t| {
            let mut ret = 0.0;
            let mut g = 1.0;
            let mut k = 0;
            let mut terminal = false;
            while k < n && t + k < traj.len() {
                let step = &traj[t + k];
                ret += g * step.reward;
                g *= gamma;
                k += 1;
                if step.done {
                    terminal = true;
                    break;
                }
            }
            let last = &traj[t + k - 1];
            let bootstrap = if terminal { None } else { last.next_state.clone() };
            NStepTransition {
                state: Arc::clone(&traj[t].state),
                action: traj[t].action,
                return_n: ret,
                discount: if bootstrap.is_some() { g } else { 0.0 },
                bootstrap,
            }
        })
        .collect()
}

/// Binary sum tree over a fixed number of leaves.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative range contains `u`, for `u` in `[0, total)`.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if u < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

/// Indices and normalized importance weights of one sampled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Proportional prioritized replay over a ring buffer.
pub struct ReplayBuffer {
    capacity: usize,
    min_size: usize,
    alpha: f64,
    min_priority: f64,
    items: Vec<NStepTransition>,
    next: usize,
    tree: SumTree,
    max_priority: f64,
    pushed: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, min_size: usize, alpha: f64, min_priority: f64) -> Self {
        ReplayBuffer {
            capacity,
            min_size,
            alpha,
            min_priority,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
            pushed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total transitions ever inserted.
    pub fn pushed(&self) -> usize {
        self.pushed
    }

    pub fn is_ready(&self) -> bool {
        self.items.len() >= self.min_size.max(1)
    }

    pub fn get(&self, i: usize) -> &NStepTransition {
        &self.items[i]
    }

    /// Raw priority (before the alpha exponent) of slot `i`.
    pub fn priority(&self, i: usize) -> f64 {
        self.tree.get(i).powf(1.0 / self.alpha)
    }

    /// Inserts at the current maximum priority, overwriting the oldest entry
    /// once full.
    pub fn push(&mut self, item: NStepTransition) {
        let slot = self.next;
        if slot == self.items.len() {
            self.items.push(item);
        } else {
            self.items[slot] = item;
        }
        self.tree.set(slot, self.max_priority.powf(self.alpha));
        self.next = (slot + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Draws `batch` indices with probability `p_i^α / Σ p^α` and returns
    /// weights `(N·P(i))^-β` divided by the largest weight in the batch.
    pub fn sample(&self, batch: usize, beta: f64, rng: &mut impl Rng) -> Result<Sample> {
        if !self.is_ready() {
            return Err(Error::Contract(format!(
                "replay holds {} transitions, sampling needs {}",
                self.items.len(),
                self.min_size.max(1)
            )));
        }
        let total = self.tree.total();
        let n = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let u = rng.gen::<f64>() * total;
            let i = self.tree.find(u).min(self.items.len() - 1);
            let p = self.tree.get(i) / total;
            indices.push(i);
            weights.push((n * p).powf(-beta));
        }
        let max = weights.iter().copied().fold(0.0, f64::max);
        for w in &mut weights {
            *w /= max;
        }
        Ok(Sample { indices, weights })
    }

    /// Sets each priority to `|δ| + min_priority`.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        for (&i, &d) in indices.iter().zip(td_errors) {
            let p = d.abs() + self.min_priority;
            self.max_priority = self.max_priority.max(p);
            self.tree.set(i, p.powf(self.alpha));
        }
    }
}
