use super::BranchingPolicy;
use crate::bnb::BranchContext;
use crate::qnet::QNet;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// How a [`NeuralBrancher`] turns Q-values into a decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationMode {
    /// Argmax over candidates, lowest index on ties.
    Greedy,
    /// With probability `epsilon` a uniform candidate, otherwise a sample
    /// from the softmax of the candidate Q-values.
    EpsilonStochastic { epsilon: f64, temperature: f64 },
}

/// Samples an index from `softmax(q / temperature)` with the max subtracted
/// for stability.
pub fn softmax_sample(q: &[f64], temperature: f64, rng: &mut impl Rng) -> usize {
    let t = temperature.max(1e-12);
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = q.iter().map(|&v| ((v - max) / t).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    q.len() - 1
}

/// Branching with a Q-network over the bipartite observation.
pub struct NeuralBrancher {
    pub net: Arc<QNet>,
    pub mode: ExplorationMode,
    name: String,
}

impl NeuralBrancher {
    pub fn new(net: Arc<QNet>, mode: ExplorationMode) -> Self {
        NeuralBrancher {
            net,
            mode,
            name: "neural".into(),
        }
    }

    pub fn greedy(net: Arc<QNet>) -> Self {
        Self::new(net, ExplorationMode::Greedy)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Picks among `candidates` given the full Q vector.
    pub fn decide(&self, q: &[f64], candidates: &[usize], rng: &mut impl Rng) -> Result<usize> {
        let cq: Vec<f64> = candidates.iter().map(|&j| q[j]).collect();
        if let Some(k) = cq.iter().position(|v| !v.is_finite()) {
            return Err(Error::Policy(format!(
                "non-finite Q-value {} for candidate {}",
                cq[k], candidates[k]
            )));
        }
        let k = match self.mode {
            ExplorationMode::Greedy => super::first_argmax(cq.iter().copied()).expect("non-empty"),
            ExplorationMode::EpsilonStochastic { epsilon, temperature } => {
                if rng.gen::<f64>() < epsilon {
                    rng.gen_range(0..cq.len())
                } else {
                    softmax_sample(&cq, temperature, rng)
                }
            }
        };
        Ok(candidates[k])
    }
}

impl BranchingPolicy for NeuralBrancher {
    fn name(&self) -> &str {
        &self.name
    }

    fn choose(&mut self, ctx: &mut BranchContext<'_, '_>, candidates: &[usize]) -> Result<usize> {
        let state = ctx.state()?;
        let q = self.net.forward(&state)?;
        self.decide(q.as_slice().expect("contiguous"), candidates, ctx.rng)
    }
}
