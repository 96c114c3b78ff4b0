use super::{first_argmax, product_score, BranchingPolicy};
use crate::bnb::{BranchContext, Direction};
use crate::lp::LpStatus;
use crate::Result;

/// Gain assigned to an infeasible child.
pub const INFEASIBLE_GAIN: f64 = 1e10;

/// Full strong branching: both child LPs of every candidate are solved
/// (warm-started from the node basis) and scored by the product of their
/// dual-bound gains.
#[derive(Debug, Default, Clone)]
pub struct StrongBranching {
    /// Scores of the last decision, aligned with its candidate list.
    pub last_scores: Vec<f64>,
}

impl StrongBranching {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scores every candidate at the focus node.
    pub fn scores(ctx: &mut BranchContext<'_, '_>, candidates: &[usize]) -> Result<Vec<f64>> {
        let base = ctx.node_lp().objective;
        let mut scores = Vec::with_capacity(candidates.len());
        for &j in candidates {
            let mut gains = [0.0; 2];
            for (g, dir) in gains.iter_mut().zip([Direction::Down, Direction::Up]) {
                let child = ctx.probe(j, dir)?;
                *g = match child.status {
                    LpStatus::Optimal => (child.objective - base).max(0.0),
                    LpStatus::Infeasible => INFEASIBLE_GAIN,
                    // pivot limit (counted by the context) or unbounded: no information
                    _ => 0.0,
                };
            }
            scores.push(product_score(gains[0], gains[1]));
        }
        Ok(scores)
    }
}

impl BranchingPolicy for StrongBranching {
    fn name(&self) -> &str {
        "strong_branching"
    }

    fn choose(&mut self, ctx: &mut BranchContext<'_, '_>, candidates: &[usize]) -> Result<usize> {
        if candidates.len() == 1 {
            self.last_scores = vec![f64::NAN];
            return Ok(candidates[0]);
        }
        self.last_scores = Self::scores(ctx, candidates)?;
        let k = first_argmax(self.last_scores.iter().copied()).expect("non-empty candidates");
        Ok(candidates[k])
    }
}
