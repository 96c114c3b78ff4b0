use super::{first_argmax, BranchingPolicy};
use crate::bnb::BranchContext;
use crate::Result;
use rand::Rng;

/// Picks the candidate whose LP value is farthest from an integer.
#[derive(Debug, Default, Clone)]
pub struct MostFractional;

impl BranchingPolicy for MostFractional {
    fn name(&self) -> &str {
        "most_fractional"
    }

    fn choose(&mut self, ctx: &mut BranchContext<'_, '_>, candidates: &[usize]) -> Result<usize> {
        let x = &ctx.node_lp().x;
        let k = first_argmax(candidates.iter().map(|&j| (x[j] - x[j].round()).abs()))
            .expect("non-empty candidates");
        Ok(candidates[k])
    }
}

/// Uniform choice using the solve's seeded rng.
#[derive(Debug, Default, Clone)]
pub struct RandomBranching;

impl BranchingPolicy for RandomBranching {
    fn name(&self) -> &str {
        "random"
    }

    fn choose(&mut self, ctx: &mut BranchContext<'_, '_>, candidates: &[usize]) -> Result<usize> {
        Ok(candidates[ctx.rng.gen_range(0..candidates.len())])
    }
}
