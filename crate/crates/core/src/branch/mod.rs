//! Variable selection policies.

mod neural;
mod pseudocost;
mod simple;
mod strong;

pub use neural::{softmax_sample, ExplorationMode, NeuralBrancher};
pub use pseudocost::{PseudocostBranching, PseudocostStats};
pub use simple::{MostFractional, RandomBranching};
pub use strong::{StrongBranching, INFEASIBLE_GAIN};

use crate::bnb::BranchContext;
use crate::lp::LpResult;
use crate::milp::MilpInstance;
use crate::qnet::QNet;
use crate::Result;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

/// Floor applied to each factor of the product score.
pub const SCORE_EPS: f64 = 1e-6;

/// A branching rule: picks one of the focus node's fractional candidates.
pub trait BranchingPolicy {
    fn name(&self) -> &str;

    /// Called once before each solve; per-solve state is reset here.
    fn start_solve(&mut self, _inst: &MilpInstance) {}

    /// Returns an element of `candidates` (non-empty, ascending).
    fn choose(&mut self, ctx: &mut BranchContext<'_, '_>, candidates: &[usize]) -> Result<usize>;

    /// Both child LPs of a branching, after they were solved.
    fn observe_branching(&mut self, _node: &LpResult, _var: usize, _down: &LpResult, _up: &LpResult) {
    }
}

impl<P: BranchingPolicy + ?Sized> BranchingPolicy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn start_solve(&mut self, inst: &MilpInstance) {
        (**self).start_solve(inst)
    }

    fn choose(&mut self, ctx: &mut BranchContext<'_, '_>, candidates: &[usize]) -> Result<usize> {
        (**self).choose(ctx, candidates)
    }

    fn observe_branching(&mut self, node: &LpResult, var: usize, down: &LpResult, up: &LpResult) {
        (**self).observe_branching(node, var, down, up)
    }
}

/// A policy named on the command line or in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    Strong,
    Pseudocost,
    Random,
    MostFractional,
    /// Greedy Q-network loaded from a checkpoint.
    Neural(PathBuf),
}

impl PolicySpec {
    pub fn build(&self) -> Result<Box<dyn BranchingPolicy>> {
        Ok(match self {
            PolicySpec::Strong => Box::new(StrongBranching::new()),
            PolicySpec::Pseudocost => Box::new(PseudocostBranching::new()),
            PolicySpec::Random => Box::new(RandomBranching),
            PolicySpec::MostFractional => Box::new(MostFractional),
            PolicySpec::Neural(path) => {
                let (net, _) = QNet::load(path)?;
                Box::new(NeuralBrancher::greedy(Arc::new(net)))
            }
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Strong => f.write_str("sb"),
            PolicySpec::Pseudocost => f.write_str("pb"),
            PolicySpec::Random => f.write_str("random"),
            PolicySpec::MostFractional => f.write_str("mostfrac"),
            PolicySpec::Neural(p) => write!(f, "neural:{}", p.display()),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sb" | "strong" => Ok(PolicySpec::Strong),
            "pb" | "pseudocost" => Ok(PolicySpec::Pseudocost),
            "random" => Ok(PolicySpec::Random),
            "mostfrac" | "most_fractional" => Ok(PolicySpec::MostFractional),
            _ => match s.strip_prefix("neural:") {
                Some(path) if !path.is_empty() => Ok(PolicySpec::Neural(PathBuf::from(path))),
                _ => Err(format!(
                    "unknown policy '{s}' (sb|pb|random|mostfrac|neural:<checkpoint>)"
                )),
            },
        }
    }
}

/// Product score `max(a, ε)·max(b, ε)`.
pub fn product_score(down: f64, up: f64) -> f64 {
    down.max(SCORE_EPS) * up.max(SCORE_EPS)
}

/// Index of the first maximum (ties go to the earliest entry).
pub(crate) fn first_argmax(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in scores.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(first_argmax([1.0, 3.0, 3.0]), Some(1));
        assert_eq!(first_argmax([2.0, 2.0]), Some(0));
        assert_eq!(first_argmax(std::iter::empty()), None);
    }

    #[test]
    fn product_score_floor() {
        assert_eq!(product_score(1.0, 1.0), 1.0);
        assert!((product_score(0.1, 2.0) - 0.2).abs() < 1e-15);
        assert_eq!(product_score(0.0, 5.0), SCORE_EPS * 5.0);
    }

    #[test]
    fn policy_specs_parse() {
        for s in ["sb", "pb", "random", "mostfrac", "neural:a/b.qnet.json"] {
            assert_eq!(s.parse::<PolicySpec>().unwrap().to_string(), s);
        }
        assert!("neural:".parse::<PolicySpec>().is_err());
        assert!("best".parse::<PolicySpec>().is_err());
        assert!(PolicySpec::Neural("/nonexistent.qnet.json".into()).build().is_err());
    }
}
