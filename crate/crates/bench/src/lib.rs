//! Shared fixtures for the benchmarks.

use retrobranch::bnb::{solve, SolveOptions};
use retrobranch::branch::PseudocostBranching;
use retrobranch::features::BipartiteState;
use retrobranch::milp::{generate, GeneratorSpec, MilpInstance, ProblemClass};
use std::sync::Arc;

/// The desk-scale set-covering family.
pub fn set_covering(seed: u64) -> MilpInstance {
    let class = ProblemClass::SetCovering {
        rows: 100,
        cols: 200,
        density: 0.15,
    };
    generate(&GeneratorSpec::new(class, seed)).expect("valid generator parameters")
}

/// Observations of every focused node of a pseudocost solve, over seeds
/// from `first_seed` until `count` states were collected.
pub fn states(first_seed: u64, count: usize) -> Vec<Arc<BipartiteState>> {
    let mut out = Vec::new();
    let mut seed = first_seed;
    while out.len() < count {
        let inst = set_covering(seed);
        let opts = SolveOptions {
            capture_states: true,
            ..SolveOptions::default()
        };
        let o = solve(&inst, &mut PseudocostBranching::new(), &opts).expect("solvable");
        out.extend(o.tree.states.into_values());
        seed += 1;
    }
    out.truncate(count);
    out
}
