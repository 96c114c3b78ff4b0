//! Branch-and-bound search: select a focus node, branch, solve both child
//! LPs, fathom, repeat until no open node remains.

mod engine;
mod selector;

pub use engine::{solve, BranchContext, Direction, Limits, SolveOptions, SolveOutcome};
pub use selector::NodeSelectorKind;

use crate::features::BipartiteState;
use crate::lp::{LocalBounds, LpResult};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

pub type NodeId = usize;

/// Absolute tolerance for comparing a dual bound against the incumbent.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Open,
    Branched,
    FathomedIntegral,
    FathomedInfeasible,
    FathomedBound,
}

impl NodeStatus {
    pub fn is_fathomed(self) -> bool {
        matches!(
            self,
            NodeStatus::FathomedIntegral | NodeStatus::FathomedInfeasible | NodeStatus::FathomedBound
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub local_bounds: LocalBounds,
    #[serde(skip)]
    pub lp: Option<LpResult>,
    pub dual_bound: f64,
    pub status: NodeStatus,
    /// `[down, up]` children.
    pub children: [Option<NodeId>; 2],
    pub branch_var: Option<usize>,
    /// Sequence number assigned when the node became the focus node.
    pub visit_order: Option<usize>,
    /// Global event counter value at which the node was fathomed.
    pub closed_order: Option<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children == [None, None]
    }

    pub fn child_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.children.iter().flatten().copied()
    }
}

/// The full search tree. Node ids are creation order.
#[derive(Debug, Clone, Default)]
pub struct SearchTree {
    pub nodes: Vec<TreeNode>,
    /// Observations captured at focus time, when requested.
    pub states: BTreeMap<NodeId, Arc<BipartiteState>>,
}

impl SearchTree {
    pub fn root(&self) -> Option<&TreeNode> {
        self.nodes.first()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn branched(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.status == NodeStatus::Branched)
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Branched nodes in the order they were focused.
    pub fn visit_sequence(&self) -> Vec<NodeId> {
        let mut v: Vec<(usize, NodeId)> = self
            .nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Branched)
            .filter_map(|n| n.visit_order.map(|o| (o, n.id)))
            .collect();
        v.sort_unstable();
        v.into_iter().map(|(_, id)| id).collect()
    }

    /// Debug dump of every node (ids, parents, bounds, statuses, visit order).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.nodes).unwrap_or(serde_json::Value::Null)
    }
}

/// Fathoming decision for a freshly solved node, in precedence order
/// infeasible, integral, bound-dominated, open. Ties with the incumbent prune.
pub fn fathom_check(lp: &LpResult, incumbent_value: f64) -> NodeStatus {
    if !lp.is_optimal() {
        NodeStatus::FathomedInfeasible
    } else if lp.fractional_set.is_empty() {
        NodeStatus::FathomedIntegral
    } else if lp.objective >= incumbent_value - BOUND_TOL {
        NodeStatus::FathomedBound
    } else {
        NodeStatus::Open
    }
}

/// Branching candidates of a node: its LP's fractional set, ascending.
pub fn candidates(node: &TreeNode) -> Result<Vec<usize>> {
    match &node.lp {
        Some(lp) if lp.is_optimal() => Ok(lp.fractional_set.clone()),
        _ => Err(Error::Contract(format!(
            "node {} has no optimal LP; candidates undefined",
            node.id
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NodeLimit,
    TimeLimit,
    /// A node LP hit its pivot limit; the solve was aborted.
    LpLimit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::LpLimit => "lp_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveStats {
    /// Nodes that were ever the focus node.
    pub num_nodes: usize,
    /// Root and child LP solves (probing excluded).
    pub num_lp_solves: usize,
    /// All simplex pivots, probing included.
    pub num_lp_iterations: usize,
    /// Pivots spent in strong-branching probes.
    pub probing_iterations: usize,
    pub probing_lp_solves: usize,
    /// Probing LPs that hit the pivot limit.
    pub probing_limit_hits: usize,
    pub primal_bound: f64,
    pub dual_bound: f64,
    pub status: SolveStatus,
    /// Proven infeasible (`primal_bound` stays `+inf`).
    pub infeasible: bool,
    pub incumbent_x: Option<Vec<f64>>,
    pub wall_ms: u64,
}

impl SolveStats {
    /// LP pivots of the search itself, without probing.
    pub fn search_lp_iterations(&self) -> usize {
        self.num_lp_iterations - self.probing_iterations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_lp, LocalBounds};
    use crate::milp::{MilpInstance, Row, Sense};

    fn worked() -> MilpInstance {
        MilpInstance::binary(
            "worked",
            vec![-1.0, -2.0],
            vec![Row::new(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.5)],
        )
    }

    #[test]
    fn fathom_precedence() {
        let inst = worked();
        let infeasible = solve_lp(
            &inst,
            &LocalBounds::new().with_lower(&inst, 0, 1.0).with_upper(&inst, 0, 0.0),
            100,
        )
        .unwrap();
        assert_eq!(fathom_check(&infeasible, 5.0), NodeStatus::FathomedInfeasible);

        let integral = solve_lp(&inst, &LocalBounds::new().with_upper(&inst, 0, 0.0), 100).unwrap();
        assert_eq!(integral.objective, -2.0);
        assert_eq!(fathom_check(&integral, -1.0), NodeStatus::FathomedIntegral);

        let up = solve_lp(&inst, &LocalBounds::new().with_lower(&inst, 0, 1.0), 100).unwrap();
        assert_eq!(up.objective, -2.0);
        assert_eq!(fathom_check(&up, -2.0), NodeStatus::FathomedBound);
        assert_eq!(fathom_check(&up, -1.0), NodeStatus::Open);
    }

    #[test]
    fn candidate_lists() {
        let inst = worked();
        let mut node = TreeNode {
            id: 0,
            parent: None,
            depth: 0,
            local_bounds: LocalBounds::new(),
            lp: None,
            dual_bound: f64::NEG_INFINITY,
            status: NodeStatus::Open,
            children: [None, None],
            branch_var: None,
            visit_order: None,
            closed_order: None,
        };
        assert!(candidates(&node).is_err());
        node.lp = Some(solve_lp(&inst, &LocalBounds::new(), 100).unwrap());
        assert_eq!(candidates(&node).unwrap(), vec![0]);

        let half = MilpInstance::binary(
            "half",
            vec![-1.0, -1.0],
            vec![
                Row::new(vec![(0, 2.0)], Sense::Le, 1.0),
                Row::new(vec![(1, 2.0)], Sense::Le, 1.0),
            ],
        );
        node.lp = Some(solve_lp(&half, &LocalBounds::new(), 100).unwrap());
        assert_eq!(candidates(&node).unwrap(), vec![0, 1]);

        node.lp = Some(solve_lp(&inst, &LocalBounds::new().with_upper(&inst, 0, 0.0), 100).unwrap());
        assert!(candidates(&node).unwrap().is_empty());
    }
}
