//! Retrospective trajectory construction: after a solve, the search tree is
//! split into root-to-leaf paths of branched nodes so that every branching
//! decision lands in exactly one short trajectory.

use crate::bnb::{NodeId, NodeStatus, SearchTree};
use crate::features::BipartiteState;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Gain assigned to an infeasible leaf by the maximum-LP-gain heuristic.
pub const INFEASIBLE_LEAF_GAIN: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// Leaf with the largest dual-bound change from the sub-tree root.
    Mlpg,
    Random,
    /// Leaf fathomed earliest.
    VisitationOrder,
    /// Leaf with the longest path from the sub-tree root.
    Deepest,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [Self::Mlpg, Self::Random, Self::VisitationOrder, Self::Deepest];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mlpg => "mlpg",
            Self::Random => "random",
            Self::VisitationOrder => "visitation_order",
            Self::Deepest => "deepest",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Heuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlpg" => Ok(Self::Mlpg),
            "random" | "r" => Ok(Self::Random),
            "visitation_order" | "vo" => Ok(Self::VisitationOrder),
            "deepest" | "d" => Ok(Self::Deepest),
            other => Err(format!(
                "unknown construction heuristic '{other}' (mlpg|random|visitation_order|deepest)"
            )),
        }
    }
}

/// When the last step of a trajectory earns reward 0 instead of -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalRule {
    /// Only if the last branching fathomed both of its children.
    #[default]
    BothChildrenFathomed,
    /// Whenever the destination leaf is reached.
    DestinationReached,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetroTrajectory {
    /// Branched nodes, root first.
    pub node_ids: Vec<NodeId>,
    pub destination_leaf: NodeId,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl RetroTrajectory {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Construction {
    pub trajectories: Vec<RetroTrajectory>,
    /// Branched nodes left out because their sub-tree has no fathomed leaf.
    pub dropped: usize,
}

fn both_children_fathomed(tree: &SearchTree, id: NodeId) -> bool {
    let node = tree.node(id);
    node.children.iter().all(|c| c.is_some_and(|c| tree.node(c).status.is_fathomed()))
}

fn terminal_reward(tree: &SearchTree, last: NodeId, rule: TerminalRule) -> f64 {
    match rule {
        TerminalRule::DestinationReached => 0.0,
        TerminalRule::BothChildrenFathomed if both_children_fathomed(tree, last) => 0.0,
        TerminalRule::BothChildrenFathomed => -1.0,
    }
}

fn rewards_and_dones(nodes: &[NodeId], last_reward: f64) -> (Vec<f64>, Vec<bool>) {
    let k = nodes.len();
    let rewards = (0..k).map(|t| if t + 1 == k { last_reward } else { -1.0 }).collect();
    let dones = (0..k).map(|t| t + 1 == k).collect();
    (rewards, dones)
}

/// Nodes of the sub-tree rooted at `root`, in depth-first pre-order.
fn subtree(tree: &SearchTree, root: NodeId) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        out.push(id);
        let node = tree.node(id);
        for c in node.children.iter().rev().flatten() {
            stack.push(*c);
        }
    }
    out
}

/// Picks the destination leaf among `eligible` (fathomed leaves of the
/// sub-tree rooted at `root`). Ties go to the lowest node id.
pub fn select_leaf(
    tree: &SearchTree,
    root: NodeId,
    eligible: &[NodeId],
    heuristic: Heuristic,
    rng: &mut impl Rng,
) -> Result<NodeId> {
    if eligible.is_empty() {
        return Err(Error::Contract(format!("sub-tree of node {root} has no eligible leaf")));
    }
    let mut sorted = eligible.to_vec();
    sorted.sort_unstable();
    let root_db = tree.node(root).dual_bound;
    let score = |id: NodeId| -> f64 {
        let leaf = tree.node(id);
        match heuristic {
            Heuristic::Mlpg => {
                if leaf.status == NodeStatus::FathomedInfeasible || !leaf.dual_bound.is_finite() {
                    INFEASIBLE_LEAF_GAIN
                } else {
                    (root_db - leaf.dual_bound).abs()
                }
            }
            Heuristic::VisitationOrder => -(leaf.closed_order.unwrap_or(usize::MAX) as f64),
            Heuristic::Deepest => leaf.depth as f64,
            Heuristic::Random => 0.0,
        }
    };
    if heuristic == Heuristic::Random {
        return Ok(sorted[rng.gen_range(0..sorted.len())]);
    }
    let mut best = sorted[0];
    let mut best_score = score(best);
    for &id in &sorted[1..] {
        let s = score(id);
        if s > best_score {
            best = id;
            best_score = s;
        }
    }
    Ok(best)
}

/// Splits the branched nodes of `tree` into retrospective trajectories.
///
/// Repeatedly takes the shallowest unassigned branched node (lowest id on
/// ties), selects a fathomed, not yet selected leaf of its sub-tree, and
/// makes the branched nodes on the path to that leaf a trajectory. Nodes
/// that were never focused are ignored.
pub fn construct_trajectories(
    tree: &SearchTree,
    heuristic: Heuristic,
    rule: TerminalRule,
    rng: &mut impl Rng,
) -> Construction {
    let mut roots: Vec<NodeId> = tree.branched().map(|n| n.id).collect();
    roots.sort_by_key(|&id| (tree.node(id).depth, id));
    let mut assigned = vec![false; tree.len()];
    let mut selected = vec![false; tree.len()];
    let mut out = Construction::default();
    for root in roots {
        if assigned[root] {
            continue;
        }
        let members = subtree(tree, root);
        let eligible: Vec<NodeId> = members
            .iter()
            .copied()
            .filter(|&id| {
                let n = tree.node(id);
                n.is_leaf() && n.status.is_fathomed() && !selected[id]
            })
            .collect();
        let Ok(leaf) = select_leaf(tree, root, &eligible, heuristic, rng) else {
            for id in members {
                if tree.node(id).status == NodeStatus::Branched && !assigned[id] {
                    assigned[id] = true;
                    out.dropped += 1;
                }
            }
            continue;
        };
        selected[leaf] = true;
        let mut path = Vec::new();
        let mut cur = tree.node(leaf).parent;
        while let Some(id) = cur {
            if assigned[id] {
                break;
            }
            path.push(id);
            if id == root {
                break;
            }
            cur = tree.node(id).parent;
        }
        path.reverse();
        debug_assert_eq!(path.first(), Some(&root));
        for &id in &path {
            assigned[id] = true;
        }
        let last = *path.last().expect("leaf has a branched parent");
        let (rewards, dones) = rewards_and_dones(&path, terminal_reward(tree, last, rule));
        out.trajectories.push(RetroTrajectory {
            node_ids: path,
            destination_leaf: leaf,
            rewards,
            dones,
        });
    }
    out
}

/// The whole episode as one trajectory: branched nodes in visit order, -1
/// per step, with a final 0 if the solve finished (proved optimality).
pub fn full_episode(tree: &SearchTree, finished: bool) -> Option<RetroTrajectory> {
    let nodes = tree.visit_sequence();
    let last = *nodes.last()?;
    let last_reward = if finished { 0.0 } else { -1.0 };
    let (rewards, dones) = rewards_and_dones(&nodes, last_reward);
    Some(RetroTrajectory {
        destination_leaf: last,
        node_ids: nodes,
        rewards,
        dones,
    })
}

/// One step of a trajectory.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Arc<BipartiteState>,
    pub action: usize,
    pub reward: f64,
    /// `None` on the last step.
    pub next_state: Option<Arc<BipartiteState>>,
    pub done: bool,
}

/// Pairs each step with the observation captured when its node was focused
/// and the variable that was branched on.
pub fn emit_transitions(traj: &RetroTrajectory, tree: &SearchTree) -> Result<Vec<Transition>> {
    let state = |id: NodeId| -> Result<Arc<BipartiteState>> {
        tree.states.get(&id).cloned().ok_or_else(|| {
            Error::Contract(format!("no captured state for node {id}; solve with capture_states"))
        })
    };
    let mut out = Vec::with_capacity(traj.len());
    for (t, &id) in traj.node_ids.iter().enumerate() {
        let action = tree
            .node(id)
            .branch_var
            .ok_or_else(|| Error::Contract(format!("node {id} was not branched")))?;
        let next_state = match traj.node_ids.get(t + 1) {
            Some(&next) => Some(state(next)?),
            None => None,
        };
        out.push(Transition {
            state: state(id)?,
            action,
            reward: traj.rewards[t],
            next_state,
            done: traj.dones[t],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::TreeNode;
    use crate::lp::LocalBounds;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// N0→(N1,N2); N1→(N3✝,N4✝); N2→(N5✝,N6); N6→(N7✝,N8✝).
    pub(crate) fn nine_node_tree() -> SearchTree {
        let spec: [(Option<usize>, NodeStatus, f64); 9] = [
            (None, NodeStatus::Branched, 0.0),
            (Some(0), NodeStatus::Branched, 0.2),
            (Some(0), NodeStatus::Branched, 0.4),
            (Some(1), NodeStatus::FathomedBound, 0.5),
            (Some(1), NodeStatus::FathomedIntegral, 0.7),
            (Some(2), NodeStatus::FathomedBound, 0.3),
            (Some(2), NodeStatus::Branched, 0.9),
            (Some(6), NodeStatus::FathomedIntegral, 1.5),
            (Some(6), NodeStatus::FathomedBound, 1.3),
        ];
        let mut nodes: Vec<TreeNode> = spec
            .iter()
            .enumerate()
            .map(|(id, &(parent, status, db))| TreeNode {
                id,
                parent,
                depth: 0,
                local_bounds: LocalBounds::new(),
                lp: None,
                dual_bound: db,
                status,
                children: [None, None],
                branch_var: (status == NodeStatus::Branched).then_some(id),
                visit_order: None,
                closed_order: None,
            })
            .collect();
        for id in 1..9 {
            let p = nodes[id].parent.unwrap();
            nodes[id].depth = nodes[p].depth + 1;
            let slot = if nodes[p].children[0].is_none() { 0 } else { 1 };
            nodes[p].children[slot] = Some(id);
        }
        for (k, id) in [0, 1, 2, 6].into_iter().enumerate() {
            nodes[id].visit_order = Some(k);
        }
        // N3 closed first
        for (k, id) in [3, 4, 5, 7, 8].into_iter().enumerate() {
            nodes[id].closed_order = Some(k);
        }
        SearchTree {
            nodes,
            states: Default::default(),
        }
    }

    fn run(h: Heuristic) -> Construction {
        construct_trajectories(
            &nine_node_tree(),
            h,
            TerminalRule::BothChildrenFathomed,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
    }

    #[test]
    fn deepest_hand_trace() {
        let c = run(Heuristic::Deepest);
        assert_eq!(c.trajectories.len(), 2);
        assert_eq!(c.trajectories[0].node_ids, vec![0, 2, 6]);
        assert_eq!(c.trajectories[0].destination_leaf, 7);
        assert_eq!(c.trajectories[0].rewards, vec![-1.0, -1.0, 0.0]);
        assert_eq!(c.trajectories[0].dones, vec![false, false, true]);
        assert_eq!(c.trajectories[1].node_ids, vec![1]);
        assert_eq!(c.trajectories[1].rewards, vec![0.0]);
        assert_eq!(c.dropped, 0);
    }

    #[test]
    fn visitation_order_hand_trace() {
        let c = run(Heuristic::VisitationOrder);
        let ids: Vec<_> = c.trajectories.iter().map(|t| t.node_ids.clone()).collect();
        assert_eq!(ids, vec![vec![0, 1], vec![2], vec![6]]);
        let rewards: Vec<_> = c.trajectories.iter().map(|t| t.rewards.clone()).collect();
        assert_eq!(rewards, vec![vec![-1.0, 0.0], vec![-1.0], vec![0.0]]);
        assert!(c.trajectories.iter().all(|t| *t.dones.last().unwrap()));
    }

    #[test]
    fn mlpg_picks_largest_gain() {
        let tree = nine_node_tree();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let leaf = select_leaf(&tree, 0, &[3, 4, 5, 7, 8], Heuristic::Mlpg, &mut rng).unwrap();
        assert_eq!(leaf, 7);
        assert_eq!(run(Heuristic::Mlpg).trajectories[0].node_ids, vec![0, 2, 6]);
    }

    #[test]
    fn mlpg_prefers_infeasible_leaf() {
        let mut tree = nine_node_tree();
        tree.nodes[5].status = NodeStatus::FathomedInfeasible;
        tree.nodes[5].dual_bound = f64::INFINITY;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_leaf(&tree, 0, &[3, 5, 7], Heuristic::Mlpg, &mut rng).unwrap(), 5);
    }

    #[test]
    fn ties_and_single_leaf() {
        let mut tree = nine_node_tree();
        for id in [3, 4, 5, 7, 8] {
            tree.nodes[id].dual_bound = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_leaf(&tree, 0, &[8, 4, 3], Heuristic::Mlpg, &mut rng).unwrap(), 3);
        for h in Heuristic::ALL {
            assert_eq!(select_leaf(&tree, 6, &[8], h, &mut rng).unwrap(), 8);
        }
        assert!(select_leaf(&tree, 6, &[], Heuristic::Deepest, &mut rng).is_err());
    }

    #[test]
    fn every_heuristic_partitions() {
        for h in Heuristic::ALL {
            let c = run(h);
            let mut ids: Vec<_> = c.trajectories.iter().flat_map(|t| t.node_ids.clone()).collect();
            ids.sort_unstable();
            assert_eq!(ids, vec![0, 1, 2, 6], "{h}");
        }
    }

    #[test]
    fn root_only_tree() {
        let mut tree = nine_node_tree();
        tree.nodes.truncate(3);
        tree.nodes[1].status = NodeStatus::FathomedBound;
        tree.nodes[1].children = [None, None];
        tree.nodes[2].status = NodeStatus::FathomedInfeasible;
        tree.nodes[2].children = [None, None];
        let c = construct_trajectories(
            &tree,
            Heuristic::Mlpg,
            TerminalRule::BothChildrenFathomed,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(c.trajectories.len(), 1);
        assert_eq!(c.trajectories[0].node_ids, vec![0]);
        assert_eq!(c.trajectories[0].undiscounted_return(), 0.0);
    }

    #[test]
    fn open_leaves_are_ineligible() {
        let mut tree = nine_node_tree();
        tree.nodes[7].status = NodeStatus::Open;
        tree.nodes[8].status = NodeStatus::Open;
        let c = construct_trajectories(
            &tree,
            Heuristic::Deepest,
            TerminalRule::BothChildrenFathomed,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        // N6 has no fathomed leaf below it and is dropped
        assert_eq!(c.dropped, 1);
        let ids: Vec<_> = c.trajectories.iter().map(|t| t.node_ids.clone()).collect();
        assert_eq!(ids, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn full_episode_rewards() {
        let tree = nine_node_tree();
        let t = full_episode(&tree, true).unwrap();
        assert_eq!(t.node_ids, vec![0, 1, 2, 6]);
        assert_eq!(t.rewards, vec![-1.0, -1.0, -1.0, 0.0]);
        assert_eq!(full_episode(&tree, false).unwrap().rewards[3], -1.0);
    }

    #[test]
    fn terminal_rule_switch() {
        let c = construct_trajectories(
            &nine_node_tree(),
            Heuristic::VisitationOrder,
            TerminalRule::DestinationReached,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(c.trajectories[1].rewards, vec![0.0]);
    }

    #[test]
    fn missing_state_is_contract_error() {
        let tree = nine_node_tree();
        let c = run(Heuristic::Deepest);
        assert!(emit_transitions(&c.trajectories[0], &tree).is_err());
    }

    #[test]
    fn heuristic_names_parse() {
        for h in Heuristic::ALL {
            assert_eq!(h.as_str().parse::<Heuristic>().unwrap(), h);
        }
    }
}
