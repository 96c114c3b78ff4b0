use super::selector::OpenNodes;
use super::{
    fathom_check, NodeId, NodeSelectorKind, NodeStatus, SearchTree, SolveStats, SolveStatus,
    TreeNode, BOUND_TOL,
};
use crate::branch::BranchingPolicy;
use crate::features::{self, BipartiteState, FocusInfo, TreeContext};
use crate::lp::{LocalBounds, LpResult, LpSolver, LpStatus, DEFAULT_PIVOT_LIMIT};
use crate::milp::MilpInstance;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Maximum number of focused nodes.
    pub max_nodes: Option<usize>,
    pub max_seconds: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_nodes: None,
            max_seconds: 3600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub selector: NodeSelectorKind,
    pub limits: Limits,
    pub pivot_limit: usize,
    /// Keep the observation of every focused node in [`SearchTree::states`].
    pub capture_states: bool,
    /// Seeds the rng handed to the branching policy.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            selector: NodeSelectorKind::BestFirst,
            limits: Limits::default(),
            pivot_limit: DEFAULT_PIVOT_LIMIT,
            capture_states: false,
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn with_selector(selector: NodeSelectorKind) -> Self {
        SolveOptions {
            selector,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub stats: SolveStats,
    pub tree: SearchTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

/// Everything a branching policy may look at (or probe) at the focus node.
pub struct BranchContext<'c, 'i> {
    pub inst: &'i MilpInstance,
    pub tree: &'c SearchTree,
    pub node: NodeId,
    pub tree_context: &'c TreeContext,
    pub rng: &'c mut ChaCha8Rng,
    lp: &'c LpSolver<'i>,
    pivot_limit: usize,
    stats: &'c mut SolveStats,
    state: &'c mut Option<Arc<BipartiteState>>,
}

impl<'c, 'i> BranchContext<'c, 'i> {
    pub fn focus(&self) -> &TreeNode {
        &self.tree.nodes[self.node]
    }

    /// The focus node's optimal LP.
    pub fn node_lp(&self) -> &LpResult {
        self.focus()
            .lp
            .as_ref()
            .expect("focus node always carries an optimal LP")
    }

    /// Solves one child LP of the focus node without creating the child.
    /// Pivots are charged to the probing counters.
    pub fn probe(&mut self, var: usize, direction: Direction) -> Result<LpResult> {
        let node = &self.tree.nodes[self.node];
        let lp = node.lp.as_ref().expect("focus node has an LP");
        let v = lp.x[var];
        let bounds = match direction {
            Direction::Down => node.local_bounds.with_upper(self.inst, var, v.floor()),
            Direction::Up => node.local_bounds.with_lower(self.inst, var, v.ceil()),
        };
        let hint = lp.warm_hint();
        let r = self.lp.solve(&bounds, hint.as_ref(), self.pivot_limit)?;
        self.stats.probing_iterations += r.iterations;
        self.stats.num_lp_iterations += r.iterations;
        self.stats.probing_lp_solves += 1;
        if r.status == LpStatus::IterationLimit {
            self.stats.probing_limit_hits += 1;
        }
        Ok(r)
    }

    /// Observation of the focus node, extracted once and cached.
    pub fn state(&mut self) -> Result<Arc<BipartiteState>> {
        if let Some(s) = self.state.as_ref() {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(features::extract(self.inst, self.tree, self.node, self.tree_context)?);
        *self.state = Some(Arc::clone(&s));
        Ok(s)
    }
}

struct Search {
    tree: SearchTree,
    ctx: TreeContext,
    stats: SolveStats,
    open: OpenNodes,
    incumbent: f64,
    events: usize,
}

impl Search {
    fn add_node(&mut self, parent: Option<NodeId>, bounds: LocalBounds, lp: LpResult) -> NodeId {
        let id = self.tree.nodes.len();
        let depth = parent.map_or(0, |p| self.tree.nodes[p].depth + 1);
        self.tree.nodes.push(TreeNode {
            id,
            parent,
            depth,
            local_bounds: bounds,
            dual_bound: lp.objective,
            lp: Some(lp),
            status: NodeStatus::Open,
            children: [None, None],
            branch_var: None,
            visit_order: None,
            closed_order: None,
        });
        self.ctx.on_node_created();
        id
    }

    fn close(&mut self, id: NodeId, status: NodeStatus) {
        let node = &mut self.tree.nodes[id];
        node.status = status;
        node.closed_order = Some(self.events);
        self.events += 1;
        self.ctx.on_leaf(status);
    }

    /// Applies the fathoming rules to a new node; returns true if it stays open.
    fn settle(&mut self, id: NodeId) -> bool {
        let lp = self.tree.nodes[id].lp.as_ref().expect("new node has LP");
        let status = fathom_check(lp, self.incumbent);
        if status == NodeStatus::FathomedIntegral && lp.objective < self.incumbent {
            let (value, x) = (lp.objective, lp.x.clone());
            self.incumbent = value;
            self.ctx.on_incumbent(id, value, &x);
            self.stats.incumbent_x = Some(x);
            for pruned in self.open.drain_dominated(value - BOUND_TOL) {
                self.close(pruned, NodeStatus::FathomedBound);
            }
        }
        if status == NodeStatus::Open {
            true
        } else {
            self.close(id, status);
            false
        }
    }

    fn count_lp(&mut self, lp: &LpResult) {
        self.stats.num_lp_solves += 1;
        self.stats.num_lp_iterations += lp.iterations;
        self.ctx.lp_iterations += lp.iterations;
    }
}

/// Runs branch-and-bound on `inst` with the given policy and options.
pub fn solve(
    inst: &MilpInstance,
    brancher: &mut dyn BranchingPolicy,
    opts: &SolveOptions,
) -> Result<SolveOutcome> {
    inst.check_for_branching()?;
    let start = Instant::now();
    let solver = LpSolver::new(inst);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    brancher.start_solve(inst);
    let mut s = Search {
        tree: SearchTree::default(),
        ctx: TreeContext::new(inst),
        stats: SolveStats {
            num_nodes: 0,
            num_lp_solves: 0,
            num_lp_iterations: 0,
            probing_iterations: 0,
            probing_lp_solves: 0,
            probing_limit_hits: 0,
            primal_bound: f64::INFINITY,
            dual_bound: f64::NEG_INFINITY,
            status: SolveStatus::Optimal,
            infeasible: false,
            incumbent_x: None,
            wall_ms: 0,
        },
        open: OpenNodes::new(opts.selector),
        incumbent: f64::INFINITY,
        events: 0,
    };

    let root_lp = solver.solve(&LocalBounds::new(), None, opts.pivot_limit)?;
    s.count_lp(&root_lp);
    match root_lp.status {
        LpStatus::Unbounded => {
            return Err(Error::Contract(format!(
                "LP relaxation of '{}' is unbounded",
                inst.name
            )))
        }
        LpStatus::IterationLimit => {
            s.add_node(None, LocalBounds::new(), root_lp);
            s.stats.status = SolveStatus::LpLimit;
            return Ok(finish(s, start));
        }
        _ => {}
    }
    s.ctx.on_root(&root_lp);
    let root_bound = root_lp.objective;
    let root = s.add_node(None, LocalBounds::new(), root_lp);
    if s.settle(root) {
        s.open.push_children(&[(root, root_bound)]);
    }

    let mut visits = 0usize;
    loop {
        if s.open.is_empty() {
            break;
        }
        if opts.limits.max_nodes.is_some_and(|max| s.stats.num_nodes >= max) {
            s.stats.status = SolveStatus::NodeLimit;
            break;
        }
        if start.elapsed().as_secs_f64() > opts.limits.max_seconds {
            s.stats.status = SolveStatus::TimeLimit;
            break;
        }
        let id = s.open.pop().expect("open set is non-empty");
        s.tree.nodes[id].visit_order = Some(visits);
        visits += 1;
        s.stats.num_nodes += 1;

        let node_bound = s.tree.nodes[id].dual_bound;
        let best_other = s.open.best().map(|(b, _)| b);
        let global_dual = best_other.map_or(node_bound, |b| b.min(node_bound));
        let parent = s.tree.nodes[id].parent;
        let sibling = parent
            .and_then(|p| s.tree.nodes[p].child_ids().find(|&c| c != id))
            .filter(|&sib| s.open.contains(sib))
            .map(|sib| {
                let b = s.tree.nodes[sib].dual_bound;
                (sib, b, b <= global_dual + BOUND_TOL)
            });
        let info = FocusInfo {
            node: id,
            depth: s.tree.nodes[id].depth,
            dual_bound: node_bound,
            is_best: best_other.is_none_or(|b| node_bound <= b + BOUND_TOL),
            parent_is_best: parent.is_some_and(|p| s.ctx.was_best_at_focus(p)),
            sibling,
        };
        {
            let lp = s.tree.nodes[id].lp.as_ref().expect("open node has LP");
            s.ctx.on_focus(info, lp, global_dual);
        }
        let cands = super::candidates(&s.tree.nodes[id])?;
        debug_assert!(!cands.is_empty(), "open nodes are fractional");

        let mut state_cache: Option<Arc<BipartiteState>> = None;
        let var = {
            let mut bctx = BranchContext {
                inst,
                tree: &s.tree,
                node: id,
                tree_context: &s.ctx,
                rng: &mut rng,
                lp: &solver,
                pivot_limit: opts.pivot_limit,
                stats: &mut s.stats,
                state: &mut state_cache,
            };
            let var = brancher.choose(&mut bctx, &cands)?;
            if opts.capture_states {
                bctx.state()?;
            }
            var
        };
        if cands.binary_search(&var).is_err() {
            return Err(Error::Policy(format!(
                "{} chose variable {var}, which is not a branching candidate at node {id}",
                brancher.name()
            )));
        }
        if let Some(state) = state_cache.filter(|_| opts.capture_states) {
            s.tree.states.insert(id, state);
        }

        let (down_bounds, up_bounds, down_lp, up_lp) = {
            let node = &s.tree.nodes[id];
            let lp = node.lp.as_ref().expect("focus LP");
            let v = lp.x[var];
            let hint = lp.warm_hint();
            let down_bounds = node.local_bounds.with_upper(inst, var, v.floor());
            let up_bounds = node.local_bounds.with_lower(inst, var, v.ceil());
            let down = solver.solve(&down_bounds, hint.as_ref(), opts.pivot_limit)?;
            let up = solver.solve(&up_bounds, hint.as_ref(), opts.pivot_limit)?;
            (down_bounds, up_bounds, down, up)
        };
        s.count_lp(&down_lp);
        s.count_lp(&up_lp);
        if down_lp.status == LpStatus::IterationLimit || up_lp.status == LpStatus::IterationLimit {
            s.stats.status = SolveStatus::LpLimit;
            s.open.push_children(&[(id, node_bound)]);
            break;
        }
        {
            let lp = s.tree.nodes[id].lp.as_ref().expect("focus LP");
            brancher.observe_branching(lp, var, &down_lp, &up_lp);
            let f = lp.x[var] - lp.x[var].floor();
            let base = lp.objective;
            for (dir, child, width) in [(0, &down_lp, f), (1, &up_lp, 1.0 - f)] {
                if child.is_optimal() {
                    s.ctx.on_branch_gain(var, dir, (child.objective - base) / width);
                }
            }
        }
        let down_bound = down_lp.objective;
        let up_bound = up_lp.objective;
        let down = s.add_node(Some(id), down_bounds, down_lp);
        let up = s.add_node(Some(id), up_bounds, up_lp);
        {
            let node = &mut s.tree.nodes[id];
            node.status = NodeStatus::Branched;
            node.children = [Some(down), Some(up)];
            node.branch_var = Some(var);
        }
        let mut keep = Vec::with_capacity(2);
        if s.settle(down) {
            keep.push((down, down_bound));
        }
        if s.settle(up) {
            keep.push((up, up_bound));
        }
        // an incumbent found at the up child can dominate the down child
        if let Some(&(c, b)) = keep.first() {
            if c == down && b >= s.incumbent - BOUND_TOL {
                s.close(c, NodeStatus::FathomedBound);
                keep.remove(0);
            }
        }
        s.open.push_children(&keep);
    }
    Ok(finish(s, start))
}

fn finish(mut s: Search, start: Instant) -> SolveOutcome {
    s.stats.primal_bound = s.incumbent;
    s.stats.infeasible = s.stats.status == SolveStatus::Optimal && s.incumbent == f64::INFINITY;
    s.stats.dual_bound = if s.stats.status == SolveStatus::Optimal {
        s.incumbent
    } else {
        s.open
            .best()
            .map_or(s.incumbent, |(b, _)| b.min(s.incumbent))
    };
    s.stats.wall_ms = start.elapsed().as_millis() as u64;
    SolveOutcome {
        stats: s.stats,
        tree: s.tree,
    }
}
