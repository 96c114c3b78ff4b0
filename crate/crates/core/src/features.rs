//! Bipartite-graph observation of a focus node.
//!
//! Variable rows carry 19 node-local features followed by 20 tree-level
//! features that are identical for every variable of one state. Constraint
//! rows carry 5 features; edges carry the row-normalized coefficient.
//! Every `≥` row is sign-flipped into `≤` form before featurizing.

use crate::bnb::{NodeId, NodeStatus, SearchTree};
use crate::lp::{BasisStatus, LpResult, FEAS_TOL};
use crate::milp::{MilpInstance, Sense};
use crate::{Error, Result};
use ndarray::Array2;
use serde::Serialize;
use std::sync::Arc;

pub const NUM_BASE_VAR_FEATURES: usize = 19;
pub const NUM_TREE_FEATURES: usize = 20;
pub const NUM_VAR_FEATURES: usize = NUM_BASE_VAR_FEATURES + NUM_TREE_FEATURES;
pub const NUM_CONS_FEATURES: usize = 5;
/// Bumped whenever a feature definition changes; stored in checkpoints.
pub const FEATURE_SET_VERSION: &str = "retro-features-v1";
/// Denominator guard.
pub const EPS: f64 = 1e-12;
/// Ratio features are clipped to this magnitude.
const RATIO_CLIP: f64 = 1e3;

pub const BASE_VAR_FEATURE_NAMES: [&str; NUM_BASE_VAR_FEATURES] = [
    "obj_coef_norm",
    "lp_value",
    "frac",
    "at_lower",
    "at_upper",
    "basis_lower",
    "basis_basic",
    "basis_upper",
    "basis_zero",
    "reduced_cost_norm",
    "has_lower",
    "has_upper",
    "incumbent_value",
    "has_incumbent",
    "is_candidate",
    "root_lp_value",
    "basic_age",
    "pseudo_gain_down",
    "pseudo_gain_up",
];

pub const TREE_FEATURE_NAMES: [&str; NUM_TREE_FEATURES] = [
    "db_frac_change",
    "pb_frac_change",
    "max_db_frac_change",
    "max_pb_frac_change",
    "gap_frac",
    "num_leaves_frac",
    "num_feasible_leaves_frac",
    "num_infeasible_leaves_frac",
    "num_lp_iterations_frac",
    "num_siblings_frac",
    "is_curr_node_best",
    "is_curr_node_parent_best",
    "curr_node_depth",
    "curr_node_db_rel_init_db",
    "curr_node_db_rel_global_db",
    "is_best_sibling_none",
    "is_best_sibling_best_node",
    "best_sibling_db_rel_init_db",
    "best_sibling_db_rel_global_db",
    "best_sibling_db_rel_curr_node_db",
];

pub const CONS_FEATURE_NAMES: [&str; NUM_CONS_FEATURES] =
    ["obj_cosine", "bias_norm", "is_tight", "dual_norm", "tight_age"];

/// Variable-constraint incidence with its normalized coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub row: u32,
    pub col: u32,
    pub value: f64,
}

/// Observation of one focus node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BipartiteState {
    pub var_features: Array2<f64>,
    pub cons_features: Array2<f64>,
    /// Shared by every state of the same instance.
    pub edges: Arc<Vec<Edge>>,
    pub candidate_mask: Vec<bool>,
    pub focus_node_id: NodeId,
}

impl BipartiteState {
    pub fn num_vars(&self) -> usize {
        self.var_features.nrows()
    }

    pub fn num_cons(&self) -> usize {
        self.cons_features.nrows()
    }

    pub fn candidates(&self) -> Vec<usize> {
        self.candidate_mask
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(j, _)| j)
            .collect()
    }

    /// JSON dump of feature matrices and mask, for debugging.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = |a: &Array2<f64>| {
            a.rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect::<Vec<_>>()
        };
        serde_json::json!({
            "focus_node_id": self.focus_node_id,
            "var_feature_names": BASE_VAR_FEATURE_NAMES.iter().chain(TREE_FEATURE_NAMES.iter()).collect::<Vec<_>>(),
            "cons_feature_names": CONS_FEATURE_NAMES,
            "var_features": rows(&self.var_features),
            "cons_features": rows(&self.cons_features),
            "edges": self.edges.iter().map(|e| (e.row, e.col, e.value)).collect::<Vec<_>>(),
            "candidate_mask": self.candidate_mask,
        })
    }
}

/// Focus-time facts about the node and its neighbourhood.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusInfo {
    pub node: NodeId,
    pub depth: usize,
    pub dual_bound: f64,
    /// Focus node has the lowest dual bound among all open nodes.
    pub is_best: bool,
    pub parent_is_best: bool,
    /// Open sibling: `(id, dual bound, is best open node)`.
    pub sibling: Option<(NodeId, f64, bool)>,
}

/// Running solver statistics read by the tree-level features.
#[derive(Debug, Clone)]
pub struct TreeContext {
    pub init_dual_bound: f64,
    pub global_dual_bound: f64,
    pub global_primal_bound: f64,
    pub prev_dual_bound: f64,
    pub prev_primal_bound: f64,
    pub db_frac_change: f64,
    pub pb_frac_change: f64,
    /// Running maxima of the fractional changes.
    pub max_db_frac_change: f64,
    pub max_pb_frac_change: f64,
    pub num_nodes: usize,
    pub num_leaves: usize,
    pub num_feasible_leaves: usize,
    pub num_infeasible_leaves: usize,
    pub lp_iterations: usize,
    pub focus_count: usize,
    pub incumbent_node: Option<NodeId>,
    pub incumbent_x: Option<Vec<f64>>,
    pub focus: Option<FocusInfo>,
    root_x: Vec<f64>,
    var_last_basic: Vec<usize>,
    row_last_tight: Vec<usize>,
    pc_sum: [Vec<f64>; 2],
    pc_count: [Vec<usize>; 2],
    best_at_focus: Vec<bool>,
    statics: Arc<StaticFeatures>,
}

/// Per-instance quantities that never change during a solve.
#[derive(Debug)]
struct StaticFeatures {
    obj_norm: f64,
    row_sign: Vec<f64>,
    row_norm: Vec<f64>,
    row_cosine: Vec<f64>,
    edges: Arc<Vec<Edge>>,
}

impl StaticFeatures {
    fn new(inst: &MilpInstance) -> Self {
        let obj_norm = inst.objective.iter().map(|c| c * c).sum::<f64>().sqrt();
        let mut row_sign = Vec::with_capacity(inst.num_cons);
        let mut row_norm = Vec::with_capacity(inst.num_cons);
        let mut row_cosine = Vec::with_capacity(inst.num_cons);
        let mut edges = Vec::new();
        for (i, row) in inst.rows.iter().enumerate() {
            let sign = if row.sense == Sense::Ge { -1.0 } else { 1.0 };
            let norm = row.norm();
            let dot: f64 = row.coefs.iter().map(|&(j, a)| a * inst.objective[j]).sum();
            row_sign.push(sign);
            row_norm.push(norm);
            row_cosine.push(sign * dot / guard(norm * obj_norm));
            for &(j, a) in &row.coefs {
                edges.push(Edge {
                    row: i as u32,
                    col: j as u32,
                    value: sign * a / guard(norm),
                });
            }
        }
        StaticFeatures {
            obj_norm,
            row_sign,
            row_norm,
            row_cosine,
            edges: Arc::new(edges),
        }
    }
}

fn guard(d: f64) -> f64 {
    if d.abs() < EPS {
        if d < 0.0 {
            -EPS
        } else {
            EPS
        }
    } else {
        d
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if !a.is_finite() || !b.is_finite() {
        return 0.0;
    }
    (a / guard(b)).clamp(-RATIO_CLIP, RATIO_CLIP)
}

fn frac_change(current: f64, previous: f64) -> f64 {
    if !current.is_finite() || !previous.is_finite() {
        return 0.0;
    }
    ((current - previous).abs() / previous.abs().max(EPS)).min(RATIO_CLIP)
}

impl TreeContext {
    pub fn new(inst: &MilpInstance) -> Self {
        TreeContext {
            init_dual_bound: f64::NEG_INFINITY,
            global_dual_bound: f64::NEG_INFINITY,
            global_primal_bound: f64::INFINITY,
            prev_dual_bound: f64::NEG_INFINITY,
            prev_primal_bound: f64::INFINITY,
            db_frac_change: 0.0,
            pb_frac_change: 0.0,
            max_db_frac_change: 0.0,
            max_pb_frac_change: 0.0,
            num_nodes: 0,
            num_leaves: 0,
            num_feasible_leaves: 0,
            num_infeasible_leaves: 0,
            lp_iterations: 0,
            focus_count: 0,
            incumbent_node: None,
            incumbent_x: None,
            focus: None,
            root_x: vec![0.0; inst.num_vars],
            var_last_basic: vec![0; inst.num_vars],
            row_last_tight: vec![0; inst.num_cons],
            pc_sum: [vec![0.0; inst.num_vars], vec![0.0; inst.num_vars]],
            pc_count: [vec![0; inst.num_vars], vec![0; inst.num_vars]],
            best_at_focus: Vec::new(),
            statics: Arc::new(StaticFeatures::new(inst)),
        }
    }

    pub fn on_root(&mut self, root: &LpResult) {
        self.init_dual_bound = root.objective;
        self.global_dual_bound = root.objective;
        self.prev_dual_bound = root.objective;
        if root.is_optimal() {
            self.root_x = root.x.clone();
        }
    }

    pub fn on_node_created(&mut self) {
        self.num_nodes += 1;
    }

    pub fn on_leaf(&mut self, status: NodeStatus) {
        self.num_leaves += 1;
        match status {
            NodeStatus::FathomedInfeasible => self.num_infeasible_leaves += 1,
            _ => self.num_feasible_leaves += 1,
        }
    }

    pub fn on_incumbent(&mut self, node: NodeId, value: f64, x: &[f64]) {
        self.global_primal_bound = value;
        self.incumbent_node = Some(node);
        self.incumbent_x = Some(x.to_vec());
    }

    /// Records a child-LP bound gain per unit of fractionality (direction 0 =
    /// down, 1 = up).
    pub fn on_branch_gain(&mut self, var: usize, direction: usize, unit_gain: f64) {
        if unit_gain.is_finite() {
            self.pc_sum[direction][var] += unit_gain;
            self.pc_count[direction][var] += 1;
        }
    }

    /// Advances the focus event. `global_dual` must already include the
    /// focus node's own bound.
    pub fn on_focus(&mut self, info: FocusInfo, lp: &LpResult, global_dual: f64) {
        self.focus_count += 1;
        self.global_dual_bound = global_dual;
        self.db_frac_change = frac_change(global_dual, self.prev_dual_bound);
        self.pb_frac_change = frac_change(self.global_primal_bound, self.prev_primal_bound);
        self.max_db_frac_change = self.max_db_frac_change.max(self.db_frac_change);
        self.max_pb_frac_change = self.max_pb_frac_change.max(self.pb_frac_change);
        self.prev_dual_bound = global_dual;
        self.prev_primal_bound = self.global_primal_bound;
        for (j, s) in lp.var_status.iter().enumerate() {
            if *s == BasisStatus::Basic {
                self.var_last_basic[j] = self.focus_count;
            }
        }
        for (i, s) in lp.row_status.iter().enumerate() {
            if *s != BasisStatus::Basic {
                self.row_last_tight[i] = self.focus_count;
            }
        }
        if self.best_at_focus.len() <= info.node {
            self.best_at_focus.resize(info.node + 1, false);
        }
        self.best_at_focus[info.node] = info.is_best;
        self.focus = Some(info);
    }

    pub fn was_best_at_focus(&self, node: NodeId) -> bool {
        self.best_at_focus.get(node).copied().unwrap_or(false)
    }

    fn pseudo_gain(&self, direction: usize, j: usize) -> f64 {
        let c = self.pc_count[direction][j];
        if c == 0 {
            return 0.0;
        }
        let mean = self.pc_sum[direction][j] / c as f64;
        (mean / (self.init_dual_bound.abs() + 1.0)).clamp(0.0, RATIO_CLIP)
    }

    fn tree_features(&self) -> [f64; NUM_TREE_FEATURES] {
        let focus = self.focus.as_ref().expect("tree features need a focus event");
        let nodes = self.num_nodes.max(1) as f64;
        let (gd, gp) = (self.global_dual_bound, self.global_primal_bound);
        let gap = if gp.is_finite() && gd.is_finite() {
            ((gp - gd).abs() / gp.abs().max(gd.abs()).max(EPS)).min(1.0)
        } else {
            1.0
        };
        let (sib_none, sib_best, sib_init, sib_global, sib_curr) = match focus.sibling {
            None => (1.0, 0.0, 0.0, 0.0, 0.0),
            Some((_, db, best)) => (
                0.0,
                best as u8 as f64,
                ratio(self.init_dual_bound, db),
                ratio(gd, db),
                ratio(db, focus.dual_bound),
            ),
        };
        [
            self.db_frac_change,
            self.pb_frac_change,
            self.max_db_frac_change,
            self.max_pb_frac_change,
            gap,
            self.num_leaves as f64 / nodes,
            self.num_feasible_leaves as f64 / nodes,
            self.num_infeasible_leaves as f64 / nodes,
            self.num_nodes as f64 / self.lp_iterations.max(1) as f64,
            focus.sibling.is_some() as u8 as f64 / nodes,
            focus.is_best as u8 as f64,
            focus.parent_is_best as u8 as f64,
            focus.depth as f64,
            ratio(self.init_dual_bound, focus.dual_bound),
            ratio(gd, focus.dual_bound),
            sib_none,
            sib_best,
            sib_init,
            sib_global,
            sib_curr,
        ]
    }
}

/// Builds the observation of `node`, which must be the context's current
/// focus node and carry an optimal LP.
pub fn extract(
    inst: &MilpInstance,
    tree: &SearchTree,
    node: NodeId,
    ctx: &TreeContext,
) -> Result<BipartiteState> {
    let tn = tree
        .nodes
        .get(node)
        .ok_or_else(|| Error::Contract(format!("node {node} not in tree")))?;
    let lp = tn
        .lp
        .as_ref()
        .filter(|lp| lp.is_optimal())
        .ok_or_else(|| Error::Contract(format!("node {node} has no optimal LP")))?;
    if ctx.focus.as_ref().map(|f| f.node) != Some(node) {
        return Err(Error::Contract(format!("node {node} is not the focus node")));
    }
    let (n, m) = (inst.num_vars, inst.num_cons);
    let st = &ctx.statics;
    let tree_feats = ctx.tree_features();
    let mut candidate_mask = vec![false; n];
    for &j in &lp.fractional_set {
        candidate_mask[j] = true;
    }
    let denom = (ctx.focus_count + 1) as f64;

    let mut var = Array2::<f64>::zeros((n, NUM_VAR_FEATURES));
    for j in 0..n {
        let (l, u) = tn.local_bounds.get(inst, j);
        let x = lp.x[j];
        let status = lp.var_status[j];
        let mut row = var.row_mut(j);
        row[0] = inst.objective[j] / guard(st.obj_norm);
        row[1] = x;
        row[2] = if inst.is_integer[j] { x - x.floor() } else { 0.0 };
        row[3] = (l.is_finite() && (x - l).abs() <= FEAS_TOL) as u8 as f64;
        row[4] = (u.is_finite() && (x - u).abs() <= FEAS_TOL) as u8 as f64;
        let slot = match status {
            BasisStatus::Lower => 5,
            BasisStatus::Basic => 6,
            BasisStatus::Upper => 7,
            BasisStatus::Zero => 8,
        };
        row[slot] = 1.0;
        row[9] = lp.reduced_costs[j] / guard(st.obj_norm);
        row[10] = l.is_finite() as u8 as f64;
        row[11] = u.is_finite() as u8 as f64;
        if let Some(inc) = &ctx.incumbent_x {
            row[12] = inc[j];
            row[13] = 1.0;
        }
        row[14] = candidate_mask[j] as u8 as f64;
        row[15] = ctx.root_x[j];
        row[16] = (ctx.focus_count - ctx.var_last_basic[j].min(ctx.focus_count)) as f64 / denom;
        row[17] = ctx.pseudo_gain(0, j);
        row[18] = ctx.pseudo_gain(1, j);
        for (k, v) in tree_feats.iter().enumerate() {
            row[NUM_BASE_VAR_FEATURES + k] = *v;
        }
    }

    let mut cons = Array2::<f64>::zeros((m, NUM_CONS_FEATURES));
    for (i, r) in inst.rows.iter().enumerate() {
        let norm = guard(st.row_norm[i]);
        let act = r.activity(&lp.x);
        let mut row = cons.row_mut(i);
        row[0] = st.row_cosine[i];
        row[1] = st.row_sign[i] * r.rhs / norm;
        row[2] = ((act - r.rhs).abs() <= 1e-6 * r.rhs.abs().max(1.0)) as u8 as f64;
        row[3] = (st.row_sign[i] * lp.duals[i] / (norm * guard(st.obj_norm))).clamp(-RATIO_CLIP, RATIO_CLIP);
        row[4] = (ctx.focus_count - ctx.row_last_tight[i].min(ctx.focus_count)) as f64 / denom;
    }

    Ok(BipartiteState {
        var_features: var,
        cons_features: cons,
        edges: Arc::clone(&st.edges),
        candidate_mask,
        focus_node_id: node,
    })
}

/// Index of a named tree feature within a variable row.
pub fn tree_feature_index(name: &str) -> Option<usize> {
    TREE_FEATURE_NAMES
        .iter()
        .position(|&n| n == name)
        .map(|k| NUM_BASE_VAR_FEATURES + k)
}

/// Index of a named node-local variable feature.
pub fn base_feature_index(name: &str) -> Option<usize> {
    BASE_VAR_FEATURE_NAMES.iter().position(|&n| n == name)
}
