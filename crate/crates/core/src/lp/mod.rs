//! LP relaxations of branch-and-bound nodes.

mod simplex;

pub use simplex::LpSolver;

use crate::milp::MilpInstance;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Primal feasibility tolerance on rows and bounds.
pub const FEAS_TOL: f64 = 1e-7;
/// Distance from the nearest integer above which an integer variable counts
/// as fractional.
pub const INT_TOL: f64 = 1e-6;
/// Smallest admissible pivot element.
pub const PIVOT_TOL: f64 = 1e-9;
/// Reduced-cost threshold for optimality.
pub const DUAL_TOL: f64 = 1e-9;
pub const DEFAULT_PIVOT_LIMIT: usize = 50_000;

/// Per-node bound tightenings layered over the instance bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalBounds {
    overrides: BTreeMap<usize, (f64, f64)>,
}

impl LocalBounds {
    pub fn new() -> Self {
        Self::default()
    }

    /// Effective `(lower, upper)` of variable `j`.
    pub fn get(&self, inst: &MilpInstance, j: usize) -> (f64, f64) {
        self.overrides
            .get(&j)
            .copied()
            .unwrap_or((inst.lower[j], inst.upper[j]))
    }

    /// Intersects the current bounds of `j` with `[lower, upper]`.
    pub fn tighten(&mut self, inst: &MilpInstance, j: usize, lower: f64, upper: f64) {
        let (l, u) = self.get(inst, j);
        self.overrides.insert(j, (l.max(lower), u.min(upper)));
    }

    pub fn with_upper(&self, inst: &MilpInstance, j: usize, upper: f64) -> Self {
        let mut b = self.clone();
        b.tighten(inst, j, f64::NEG_INFINITY, upper);
        b
    }

    pub fn with_lower(&self, inst: &MilpInstance, j: usize, lower: f64) -> Self {
        let mut b = self.clone();
        b.tighten(inst, j, lower, f64::INFINITY);
        b
    }

    /// False when some override box is empty (the node is infeasible by bounds).
    pub fn is_consistent(&self) -> bool {
        self.overrides.values().all(|&(l, u)| l <= u)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, (f64, f64))> + '_ {
        self.overrides.iter().map(|(&j, &b)| (j, b))
    }

    pub fn len(&self) -> usize {
        self.overrides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.overrides.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Position of a variable relative to the final basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisStatus {
    Lower,
    Basic,
    Upper,
    /// Nonbasic free variable sitting at zero.
    Zero,
}

/// Basis snapshot used to warm-start a related LP. Opaque to callers.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub(crate) num_vars: usize,
    pub(crate) num_cons: usize,
    /// Basic column per row position (structural `j < n`, row logical `n + i`).
    pub(crate) head: Vec<usize>,
    /// For every column, whether a nonbasic column rests at its upper bound.
    pub(crate) at_upper: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Dual bound of the node when optimal; `+inf` when infeasible.
    pub objective: f64,
    pub x: Vec<f64>,
    /// Simplex pivots including bound flips.
    pub iterations: usize,
    pub fractional_set: Vec<usize>,
    /// Structural reduced costs `c_j - yᵀA_j` (empty unless optimal).
    pub reduced_costs: Vec<f64>,
    /// Row duals `y_i` (empty unless optimal).
    pub duals: Vec<f64>,
    pub var_status: Vec<BasisStatus>,
    /// Basis status of each row's logical; `Basic` means the row is not binding.
    pub row_status: Vec<BasisStatus>,
    pub(crate) basis: Option<WarmStart>,
}

impl LpResult {
    pub(crate) fn iteration_limit(iterations: usize) -> Self {
        LpResult {
            status: LpStatus::IterationLimit,
            objective: f64::NEG_INFINITY,
            ..Self::infeasible(iterations)
        }
    }

    pub(crate) fn infeasible(iterations: usize) -> Self {
        LpResult {
            status: LpStatus::Infeasible,
            objective: f64::INFINITY,
            x: Vec::new(),
            iterations,
            fractional_set: Vec::new(),
            reduced_costs: Vec::new(),
            duals: Vec::new(),
            var_status: Vec::new(),
            row_status: Vec::new(),
            basis: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Optimal with no fractional integer variable.
    pub fn is_integral(&self) -> bool {
        self.is_optimal() && self.fractional_set.is_empty()
    }

    /// Basis hint for child LPs. `None` unless the LP solved to optimality.
    pub fn warm_hint(&self) -> Option<WarmStart> {
        if self.is_optimal() {
            self.basis.clone()
        } else {
            None
        }
    }
}

/// Indices of integer variables whose value is farther than [`INT_TOL`]
/// from the nearest integer, ascending.
pub fn fractional_indices(inst: &MilpInstance, x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|&(j, &v)| inst.is_integer[j] && (v - v.round()).abs() > INT_TOL)
        .map(|(j, _)| j)
        .collect()
}

/// One-shot convenience wrapper around [`LpSolver`].
pub fn solve_lp(
    inst: &MilpInstance,
    bounds: &LocalBounds,
    pivot_limit: usize,
) -> crate::Result<LpResult> {
    LpSolver::new(inst).solve(bounds, None, pivot_limit)
}
