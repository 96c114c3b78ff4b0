use super::{first_argmax, product_score, BranchingPolicy};
use crate::bnb::BranchContext;
use crate::lp::LpResult;
use crate::milp::MilpInstance;
use crate::Result;

pub const DOWN: usize = 0;
pub const UP: usize = 1;

/// Per-variable sums and counts of unit dual-bound gains, per direction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudocostStats {
    sum: [Vec<f64>; 2],
    count: [Vec<usize>; 2],
}

impl PseudocostStats {
    pub fn new(num_vars: usize) -> Self {
        PseudocostStats {
            sum: [vec![0.0; num_vars], vec![0.0; num_vars]],
            count: [vec![0; num_vars], vec![0; num_vars]],
        }
    }

    pub fn update(&mut self, var: usize, direction: usize, unit_gain: f64) {
        if unit_gain.is_finite() {
            self.sum[direction][var] += unit_gain;
            self.count[direction][var] += 1;
        }
    }

    pub fn count(&self, var: usize, direction: usize) -> usize {
        self.count[direction][var]
    }

    /// Mean unit gain, `None` before the first observation.
    pub fn mean(&self, var: usize, direction: usize) -> Option<f64> {
        let c = self.count[direction][var];
        (c > 0).then(|| self.sum[direction][var] / c as f64)
    }

    /// Average of the per-variable means over initialized variables, or 1.
    pub fn global_mean(&self, direction: usize) -> f64 {
        let (mut total, mut k) = (0.0, 0usize);
        for var in 0..self.count[direction].len() {
            if let Some(m) = self.mean(var, direction) {
                total += m;
                k += 1;
            }
        }
        if k == 0 {
            1.0
        } else {
            total / k as f64
        }
    }

    /// Pseudocost of `var`, falling back to the global mean when unseen.
    pub fn estimate(&self, var: usize, direction: usize) -> f64 {
        self.mean(var, direction)
            .unwrap_or_else(|| self.global_mean(direction))
    }

    /// Product score for a candidate with fractional part `frac`.
    pub fn score(&self, var: usize, frac: f64) -> f64 {
        product_score(
            self.estimate(var, DOWN) * frac,
            self.estimate(var, UP) * (1.0 - frac),
        )
    }
}

/// Pseudocost branching with global-average initialization.
#[derive(Debug, Clone, Default)]
pub struct PseudocostBranching {
    pub stats: PseudocostStats,
}

impl PseudocostBranching {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pick(&self, x: &[f64], candidates: &[usize]) -> usize {
        let k = first_argmax(
            candidates
                .iter()
                .map(|&j| self.stats.score(j, x[j] - x[j].floor())),
        )
        .expect("non-empty candidates");
        candidates[k]
    }
}

impl BranchingPolicy for PseudocostBranching {
    fn name(&self) -> &str {
        "pseudocost"
    }

    fn start_solve(&mut self, inst: &MilpInstance) {
        self.stats = PseudocostStats::new(inst.num_vars);
    }

    fn choose(&mut self, ctx: &mut BranchContext<'_, '_>, candidates: &[usize]) -> Result<usize> {
        Ok(self.pick(&ctx.node_lp().x, candidates))
    }

    fn observe_branching(&mut self, node: &LpResult, var: usize, down: &LpResult, up: &LpResult) {
        let f = node.x[var] - node.x[var].floor();
        if down.is_optimal() {
            self.stats.update(var, DOWN, (down.objective - node.objective) / f);
        }
        if up.is_optimal() {
            self.stats.update(var, UP, (up.objective - node.objective) / (1.0 - f));
        }
    }
}
