//! Bounded-variable primal simplex on `[A | -I] (x, r) = 0` with one logical
//! `r_i` per row carrying the row's sense as bounds. The all-logical basis is
//! always nonsingular, and a composite phase 1 (minimizing the sum of bound
//! violations of basic variables) lets any basis, including a parent's,
//! serve as a starting point.

use super::{
    fractional_indices, BasisStatus, LocalBounds, LpResult, LpStatus, WarmStart, DUAL_TOL,
    FEAS_TOL, PIVOT_TOL,
};
use crate::milp::{MilpInstance, Sense};
use crate::{Error, Result};

/// Degenerate pivots tolerated before switching to Bland's rule.
const STALL_LIMIT: usize = 50;
/// Pivots between refactorizations of the basis inverse.
const REFACTOR_EVERY: usize = 100;
const SINGULAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    Lower,
    Upper,
    Zero,
}

/// LP solver bound to one instance. Holds the column-major copy of `A`;
/// per-solve scratch is allocated inside [`solve`](Self::solve).
pub struct LpSolver<'a> {
    inst: &'a MilpInstance,
    cols: Vec<Vec<(usize, f64)>>,
    n: usize,
    m: usize,
}

struct Work<'s, 'a> {
    solver: &'s LpSolver<'a>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    head: Vec<usize>,
    /// Row-major dense basis inverse.
    binv: Vec<f64>,
    /// Eta updates applied to `binv` since the last refactorization.
    since_refactor: usize,
}

enum DualEnd {
    /// Primal feasible; the basis is optimal up to primal cleanup.
    Feasible,
    Infeasible,
    Limit,
    /// The starting basis was not dual feasible.
    NotDualFeasible,
}

impl<'a> LpSolver<'a> {
    pub fn new(inst: &'a MilpInstance) -> Self {
        let n = inst.num_vars;
        let mut cols = vec![Vec::new(); n];
        for (i, row) in inst.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        LpSolver {
            inst,
            cols,
            n,
            m: inst.num_cons,
        }
    }

    pub fn instance(&self) -> &'a MilpInstance {
        self.inst
    }

    /// Solves the relaxation under `bounds`, optionally starting from a
    /// basis hint. Invalid hints fall back to the all-logical basis.
    pub fn solve(
        &self,
        bounds: &LocalBounds,
        hint: Option<&WarmStart>,
        pivot_limit: usize,
    ) -> Result<LpResult> {
        if !bounds.is_consistent() {
            return Ok(LpResult::infeasible(0));
        }
        let mut work = Work::new(self, bounds);
        if work.lo.iter().zip(&work.hi).any(|(l, h)| l > h) {
            return Ok(LpResult::infeasible(0));
        }
        let warm = hint.is_some_and(|h| work.apply_hint(h));
        let mut iterations = 0;
        if warm {
            match work.dual(pivot_limit, &mut iterations)? {
                DualEnd::Infeasible => return Ok(LpResult::infeasible(iterations)),
                DualEnd::Limit => return Ok(LpResult::iteration_limit(iterations)),
                DualEnd::Feasible | DualEnd::NotDualFeasible => {}
            }
        } else {
            work.cold_basis();
        }
        work.run(pivot_limit, iterations)
    }
}

impl<'s, 'a> Work<'s, 'a> {
    fn new(solver: &'s LpSolver<'a>, bounds: &LocalBounds) -> Self {
        let (n, m) = (solver.n, solver.m);
        let inst = solver.inst;
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        for j in 0..n {
            let (l, u) = bounds.get(inst, j);
            lo.push(l);
            hi.push(u);
        }
        for row in &inst.rows {
            let (l, u) = match row.sense {
                Sense::Le => (f64::NEG_INFINITY, row.rhs),
                Sense::Ge => (row.rhs, f64::INFINITY),
                Sense::Eq => (row.rhs, row.rhs),
            };
            lo.push(l);
            hi.push(u);
        }
        let mut cost = inst.objective.clone();
        cost.resize(n + m, 0.0);
        Work {
            solver,
            lo,
            hi,
            cost,
            x: vec![0.0; n + m],
            state: vec![VarState::Lower; n + m],
            head: Vec::with_capacity(m),
            binv: vec![0.0; m * m],
            since_refactor: 0,
        }
    }

    fn n(&self) -> usize {
        self.solver.n
    }

    fn m(&self) -> usize {
        self.solver.m
    }

    /// Sparse column `k` of `[A | -I]`.
    fn for_col(&self, k: usize, mut f: impl FnMut(usize, f64)) {
        let n = self.n();
        if k < n {
            for &(i, a) in &self.solver.cols[k] {
                f(i, a);
            }
        } else {
            f(k - n, -1.0);
        }
    }

    /// Puts a nonbasic variable at the bound its state names.
    fn place_nonbasic(&mut self, k: usize, prefer_upper: bool) {
        let (l, u) = (self.lo[k], self.hi[k]);
        let (state, value) = match (l.is_finite(), u.is_finite()) {
            (true, true) if prefer_upper && l < u => (VarState::Upper, u),
            (true, _) => (VarState::Lower, l),
            (false, true) => (VarState::Upper, u),
            (false, false) => (VarState::Zero, 0.0),
        };
        self.state[k] = state;
        self.x[k] = value;
    }

    fn cold_basis(&mut self) {
        let (n, m) = (self.n(), self.m());
        for j in 0..n {
            self.place_nonbasic(j, self.cost[j] < 0.0);
        }
        self.head = (n..n + m).collect();
        for k in n..n + m {
            self.state[k] = VarState::Basic;
        }
        // B = -I
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            self.binv[i * m + i] = -1.0;
        }
        self.compute_basic_values();
    }

    fn apply_hint(&mut self, hint: &WarmStart) -> bool {
        let (n, m) = (self.n(), self.m());
        if hint.num_vars != n
            || hint.num_cons != m
            || hint.head.len() != m
            || hint.at_upper.len() != n + m
        {
            return false;
        }
        let mut seen = vec![false; n + m];
        for &k in &hint.head {
            if k >= n + m || seen[k] {
                return false;
            }
            seen[k] = true;
        }
        self.head = hint.head.clone();
        for k in 0..n + m {
            if seen[k] {
                self.state[k] = VarState::Basic;
            } else {
                self.place_nonbasic(k, hint.at_upper[k]);
            }
        }
        if self.refactor().is_err() {
            return false;
        }
        self.compute_basic_values();
        true
    }

    /// Rebuilds the dense basis inverse. Basic logicals are trivial, so only
    /// the kernel of basic structural columns restricted to the rows whose
    /// logical is nonbasic is inverted (Gauss–Jordan); the remaining rows
    /// follow by substitution.
    fn refactor(&mut self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        let mut pos_of_logical = vec![usize::MAX; m];
        let mut structural = Vec::new();
        for (p, &k) in self.head.iter().enumerate() {
            if k < n {
                structural.push(p);
            } else {
                pos_of_logical[k - n] = p;
            }
        }
        let kernel_rows: Vec<usize> = (0..m).filter(|&i| pos_of_logical[i] == usize::MAX).collect();
        let s = structural.len();
        if kernel_rows.len() != s {
            return Err(Error::Solver("basis head has repeated logicals".into()));
        }
        let mut slot = vec![usize::MAX; m];
        for (r, &i) in kernel_rows.iter().enumerate() {
            slot[i] = r;
        }
        let mut k = vec![0.0; s * s];
        for (c, &p) in structural.iter().enumerate() {
            for &(i, a) in &self.solver.cols[self.head[p]] {
                if slot[i] != usize::MAX {
                    k[slot[i] * s + c] = a;
                }
            }
        }
        // Gauss–Jordan on [K | I]; afterwards `inv` holds K⁻¹ with rows
        // indexed by kernel column and columns by kernel row
        let mut inv = vec![0.0; s * s];
        for i in 0..s {
            inv[i * s + i] = 1.0;
        }
        for c in 0..s {
            let (piv_row, piv_abs) = (c..s)
                .map(|r| (r, k[r * s + c].abs()))
                .fold((c, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_abs < SINGULAR_TOL {
                return Err(Error::Solver(format!("singular basis at column {c}")));
            }
            if piv_row != c {
                for t in 0..s {
                    k.swap(c * s + t, piv_row * s + t);
                    inv.swap(c * s + t, piv_row * s + t);
                }
            }
            let d = k[c * s + c];
            for t in c..s {
                k[c * s + t] /= d;
            }
            for t in 0..s {
                inv[c * s + t] /= d;
            }
            let (head_rows, rest) = k.split_at_mut(c * s);
            let (pivot_k, tail_rows) = rest.split_at_mut(s);
            let (inv_head, inv_rest) = inv.split_at_mut(c * s);
            let (pivot_inv, inv_tail) = inv_rest.split_at_mut(s);
            for (krow, irow) in head_rows
                .chunks_exact_mut(s)
                .chain(tail_rows.chunks_exact_mut(s))
                .zip(inv_head.chunks_exact_mut(s).chain(inv_tail.chunks_exact_mut(s)))
            {
                let f = krow[c];
                if f != 0.0 {
                    for t in c..s {
                        krow[t] -= f * pivot_k[t];
                    }
                    for (a, b) in irow.iter_mut().zip(pivot_inv.iter()) {
                        *a -= f * b;
                    }
                }
            }
        }
        let binv = &mut self.binv;
        binv.iter_mut().for_each(|v| *v = 0.0);
        for (c, &p) in structural.iter().enumerate() {
            let src = &inv[c * s..(c + 1) * s];
            for (r, &i) in kernel_rows.iter().enumerate() {
                binv[p * m + i] = src[r];
            }
        }
        // logical rows: r_i = A_{i,S} x_S - b_i
        for (i, &p) in pos_of_logical.iter().enumerate() {
            if p != usize::MAX {
                binv[p * m + i] = -1.0;
            }
        }
        for (c, &p) in structural.iter().enumerate() {
            for &(i, a) in &self.solver.cols[self.head[p]] {
                let q = pos_of_logical[i];
                if q == usize::MAX {
                    continue;
                }
                let src = &inv[c * s..(c + 1) * s];
                for (r, &ir) in kernel_rows.iter().enumerate() {
                    binv[q * m + ir] += a * src[r];
                }
            }
        }
        Ok(())
    }

    /// `x_B = B⁻¹ (-N x_N)`.
    fn compute_basic_values(&mut self) {
        let (n, m) = (self.n(), self.m());
        let mut rhs = vec![0.0; m];
        for k in 0..n + m {
            if self.state[k] != VarState::Basic && self.x[k] != 0.0 {
                let v = self.x[k];
                self.for_col(k, |i, a| rhs[i] -= a * v);
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.head[p]] = v;
        }
    }

    fn infeasibility(&self, k: usize) -> f64 {
        let v = self.x[k];
        if v < self.lo[k] - FEAS_TOL {
            -1.0
        } else if v > self.hi[k] + FEAS_TOL {
            1.0
        } else {
            0.0
        }
    }

    fn refresh(&mut self) -> Result<()> {
        self.refactor()?;
        self.compute_basic_values();
        self.since_refactor = 0;
        Ok(())
    }

    /// `alpha = B⁻¹ a_q`.
    fn column(&self, q: usize, alpha: &mut [f64]) {
        let m = self.m();
        alpha.iter_mut().for_each(|v| *v = 0.0);
        self.for_col(q, |i, a| {
            for (p, v) in alpha.iter_mut().enumerate() {
                *v += self.binv[p * m + i] * a;
            }
        });
    }

    /// Product-form update of `binv` after the column `alpha` replaced
    /// basis position `r`.
    fn eta_update(&mut self, r: usize, alpha: &[f64]) -> Result<()> {
        let m = self.m();
        let piv = alpha[r];
        if piv.abs() < PIVOT_TOL {
            return Err(Error::Solver(format!("pivot {piv:e} below tolerance")));
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        pivot_row.iter_mut().for_each(|v| *v /= piv);
        for (p, row) in before
            .chunks_exact_mut(m)
            .enumerate()
            .chain(after.chunks_exact_mut(m).enumerate().map(|(k, row)| (k + r + 1, row)))
        {
            let f = alpha[p];
            if f != 0.0 {
                for (v, &b) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * b;
                }
            }
        }
        self.since_refactor += 1;
        Ok(())
    }

    /// `y = c_B B⁻¹` for the given basic costs.
    fn duals(&self, basic_cost: impl Iterator<Item = f64>, y: &mut [f64]) {
        let m = self.m();
        y.iter_mut().for_each(|v| *v = 0.0);
        for (p, cb) in basic_cost.enumerate() {
            if cb != 0.0 {
                let row = &self.binv[p * m..(p + 1) * m];
                for (yi, &b) in y.iter_mut().zip(row) {
                    *yi += cb * b;
                }
            }
        }
    }

    /// Bounded dual simplex from a dual-feasible basis, as left by a parent
    /// node whose bounds were then tightened. Leaving row: largest bound
    /// violation; entering column: smallest dual ratio; ties by index.
    fn dual(&mut self, pivot_limit: usize, iterations: &mut usize) -> Result<DualEnd> {
        let (n, m) = (self.n(), self.m());
        let mut y = vec![0.0; m];
        let mut d = vec![0.0; n + m];
        let mut alpha = vec![0.0; m];
        let mut verified = false;
        loop {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refresh()?;
            }
            self.duals(self.head.iter().map(|&k| self.cost[k]), &mut y);
            for k in 0..n + m {
                if self.state[k] == VarState::Basic {
                    d[k] = 0.0;
                    continue;
                }
                let mut dk = self.cost[k];
                self.for_col(k, |i, a| dk -= y[i] * a);
                d[k] = dk;
                if self.lo[k] == self.hi[k] {
                    continue;
                }
                let infeasible = match self.state[k] {
                    VarState::Lower => dk < -DUAL_TOL,
                    VarState::Upper => dk > DUAL_TOL,
                    VarState::Zero => dk.abs() > DUAL_TOL,
                    VarState::Basic => false,
                };
                if infeasible {
                    return Ok(DualEnd::NotDualFeasible);
                }
            }

            let mut leave: Option<(usize, f64, bool)> = None;
            for (p, &k) in self.head.iter().enumerate() {
                let v = self.x[k];
                let (viol, to_lower) = if v < self.lo[k] - FEAS_TOL {
                    (self.lo[k] - v, true)
                } else if v > self.hi[k] + FEAS_TOL {
                    (v - self.hi[k], false)
                } else {
                    continue;
                };
                let better = leave.is_none_or(|(bp, bv, _)| {
                    viol > bv || (viol == bv && k < self.head[bp])
                });
                if better {
                    leave = Some((p, viol, to_lower));
                }
            }
            let Some((r, _, to_lower)) = leave else {
                return Ok(DualEnd::Feasible);
            };
            if *iterations >= pivot_limit {
                return Ok(DualEnd::Limit);
            }

            let rho = &self.binv[r * m..(r + 1) * m];
            let mut entering: Option<(usize, f64)> = None;
            for k in 0..n + m {
                let st = self.state[k];
                if st == VarState::Basic || self.lo[k] == self.hi[k] {
                    continue;
                }
                let mut a = 0.0;
                self.for_col(k, |i, v| a += rho[i] * v);
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                // x_r moves by -a per unit increase of x_k
                let step_up = if to_lower { a < 0.0 } else { a > 0.0 };
                let movable = match st {
                    VarState::Lower => step_up,
                    VarState::Upper => !step_up,
                    VarState::Zero => true,
                    VarState::Basic => false,
                };
                if !movable {
                    continue;
                }
                let ratio = d[k].abs() / a.abs();
                if entering.is_none_or(|(_, best)| ratio < best - 1e-12) {
                    entering = Some((k, ratio));
                }
            }
            let Some((q, _)) = entering else {
                if self.since_refactor > 0 && !verified {
                    self.refresh()?;
                    verified = true;
                    continue;
                }
                return Ok(DualEnd::Infeasible);
            };

            self.column(q, &mut alpha);
            let out = self.head[r];
            let target = if to_lower { self.lo[out] } else { self.hi[out] };
            let t = (self.x[out] - target) / alpha[r];
            self.x[q] += t;
            for p in 0..m {
                let k = self.head[p];
                self.x[k] -= t * alpha[p];
            }
            self.x[out] = target;
            self.state[out] = if to_lower || self.lo[out] == self.hi[out] {
                VarState::Lower
            } else {
                VarState::Upper
            };
            self.head[r] = q;
            self.state[q] = VarState::Basic;
            self.eta_update(r, &alpha)?;
            *iterations += 1;
            verified = false;
        }
    }

    fn run(&mut self, pivot_limit: usize, mut iterations: usize) -> Result<LpResult> {
        let (n, m) = (self.n(), self.m());
        let mut stall = 0usize;
        let mut bland = false;
        let mut y = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        loop {
            if self.since_refactor >= REFACTOR_EVERY {
                self.refresh()?;
            }
            let phase1 = self.head.iter().any(|&k| self.infeasibility(k) != 0.0);
            self.duals(
                self.head
                    .iter()
                    .map(|&k| if phase1 { self.infeasibility(k) } else { self.cost[k] }),
                &mut y,
            );

            // pricing: Dantzig, or lowest eligible index once stalled
            let mut entering: Option<(usize, f64, f64)> = None;
            for k in 0..n + m {
                let st = self.state[k];
                if st == VarState::Basic || self.lo[k] == self.hi[k] {
                    continue;
                }
                let mut d = if phase1 { 0.0 } else { self.cost[k] };
                self.for_col(k, |i, a| d -= y[i] * a);
                let dir = match st {
                    VarState::Lower if d < -DUAL_TOL => 1.0,
                    VarState::Upper if d > DUAL_TOL => -1.0,
                    VarState::Zero if d.abs() > DUAL_TOL => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((k, d, dir));
                    break;
                }
                if entering.is_none_or(|(_, best, _)| d.abs() > best.abs()) {
                    entering = Some((k, d, dir));
                }
            }

            let Some((q, _dq, dir)) = entering else {
                if self.since_refactor > 0 {
                    // confirm with a fresh factorization before declaring
                    self.refresh()?;
                    continue;
                }
                return Ok(if phase1 {
                    LpResult::infeasible(iterations)
                } else {
                    self.finish(iterations, &y)
                });
            };

            if iterations >= pivot_limit {
                return Ok(LpResult::iteration_limit(iterations));
            }

            self.column(q, &mut alpha);

            // ratio test; `None` leaving means the entering variable flips bounds
            let mut best_t = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, f64)> = None;
            let mut best_idx = q;
            for p in 0..m {
                if alpha[p].abs() < PIVOT_TOL {
                    continue;
                }
                let k = self.head[p];
                let rate = -dir * alpha[p];
                let v = self.x[k];
                let (l, u) = (self.lo[k], self.hi[k]);
                let (t, target) = if phase1 && v < l - FEAS_TOL {
                    if rate > 0.0 {
                        ((l - v) / rate, l)
                    } else {
                        continue;
                    }
                } else if phase1 && v > u + FEAS_TOL {
                    if rate < 0.0 {
                        ((u - v) / rate, u)
                    } else {
                        continue;
                    }
                } else if rate < 0.0 && l.is_finite() {
                    (((l - v) / rate).max(0.0), l)
                } else if rate > 0.0 && u.is_finite() {
                    (((u - v) / rate).max(0.0), u)
                } else {
                    continue;
                };
                let better = t < best_t - 1e-12 || (t <= best_t + 1e-12 && k < best_idx);
                if better {
                    best_t = t;
                    best_idx = k;
                    leave = Some((p, target));
                }
            }

            if !best_t.is_finite() {
                if phase1 {
                    return Err(Error::Solver("unbounded ray during phase 1".into()));
                }
                return Ok(LpResult {
                    status: LpStatus::Unbounded,
                    objective: f64::NEG_INFINITY,
                    ..LpResult::infeasible(iterations)
                });
            }

            let t = best_t;
            self.x[q] += dir * t;
            for p in 0..m {
                let k = self.head[p];
                self.x[k] -= dir * t * alpha[p];
            }
            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.state[q] = VarState::Upper;
                        self.x[q] = self.hi[q];
                    } else {
                        self.state[q] = VarState::Lower;
                        self.x[q] = self.lo[q];
                    }
                }
                Some((r, target)) => {
                    let out = self.head[r];
                    self.x[out] = target;
                    self.state[out] = if target == self.hi[out] && target != self.lo[out] {
                        VarState::Upper
                    } else {
                        VarState::Lower
                    };
                    self.head[r] = q;
                    self.state[q] = VarState::Basic;
                    self.eta_update(r, &alpha)?;
                }
            }
            iterations += 1;
            if t < 1e-12 {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
            }
        }
    }

    fn finish(&self, iterations: usize, y: &[f64]) -> LpResult {
        let (n, m) = (self.n(), self.m());
        let inst = self.solver.inst;
        let mut x: Vec<f64> = self.x[..n].to_vec();
        // clamp drift inside the box
        for j in 0..n {
            x[j] = x[j].clamp(self.lo[j], self.hi[j]);
        }
        let objective = inst.objective_value(&x);
        let reduced_costs = (0..n)
            .map(|j| {
                let mut d = self.cost[j];
                self.for_col(j, |i, a| d -= y[i] * a);
                d
            })
            .collect();
        let to_status = |s: VarState| match s {
            VarState::Basic => BasisStatus::Basic,
            VarState::Lower => BasisStatus::Lower,
            VarState::Upper => BasisStatus::Upper,
            VarState::Zero => BasisStatus::Zero,
        };
        LpResult {
            status: LpStatus::Optimal,
            objective,
            fractional_set: fractional_indices(inst, &x),
            x,
            iterations,
            reduced_costs,
            duals: y.to_vec(),
            var_status: self.state[..n].iter().map(|&s| to_status(s)).collect(),
            row_status: self.state[n..].iter().map(|&s| to_status(s)).collect(),
            basis: Some(WarmStart {
                num_vars: n,
                num_cons: m,
                head: self.head.clone(),
                at_upper: self.state.iter().map(|&s| s == VarState::Upper).collect(),
            }),
        }
    }
}
