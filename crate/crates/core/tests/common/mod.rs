//! Brute-force oracles shared by the integration suites. Nothing here calls
//! into the simplex or the branch-and-bound engine; `nets` holds the
//! network fixtures.
#![allow(dead_code)]

pub mod nets;

use rand::Rng;
use retrobranch::milp::{MilpInstance, Row, Sense};

/// Optimal LP value by enumerating every vertex of the (bounded) polytope:
/// each choice of `n` tight constraints among rows and bounds is solved as a
/// square system and kept if feasible. `None` means infeasible.
pub fn lp_vertex_enumeration(inst: &MilpInstance) -> Option<f64> {
    let n = inst.num_vars;
    // each hyperplane is (coefs dense, rhs)
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in &inst.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &row.coefs {
            a[j] = v;
        }
        planes.push((a, row.rhs));
    }
    for j in 0..n {
        assert!(inst.lower[j].is_finite() && inst.upper[j].is_finite());
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), inst.lower[j]));
        planes.push((e, inst.upper[j]));
    }
    let mut best: Option<f64> = None;
    let mut choice = Vec::with_capacity(n);
    enumerate(&planes, n, 0, &mut choice, &mut |subset| {
        if let Some(x) = solve_square(subset.iter().map(|&k| &planes[k]).collect()) {
            if inst.rows.iter().all(|r| r.is_satisfied(&x, 1e-9))
                && (0..n).all(|j| x[j] >= inst.lower[j] - 1e-9 && x[j] <= inst.upper[j] + 1e-9)
            {
                let v = inst.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    });
    best
}

fn enumerate(
    planes: &[(Vec<f64>, f64)],
    n: usize,
    start: usize,
    choice: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if choice.len() == n {
        f(choice);
        return;
    }
    for k in start..planes.len() {
        choice.push(k);
        enumerate(planes, n, k + 1, choice, f);
        choice.pop();
    }
}

fn solve_square(rows: Vec<&(Vec<f64>, f64)>) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows
        .iter()
        .map(|(r, b)| {
            let mut v = r.clone();
            v.push(*b);
            v
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c].abs() < 1e-9 {
            return None;
        }
        a.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Optimum of a pure binary program by checking all `2^n` points.
pub fn binary_enumeration(inst: &MilpInstance) -> Option<f64> {
    let n = inst.num_vars;
    assert!(n <= 20);
    let mut best: Option<f64> = None;
    let mut x = vec![0.0; n];
    for mask in 0u32..(1 << n) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = ((mask >> j) & 1) as f64;
        }
        if inst.rows.iter().all(|r| r.is_satisfied(&x, 1e-9)) {
            let v = inst.objective_value(&x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// Random bounded LP with small integer data.
pub fn random_lp(rng: &mut impl Rng, n: usize, m: usize) -> MilpInstance {
    let objective = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    let rows = (0..m)
        .map(|_| {
            let mut coefs = Vec::new();
            for j in 0..n {
                if rng.gen_bool(0.7) {
                    let a = rng.gen_range(-4..=4) as f64;
                    if a != 0.0 {
                        coefs.push((j, a));
                    }
                }
            }
            let sense = match rng.gen_range(0..5) {
                0 => Sense::Ge,
                1 => Sense::Eq,
                _ => Sense::Le,
            };
            Row::new(coefs, sense, rng.gen_range(-3..=8) as f64 * 0.5)
        })
        .collect();
    let lower = (0..n).map(|_| rng.gen_range(-3..=0) as f64).collect();
    let upper = (0..n).map(|_| rng.gen_range(1..=4) as f64).collect();
    MilpInstance::new("random_lp", objective, rows, lower, upper, vec![false; n])
}

/// Random binary program: mixed packing and covering rows, always feasible
/// at the all-zeros point unless a covering row is present.
pub fn random_binary_milp(rng: &mut impl Rng, n: usize, m: usize) -> MilpInstance {
    let objective = (0..n).map(|_| rng.gen_range(-20..=10) as f64).collect();
    let rows = (0..m)
        .map(|_| {
            let mut coefs = Vec::new();
            for j in 0..n {
                if rng.gen_bool(0.5) {
                    coefs.push((j, rng.gen_range(1..=9) as f64));
                }
            }
            let total: f64 = coefs.iter().map(|c| c.1).sum();
            if rng.gen_bool(0.25) && total > 0.0 {
                Row::new(coefs, Sense::Ge, (total * 0.3).floor().max(1.0))
            } else {
                Row::new(coefs, Sense::Le, (total * rng.gen_range(0.3..0.7)).floor())
            }
        })
        .collect();
    MilpInstance::binary("random_bip", objective, rows)
}
