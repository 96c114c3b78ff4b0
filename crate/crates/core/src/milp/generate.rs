//! Seeded generators for the four benchmark families. Every generator is a
//! pure function of its [`GeneratorSpec`]; maximization problems are negated
//! into minimization form here.

use super::{MilpInstance, Row, Sense};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Problem family plus its size and shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem_class", rename_all = "snake_case")]
pub enum ProblemClass {
    SetCovering {
        rows: usize,
        cols: usize,
        density: f64,
    },
    CombinatorialAuction {
        items: usize,
        bids: usize,
        /// Probability of growing a bundle by one more item (geometric sizes).
        add_item_prob: f64,
    },
    CapacitatedFacilityLocation {
        customers: usize,
        facilities: usize,
        /// Total capacity / total demand.
        capacity_ratio: f64,
    },
    MaximumIndependentSet {
        nodes: usize,
        /// Barabási–Albert attachment count.
        affinity: usize,
    },
}

impl ProblemClass {
    pub fn set_covering(rows: usize, cols: usize) -> Self {
        ProblemClass::SetCovering {
            rows,
            cols,
            density: 0.05,
        }
    }

    pub fn combinatorial_auction(items: usize, bids: usize) -> Self {
        ProblemClass::CombinatorialAuction {
            items,
            bids,
            add_item_prob: 0.65,
        }
    }

    pub fn facility_location(customers: usize, facilities: usize) -> Self {
        ProblemClass::CapacitatedFacilityLocation {
            customers,
            facilities,
            capacity_ratio: 5.0,
        }
    }

    pub fn independent_set(nodes: usize) -> Self {
        ProblemClass::MaximumIndependentSet { nodes, affinity: 4 }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            ProblemClass::SetCovering { .. } => "set_covering",
            ProblemClass::CombinatorialAuction { .. } => "combinatorial_auction",
            ProblemClass::CapacitatedFacilityLocation { .. } => "capacitated_facility_location",
            ProblemClass::MaximumIndependentSet { .. } => "maximum_independent_set",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub class: ProblemClass,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(class: ProblemClass, seed: u64) -> Self {
        GeneratorSpec { class, seed }
    }

    /// Same class and sizes, different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        GeneratorSpec {
            class: self.class.clone(),
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Parameter(format!("{name} must be >= 1")))
            } else {
                Ok(())
            }
        };
        let unit = |name: &str, v: f64| {
            if v.is_nan() || v <= 0.0 {
                Err(Error::Generation(format!("degenerate {name} {v}: nothing to generate")))
            } else if v > 1.0 {
                Err(Error::Parameter(format!("{name} must lie in (0, 1], got {v}")))
            } else {
                Ok(())
            }
        };
        match self.class {
            ProblemClass::SetCovering { rows, cols, density } => {
                positive("rows", rows)?;
                positive("cols", cols)?;
                unit("density", density)?;
                if cols < 2 {
                    return Err(Error::Generation(
                        "set covering needs >= 2 columns to cover each row twice".into(),
                    ));
                }
            }
            ProblemClass::CombinatorialAuction {
                items,
                bids,
                add_item_prob,
            } => {
                positive("items", items)?;
                positive("bids", bids)?;
                if !(0.0..1.0).contains(&add_item_prob) {
                    return Err(Error::Parameter(format!(
                        "add_item_prob must lie in [0, 1), got {add_item_prob}"
                    )));
                }
            }
            ProblemClass::CapacitatedFacilityLocation {
                customers,
                facilities,
                capacity_ratio,
            } => {
                positive("customers", customers)?;
                positive("facilities", facilities)?;
                if !(capacity_ratio >= 1.0) {
                    return Err(Error::Parameter(format!(
                        "capacity_ratio must be >= 1, got {capacity_ratio}"
                    )));
                }
            }
            ProblemClass::MaximumIndependentSet { nodes, affinity } => {
                positive("nodes", nodes)?;
                positive("affinity", affinity)?;
                if nodes <= affinity {
                    return Err(Error::Generation(format!(
                        "Barabási–Albert graph needs nodes ({nodes}) > affinity ({affinity})"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<MilpInstance> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let inst = match spec.class {
        ProblemClass::SetCovering { rows, cols, density } => {
            set_covering(rows, cols, density, spec.seed, &mut rng)
        }
        ProblemClass::CombinatorialAuction {
            items,
            bids,
            add_item_prob,
        } => combinatorial_auction(items, bids, add_item_prob, spec.seed, &mut rng),
        ProblemClass::CapacitatedFacilityLocation {
            customers,
            facilities,
            capacity_ratio,
        } => facility_location(customers, facilities, capacity_ratio, spec.seed, &mut rng),
        ProblemClass::MaximumIndependentSet { nodes, affinity } => {
            let edges = barabasi_albert(nodes, affinity, &mut rng);
            independent_set_from_edges(format!("mis_n{nodes}_s{}", spec.seed), nodes, &edges)
        }
    };
    debug_assert!(inst.validate().is_empty());
    Ok(inst)
}

/// Balas–Ho style covering: every row has >= 2 columns, every column covers
/// >= 1 row, remaining nonzeros uniform until the density target is met.
fn set_covering(rows: usize, cols: usize, density: f64, seed: u64, rng: &mut ChaCha8Rng) -> MilpInstance {
    let mut members: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); rows];
    let all: Vec<usize> = (0..cols).collect();
    for row in members.iter_mut() {
        row.extend(all.choose_multiple(rng, 2).copied());
    }
    let mut covered = vec![false; cols];
    for row in &members {
        for &j in row {
            covered[j] = true;
        }
    }
    for j in 0..cols {
        if !covered[j] {
            members[rng.gen_range(0..rows)].insert(j);
        }
    }
    let target = ((rows * cols) as f64 * density).round() as usize;
    let mut nnz: usize = members.iter().map(BTreeSet::len).sum();
    while nnz < target {
        let (i, j) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
        if members[i].insert(j) {
            nnz += 1;
        }
    }
    let objective = (0..cols).map(|_| rng.gen_range(1..=100) as f64).collect();
    let nrows = rows;
    let rows = members
        .into_iter()
        .map(|set| Row::new(set.into_iter().map(|j| (j, 1.0)).collect(), Sense::Ge, 1.0))
        .collect();
    MilpInstance::binary(format!("setcover_r{nrows}_c{cols}_s{seed}"), objective, rows)
}

/// Winner determination: one binary per bid, one `<= 1` row per item.
fn combinatorial_auction(
    items: usize,
    bids: usize,
    add_item_prob: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> MilpInstance {
    let base: Vec<f64> = (0..items).map(|_| rng.gen_range(1.0..100.0)).collect();
    let all: Vec<usize> = (0..items).collect();
    let mut bundles: Vec<BTreeSet<usize>> = (0..bids)
        .map(|_| {
            let mut size = 1;
            while size < items && rng.gen_bool(add_item_prob) {
                size += 1;
            }
            all.choose_multiple(rng, size).copied().collect()
        })
        .collect();
    let mut used = vec![false; items];
    for b in &bundles {
        for &i in b {
            used[i] = true;
        }
    }
    for i in 0..items {
        if !used[i] {
            bundles[rng.gen_range(0..bids)].insert(i);
        }
    }
    // value ~ bundle size times base price with multiplicative noise, rounded
    let objective = bundles
        .iter()
        .map(|b| {
            let v: f64 = b.iter().map(|&i| base[i]).sum::<f64>() * rng.gen_range(0.9..1.3);
            -(v.round().max(1.0))
        })
        .collect();
    let mut by_item: Vec<Vec<(usize, f64)>> = vec![Vec::new(); items];
    for (b, bundle) in bundles.iter().enumerate() {
        for &i in bundle {
            by_item[i].push((b, 1.0));
        }
    }
    let rows = by_item
        .into_iter()
        .map(|coefs| Row::new(coefs, Sense::Le, 1.0))
        .collect();
    MilpInstance::binary(format!("cauction_i{items}_b{bids}_s{seed}"), objective, rows)
}

/// Cornuéjols-style capacitated facility location. Variables: `x[i][j]`
/// (fraction of customer `i` served by facility `j`, continuous) followed by
/// `y[j]` (facility open, binary).
fn facility_location(
    customers: usize,
    facilities: usize,
    ratio: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> MilpInstance {
    let cpos: Vec<(f64, f64)> = (0..customers).map(|_| (rng.gen(), rng.gen())).collect();
    let fpos: Vec<(f64, f64)> = (0..facilities).map(|_| (rng.gen(), rng.gen())).collect();
    let demand: Vec<f64> = (0..customers).map(|_| rng.gen_range(5..=35) as f64).collect();
    let raw_cap: Vec<f64> = (0..facilities).map(|_| rng.gen_range(10..=160) as f64).collect();
    let fixed: Vec<f64> = raw_cap
        .iter()
        .map(|&s| ((rng.gen_range(0..=90) as f64 + rng.gen_range(0..=10) as f64 * s.sqrt()).round()).max(1.0))
        .collect();
    let total_demand: f64 = demand.iter().sum();
    let total_cap: f64 = raw_cap.iter().sum();
    let scale = ratio * total_demand / total_cap;
    let cap: Vec<f64> = raw_cap.iter().map(|s| (s * scale).ceil()).collect();

    let x = |i: usize, j: usize| i * facilities + j;
    let y = |j: usize| customers * facilities + j;
    let n = customers * facilities + facilities;
    let mut objective = vec![0.0; n];
    for i in 0..customers {
        for j in 0..facilities {
            let (dx, dy) = (cpos[i].0 - fpos[j].0, cpos[i].1 - fpos[j].1);
            objective[x(i, j)] = ((dx * dx + dy * dy).sqrt() * 10.0 * demand[i]).round();
        }
    }
    for j in 0..facilities {
        objective[y(j)] = fixed[j];
    }
    let mut rows = Vec::new();
    for i in 0..customers {
        rows.push(Row::new((0..facilities).map(|j| (x(i, j), 1.0)).collect(), Sense::Ge, 1.0));
    }
    for j in 0..facilities {
        let mut coefs: Vec<(usize, f64)> = (0..customers).map(|i| (x(i, j), demand[i])).collect();
        coefs.push((y(j), -cap[j]));
        rows.push(Row::new(coefs, Sense::Le, 0.0));
    }
    rows.push(Row::new((0..facilities).map(|j| (y(j), cap[j])).collect(), Sense::Ge, total_demand));
    for i in 0..customers {
        for j in 0..facilities {
            rows.push(Row::new(vec![(x(i, j), 1.0), (y(j), -1.0)], Sense::Le, 0.0));
        }
    }
    let mut is_integer = vec![false; n];
    for j in 0..facilities {
        is_integer[y(j)] = true;
    }
    MilpInstance::new(
        format!("cfl_c{customers}_f{facilities}_s{seed}"),
        objective,
        rows,
        vec![0.0; n],
        vec![1.0; n],
        is_integer,
    )
}

/// Preferential attachment starting from a clique on `affinity + 1` nodes.
fn barabasi_albert(nodes: usize, affinity: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    // each endpoint appears once per incident edge, so uniform sampling from
    // this list is degree-proportional
    let mut endpoints = Vec::new();
    let seed_size = affinity + 1;
    for a in 0..seed_size {
        for b in a + 1..seed_size {
            edges.push((a, b));
            endpoints.extend([a, b]);
        }
    }
    for v in seed_size..nodes {
        let mut targets = BTreeSet::new();
        while targets.len() < affinity {
            targets.insert(endpoints[rng.gen_range(0..endpoints.len())]);
        }
        for t in targets {
            edges.push((t, v));
            endpoints.extend([t, v]);
        }
    }
    edges
}

/// Independent set over an explicit edge list: maximize `Σ x` encoded as
/// `min -Σ x` with one `x_a + x_b <= 1` row per edge.
pub fn independent_set_from_edges(
    name: impl Into<String>,
    nodes: usize,
    edges: &[(usize, usize)],
) -> MilpInstance {
    let rows = edges
        .iter()
        .map(|&(a, b)| Row::new(vec![(a.min(b), 1.0), (a.max(b), 1.0)], Sense::Le, 1.0))
        .collect();
    MilpInstance::binary(name, vec![-1.0; nodes], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::encode;

    fn enumerate_binary_optimum(inst: &MilpInstance) -> f64 {
        let n = inst.num_vars;
        (0u32..1 << n)
            .map(|mask| (0..n).map(|j| ((mask >> j) & 1) as f64).collect::<Vec<_>>())
            .filter(|x| inst.is_feasible(x, 1e-9))
            .map(|x| inst.objective_value(&x))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn small_set_covering_contract() {
        let spec = GeneratorSpec::new(
            ProblemClass::SetCovering {
                rows: 4,
                cols: 6,
                density: 0.5,
            },
            7,
        );
        let inst = generate(&spec).unwrap();
        assert_eq!((inst.num_cons, inst.num_vars), (4, 6));
        for &c in &inst.objective {
            assert!((1.0..=100.0).contains(&c) && c.fract() == 0.0);
        }
        for row in &inst.rows {
            assert!(row.coefs.len() >= 2);
        }
        assert!(inst.is_feasible(&[1.0; 6], 1e-9));
    }

    #[test]
    fn triangle_independent_set_optimum_is_one_vertex() {
        let inst = independent_set_from_edges("tri", 3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(inst.num_vars, 3);
        assert_eq!(inst.num_cons, 3);
        assert_eq!(enumerate_binary_optimum(&inst), -1.0);
    }

    #[test]
    fn auction_rows_are_packing_rows() {
        let spec = GeneratorSpec::new(ProblemClass::combinatorial_auction(2, 3), 11);
        let inst = generate(&spec).unwrap();
        assert_eq!(inst.num_cons, 2);
        assert_eq!(inst.num_vars, 3);
        for row in &inst.rows {
            assert_eq!(row.sense, Sense::Le);
            assert_eq!(row.rhs, 1.0);
            assert!(!row.coefs.is_empty());
        }
        assert!(inst.objective.iter().all(|&c| c < 0.0 && c.fract() == 0.0));
        assert!(inst.is_feasible(&[0.0; 3], 1e-9));
    }

    #[test]
    fn facility_location_has_proportional_witness() {
        let spec = GeneratorSpec::new(ProblemClass::facility_location(6, 3), 5);
        let inst = generate(&spec).unwrap();
        assert_eq!(inst.num_vars, 6 * 3 + 3);
        assert_eq!(inst.num_integer(), 3);
        let caps: Vec<f64> = inst.rows[6 + 3].coefs.iter().map(|c| c.1).collect();
        let total: f64 = caps.iter().sum();
        let mut x = vec![0.0; inst.num_vars];
        for i in 0..6 {
            for j in 0..3 {
                x[i * 3 + j] = caps[j] / total;
            }
        }
        for j in 0..3 {
            x[18 + j] = 1.0;
        }
        assert!(inst.rows.iter().all(|r| r.is_satisfied(&x, 1e-9)));
    }

    #[test]
    fn barabasi_albert_edge_count() {
        let spec = GeneratorSpec::new(ProblemClass::independent_set(20), 3);
        let inst = generate(&spec).unwrap();
        // clique on 5 nodes plus 4 edges per remaining node
        assert_eq!(inst.num_cons, 10 + 15 * 4);
        assert!(inst.is_feasible(&[0.0; 20], 1e-9));
    }

    #[test]
    fn parameter_and_degenerate_errors() {
        let zero = GeneratorSpec::new(
            ProblemClass::SetCovering {
                rows: 0,
                cols: 5,
                density: 0.1,
            },
            0,
        );
        assert!(matches!(generate(&zero), Err(Error::Parameter(_))));
        let no_density = GeneratorSpec::new(
            ProblemClass::SetCovering {
                rows: 3,
                cols: 5,
                density: 0.0,
            },
            0,
        );
        assert!(matches!(generate(&no_density), Err(Error::Generation(_))));
        let too_dense = GeneratorSpec::new(
            ProblemClass::SetCovering {
                rows: 3,
                cols: 5,
                density: 1.5,
            },
            0,
        );
        assert!(matches!(generate(&too_dense), Err(Error::Parameter(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        for class in [
            ProblemClass::set_covering(30, 60),
            ProblemClass::combinatorial_auction(10, 50),
            ProblemClass::facility_location(10, 5),
            ProblemClass::independent_set(25),
        ] {
            let spec = GeneratorSpec::new(class, 42);
            let a = encode(&generate(&spec).unwrap()).unwrap();
            let b = encode(&generate(&spec).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn spec_serializes_with_class_tag() {
        let spec = GeneratorSpec::new(ProblemClass::set_covering(10, 20), 1);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains(r#""problem_class":"set_covering""#), "{text}");
        let back: GeneratorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
