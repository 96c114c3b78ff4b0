//! Evaluation records, summaries and pairwise comparison reports.

use crate::bnb::{solve, NodeSelectorKind, SolveOptions, SolveStatus};
use crate::branch::BranchingPolicy;
use crate::milp::{read_instance, MilpInstance, INSTANCE_EXTENSION};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// One solve of one instance. `num_lp_iterations` excludes probing, which is
/// reported in `probing_iterations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance: String,
    pub seed: u64,
    pub brancher: String,
    pub node_selector: String,
    pub num_nodes: usize,
    pub num_lp_solves: usize,
    pub num_lp_iterations: usize,
    pub probing_iterations: usize,
    pub status: String,
    pub objective: f64,
    /// 0 unless wall time recording was requested.
    pub wall_ms: u64,
}

impl EvalRecord {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal.as_str()
    }
}

/// An instance to evaluate on, with the id and seed that go into its record.
#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub id: String,
    pub seed: u64,
    pub instance: MilpInstance,
}

impl EvalInstance {
    /// Uses the instance name as id and its `_s<seed>` suffix, if any, as
    /// the seed.
    pub fn from_instance(instance: MilpInstance) -> Self {
        let seed = instance
            .name
            .rsplit_once("_s")
            .and_then(|(_, s)| s.parse().ok())
            .unwrap_or(0);
        EvalInstance {
            id: instance.name.clone(),
            seed,
            instance,
        }
    }
}

/// Every instance file in `dir`, in file-name order.
pub fn load_instance_dir(dir: &Path) -> Result<Vec<EvalInstance>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_instance = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(&format!(".{INSTANCE_EXTENSION}")));
        if is_instance {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::Parameter(format!(
            "no .{INSTANCE_EXTENSION} files in {}",
            dir.display()
        )));
    }
    paths.sort();
    paths
        .iter()
        .map(|p| read_instance(p).map(EvalInstance::from_instance))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub selector: NodeSelectorKind,
    pub max_nodes: Option<usize>,
    /// Added to each instance seed to seed the policy rng.
    pub seed: u64,
    pub record_wall_time: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            selector: NodeSelectorKind::BestFirst,
            max_nodes: None,
            seed: 0,
            record_wall_time: false,
        }
    }
}

pub fn evaluate(
    policy: &mut dyn BranchingPolicy,
    instances: &[EvalInstance],
    opts: &EvalOptions,
) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::with_capacity(instances.len());
    for ev in instances {
        let mut so = SolveOptions::with_selector(opts.selector);
        so.limits.max_nodes = opts.max_nodes;
        so.seed = opts.seed.wrapping_add(ev.seed);
        let o = solve(&ev.instance, policy, &so)?;
        out.push(EvalRecord {
            instance: ev.id.clone(),
            seed: ev.seed,
            brancher: policy.name().to_string(),
            node_selector: opts.selector.as_str().to_string(),
            num_nodes: o.stats.num_nodes,
            num_lp_solves: o.stats.num_lp_solves,
            num_lp_iterations: o.stats.search_lp_iterations(),
            probing_iterations: o.stats.probing_iterations,
            status: o.stats.status.as_str().to_string(),
            objective: o.stats.primal_bound,
            wall_ms: if opts.record_wall_time { o.stats.wall_ms } else { 0 },
        });
    }
    Ok(out)
}

/// Geometric mean of `x + shift`, minus the shift.
pub fn shifted_geometric_mean(values: &[f64], shift: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let s: f64 = values.iter().map(|v| (v + shift).ln()).sum();
    (s / values.len() as f64).exp() - shift
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Nearest-rank quantile of unsorted data, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Means over the optimally solved records; limit-terminated ones are
/// counted but excluded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub brancher: String,
    pub records: usize,
    pub solved: usize,
    pub limit_terminated: usize,
    pub mean_nodes: f64,
    pub geo_mean_nodes: f64,
    pub mean_lp_iterations: f64,
    pub geo_mean_lp_iterations: f64,
    pub mean_probing_iterations: f64,
}

pub fn summarize(records: &[EvalRecord]) -> EvalSummary {
    let solved: Vec<&EvalRecord> = records.iter().filter(|r| r.is_optimal()).collect();
    let nodes: Vec<f64> = solved.iter().map(|r| r.num_nodes as f64).collect();
    let iters: Vec<f64> = solved.iter().map(|r| r.num_lp_iterations as f64).collect();
    let probing: Vec<f64> = solved.iter().map(|r| r.probing_iterations as f64).collect();
    EvalSummary {
        brancher: records.first().map(|r| r.brancher.clone()).unwrap_or_default(),
        records: records.len(),
        solved: solved.len(),
        limit_terminated: records.len() - solved.len(),
        mean_nodes: mean(&nodes),
        geo_mean_nodes: shifted_geometric_mean(&nodes, 1.0),
        mean_lp_iterations: mean(&iters),
        geo_mean_lp_iterations: shifted_geometric_mean(&iters, 1.0),
        mean_probing_iterations: mean(&probing),
    }
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_records_to(out: impl std::io::Write, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<stream>", e))
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .collect::<Result<Vec<EvalRecord>, csv::Error>>()
        .map_err(|e| Error::parse(path.display().to_string(), e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceComparison {
    pub instance: String,
    pub baseline_nodes: usize,
    pub candidate_nodes: usize,
    /// Candidate over baseline nodes, each floored at 1.
    pub node_ratio: f64,
    pub lp_iteration_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfRow {
    pub quantile: f64,
    pub baseline: f64,
    pub candidate: f64,
}

/// Per-instance comparison of a candidate against a baseline. When the
/// baseline is pseudocost branching the mean ratios are the PB-normalized
/// performance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub baseline: String,
    pub candidate: String,
    pub instances: Vec<InstanceComparison>,
    /// Percentages; a win means the candidate used fewer nodes.
    pub win_pct: f64,
    pub tie_pct: f64,
    pub loss_pct: f64,
    pub mean_node_ratio: f64,
    pub mean_lp_iteration_ratio: f64,
    /// Ratio of the mean node counts.
    pub normalized_mean_nodes: f64,
    /// Node-count distribution of both runs.
    pub cdf: Vec<CdfRow>,
}

impl CompareReport {
    pub fn win_or_tie_pct(&self) -> f64 {
        self.win_pct + self.tie_pct
    }
}

pub const CDF_QUANTILES: [f64; 8] = [0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0];

pub fn compare(baseline: &[EvalRecord], candidate: &[EvalRecord]) -> Result<CompareReport> {
    let b: BTreeMap<&str, &EvalRecord> = baseline.iter().map(|r| (r.instance.as_str(), r)).collect();
    let c: BTreeMap<&str, &EvalRecord> = candidate.iter().map(|r| (r.instance.as_str(), r)).collect();
    let bk: BTreeSet<&str> = b.keys().copied().collect();
    let ck: BTreeSet<&str> = c.keys().copied().collect();
    if bk != ck || b.len() != baseline.len() || c.len() != candidate.len() {
        let diff: Vec<&str> = bk.symmetric_difference(&ck).copied().collect();
        return Err(Error::Parameter(format!(
            "instance ids differ between runs (or repeat); symmetric difference: [{}]",
            diff.join(", ")
        )));
    }
    if bk.is_empty() {
        return Err(Error::Parameter("nothing to compare: no records".into()));
    }
    let ratio = |cand: usize, base: usize| cand.max(1) as f64 / base.max(1) as f64;
    let mut rows = Vec::new();
    let (mut wins, mut ties) = (0usize, 0usize);
    for id in &bk {
        let (br, cr) = (b[id], c[id]);
        match cr.num_nodes.cmp(&br.num_nodes) {
            std::cmp::Ordering::Less => wins += 1,
            std::cmp::Ordering::Equal => ties += 1,
            std::cmp::Ordering::Greater => {}
        }
        rows.push(InstanceComparison {
            instance: id.to_string(),
            baseline_nodes: br.num_nodes,
            candidate_nodes: cr.num_nodes,
            node_ratio: ratio(cr.num_nodes, br.num_nodes),
            lp_iteration_ratio: ratio(cr.num_lp_iterations, br.num_lp_iterations),
        });
    }
    let n = rows.len() as f64;
    let node_ratios: Vec<f64> = rows.iter().map(|r| r.node_ratio).collect();
    let iter_ratios: Vec<f64> = rows.iter().map(|r| r.lp_iteration_ratio).collect();
    let bn: Vec<f64> = rows.iter().map(|r| r.baseline_nodes as f64).collect();
    let cn: Vec<f64> = rows.iter().map(|r| r.candidate_nodes as f64).collect();
    let cdf = CDF_QUANTILES
        .iter()
        .map(|&q| CdfRow {
            quantile: q,
            baseline: quantile(&bn, q),
            candidate: quantile(&cn, q),
        })
        .collect();
    Ok(CompareReport {
        baseline: baseline[0].brancher.clone(),
        candidate: candidate[0].brancher.clone(),
        win_pct: 100.0 * wins as f64 / n,
        tie_pct: 100.0 * ties as f64 / n,
        loss_pct: 100.0 * (rows.len() - wins - ties) as f64 / n,
        mean_node_ratio: mean(&node_ratios),
        mean_lp_iteration_ratio: mean(&iter_ratios),
        normalized_mean_nodes: mean(&cn).max(f64::MIN_POSITIVE) / mean(&bn).max(f64::MIN_POSITIVE),
        instances: rows,
        cdf,
    })
}
