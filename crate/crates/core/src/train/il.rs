//! Imitation of strong branching: explore-then-strong-branch labelling and
//! cross-entropy training of the Q-network's candidate softmax.

use crate::bnb::{solve, BranchContext, NodeSelectorKind, SolveOptions};
use crate::branch::{BranchingPolicy, PseudocostBranching, StrongBranching};
use crate::features::{BipartiteState, Edge, FEATURE_SET_VERSION};
use crate::lp::LpResult;
use crate::milp::{generate, GeneratorSpec, MilpInstance, ProblemClass};
use crate::qnet::{AdamConfig, AdamState, Architecture, Graph, QNet};
use crate::{Error, Result};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// A focus-node observation with the strong-branching choice.
#[derive(Debug, Clone)]
pub struct LabelledSample {
    pub state: Arc<BipartiteState>,
    pub action: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<LabelledSample>,
}

/// Acts with pseudocost branching, except that with probability
/// `explore_prob` it strong-branches and records the decision.
pub struct ExploreThenStrongBranch {
    pub explore_prob: f64,
    pub strong: StrongBranching,
    pub pseudocost: PseudocostBranching,
    pub recorded: Vec<LabelledSample>,
}

impl ExploreThenStrongBranch {
    pub fn new(explore_prob: f64) -> Self {
        ExploreThenStrongBranch {
            explore_prob,
            strong: StrongBranching::new(),
            pseudocost: PseudocostBranching::new(),
            recorded: Vec::new(),
        }
    }
}

impl BranchingPolicy for ExploreThenStrongBranch {
    fn name(&self) -> &str {
        "explore_then_sb"
    }

    fn start_solve(&mut self, inst: &MilpInstance) {
        self.strong.start_solve(inst);
        self.pseudocost.start_solve(inst);
    }

    fn choose(&mut self, ctx: &mut BranchContext<'_, '_>, candidates: &[usize]) -> Result<usize> {
        if ctx.rng.gen::<f64>() < self.explore_prob {
            let action = self.strong.choose(ctx, candidates)?;
            self.recorded.push(LabelledSample {
                state: ctx.state()?,
                action,
            });
            Ok(action)
        } else {
            self.pseudocost.choose(ctx, candidates)
        }
    }

    fn observe_branching(&mut self, node: &LpResult, var: usize, down: &LpResult, up: &LpResult) {
        self.pseudocost.observe_branching(node, var, down, up);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub seed: u64,
    pub instances: ProblemClass,
    pub num_train: usize,
    pub num_valid: usize,
    pub explore_prob: f64,
    pub node_selector: NodeSelectorKind,
    pub max_nodes: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            seed: 0,
            instances: ProblemClass::SetCovering {
                rows: 100,
                cols: 200,
                density: 0.15,
            },
            num_train: 10_000,
            num_valid: 2_000,
            explore_prob: 0.05,
            node_selector: NodeSelectorKind::BestFirst,
            max_nodes: 10_000,
        }
    }
}

/// Solves fresh instances until `num_train` then `num_valid` labels were
/// recorded. Training and validation labels come from disjoint instances;
/// instance seeds are `seed * 2^32 + k`.
pub fn label_sb(cfg: &LabelConfig) -> Result<(Dataset, Dataset)> {
    if !(cfg.explore_prob > 0.0 && cfg.explore_prob <= 1.0) {
        return Err(Error::Parameter(format!(
            "explore_prob must lie in (0, 1], got {}",
            cfg.explore_prob
        )));
    }
    let mut k = 0u64;
    let mut collect = |target: usize| -> Result<Dataset> {
        let mut out = Dataset::default();
        let mut fruitless = 0usize;
        while out.samples.len() < target {
            let seed = (cfg.seed << 32).wrapping_add(k);
            k += 1;
            let inst = generate(&GeneratorSpec::new(cfg.instances.clone(), seed))?;
            let mut policy = ExploreThenStrongBranch::new(cfg.explore_prob);
            let mut opts = SolveOptions::with_selector(cfg.node_selector);
            opts.limits.max_nodes = Some(cfg.max_nodes);
            opts.seed = seed;
            solve(&inst, &mut policy, &opts)?;
            fruitless = if policy.recorded.is_empty() { fruitless + 1 } else { 0 };
            if fruitless >= 10_000 {
                return Err(Error::Generation(
                    "10000 consecutive instances produced no label; instances are too easy".into(),
                ));
            }
            let room = target - out.samples.len();
            out.samples.extend(policy.recorded.into_iter().take(room));
        }
        Ok(out)
    };
    let train = collect(cfg.num_train)?;
    let valid = collect(cfg.num_valid)?;
    Ok((train, valid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub arch: Architecture,
}

impl Default for IlConfig {
    fn default() -> Self {
        IlConfig {
            seed: 0,
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            arch: Architecture::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IlEpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct IlOutcome {
    /// Network with the best validation accuracy.
    pub net: QNet,
    pub best_epoch: usize,
    pub valid_accuracy: f64,
    pub log: Vec<IlEpochRow>,
}

/// Cross-entropy of the candidate softmax against the label, with its
/// gradient with respect to the candidate Q-values.
fn candidate_cross_entropy(q: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    let loss = z.ln() - (q[label] - max);
    let grad = e.iter().enumerate().map(|(k, v)| v / z - f64::from(k == label)).collect();
    (loss, grad)
}

/// Top-1 accuracy over samples with more than one candidate, or `None` if
/// there are none.
pub fn top1_accuracy(net: &QNet, data: &Dataset) -> Result<Option<f64>> {
    let (mut hits, mut total) = (0usize, 0usize);
    for chunk in data.samples.chunks(64) {
        let states: Vec<&BipartiteState> = chunk.iter().map(|s| s.state.as_ref()).collect();
        for (s, q) in chunk.iter().zip(net.forward_batch(&states)?) {
            let cands = s.state.candidates();
            if cands.len() < 2 {
                continue;
            }
            let best = cands
                .iter()
                .copied()
                .fold(None::<usize>, |b, j| match b {
                    Some(b) if q[b] >= q[j] => Some(b),
                    _ => Some(j),
                })
                .expect("non-empty");
            hits += usize::from(best == s.action);
            total += 1;
        }
    }
    Ok((total > 0).then(|| hits as f64 / total as f64))
}

pub fn train_il(train: &Dataset, valid: &Dataset, cfg: &IlConfig) -> Result<IlOutcome> {
    if train.samples.is_empty() {
        return Err(Error::Parameter("training dataset is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Parameter("epochs, batch_size and lr must be positive".into()));
    }
    let mut net = QNet::new(cfg.arch, cfg.seed);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &net.params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let score = |net: &QNet| -> Result<f64> {
        let data = if valid.samples.is_empty() { train } else { valid };
        Ok(top1_accuracy(net, data)?.unwrap_or(1.0))
    };
    let mut best = (net.clone(), 0, score(&net)?);
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train.samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabelledSample> = chunk.iter().map(|&i| &train.samples[i]).collect();
            let states: Vec<&BipartiteState> = batch.iter().map(|s| s.state.as_ref()).collect();
            let pass = net.forward_pass(Graph::batch(&states)?)?;
            let mut dq = Array1::zeros(pass.q.len());
            let b = batch.len() as f64;
            for (s, &(start, _)) in batch.iter().zip(&pass.graph().var_ranges) {
                let cands = s.state.candidates();
                let label = cands.iter().position(|&j| j == s.action).ok_or_else(|| {
                    Error::Contract(format!("label {} is not a candidate", s.action))
                })?;
                let q: Vec<f64> = cands.iter().map(|&j| pass.q[start + j]).collect();
                let (loss, grad) = candidate_cross_entropy(&q, label);
                loss_sum += loss;
                for (&j, g) in cands.iter().zip(grad) {
                    dq[start + j] += g / b;
                }
            }
            let grads = net.backward(&pass, &dq)?;
            adam.update(&mut net.params, &grads)?;
        }
        let acc = score(&net)?;
        log.push(IlEpochRow {
            epoch,
            train_loss: loss_sum / train.samples.len() as f64,
            valid_accuracy: acc,
        });
        if acc > best.2 {
            best = (net.clone(), epoch, acc);
        }
    }
    Ok(IlOutcome {
        net: best.0,
        best_epoch: best.1,
        valid_accuracy: best.2,
        log,
    })
}

pub const DATASET_FORMAT: &str = "retrobranch-il-dataset-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    action: usize,
    focus_node_id: usize,
    edge_set: usize,
    num_vars: usize,
    num_cons: usize,
    var_features: String,
    cons_features: String,
    candidates: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeSetRecord {
    rows: Vec<u32>,
    cols: Vec<u32>,
    values: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetFile {
    format: String,
    feature_set_version: String,
    edge_sets: Vec<EdgeSetRecord>,
    samples: Vec<SampleRecord>,
}

fn encode_f32(values: impl Iterator<Item = f64>) -> String {
    let bytes: Vec<u8> = values.flat_map(|v| (v as f32).to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_f32(text: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(text).map_err(|e| Error::parse("dataset", e))?;
    if bytes.len() != 4 * expected {
        return Err(Error::parse(
            "dataset",
            format!("expected {expected} values, found {} bytes", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// JSON with features as base64 little-endian `f32`; edge lists shared
    /// between samples of one instance are stored once.
    pub fn to_json(&self) -> Result<String> {
        let mut edge_sets: Vec<Arc<Vec<Edge>>> = Vec::new();
        let mut samples = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let st = &s.state;
            let edge_set = match edge_sets.iter().position(|e| Arc::ptr_eq(e, &st.edges)) {
                Some(k) => k,
                None => {
                    edge_sets.push(Arc::clone(&st.edges));
                    edge_sets.len() - 1
                }
            };
            samples.push(SampleRecord {
                action: s.action,
                focus_node_id: st.focus_node_id,
                edge_set,
                num_vars: st.num_vars(),
                num_cons: st.num_cons(),
                var_features: encode_f32(st.var_features.iter().copied()),
                cons_features: encode_f32(st.cons_features.iter().copied()),
                candidates: st.candidates(),
            });
        }
        let file = DatasetFile {
            format: DATASET_FORMAT.into(),
            feature_set_version: FEATURE_SET_VERSION.into(),
            edge_sets: edge_sets
                .iter()
                .map(|e| EdgeSetRecord {
                    rows: e.iter().map(|x| x.row).collect(),
                    cols: e.iter().map(|x| x.col).collect(),
                    values: encode_f32(e.iter().map(|x| x.value)),
                })
                .collect(),
            samples,
        };
        serde_json::to_string(&file).map_err(|e| Error::parse("dataset", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text).map_err(|e| Error::parse("dataset", e))?;
        if file.format != DATASET_FORMAT {
            return Err(Error::Incompatible {
                expected: DATASET_FORMAT.into(),
                found: file.format,
            });
        }
        if file.feature_set_version != FEATURE_SET_VERSION {
            return Err(Error::Incompatible {
                expected: FEATURE_SET_VERSION.into(),
                found: file.feature_set_version,
            });
        }
        let edge_sets: Vec<Arc<Vec<Edge>>> = file
            .edge_sets
            .iter()
            .map(|e| {
                let values = decode_f32(&e.values, e.rows.len())?;
                if e.cols.len() != e.rows.len() {
                    return Err(Error::parse("dataset", "edge rows and cols differ in length"));
                }
                Ok(Arc::new(
                    e.rows
                        .iter()
                        .zip(&e.cols)
                        .zip(values)
                        .map(|((&row, &col), value)| Edge { row, col, value })
                        .collect(),
                ))
            })
            .collect::<Result<_>>()?;
        let samples = file
            .samples
            .into_iter()
            .map(|r| {
                let vf = decode_f32(&r.var_features, r.num_vars * crate::features::NUM_VAR_FEATURES)?;
                let cf = decode_f32(&r.cons_features, r.num_cons * crate::features::NUM_CONS_FEATURES)?;
                let edges = edge_sets
                    .get(r.edge_set)
                    .cloned()
                    .ok_or_else(|| Error::parse("dataset", format!("edge set {} missing", r.edge_set)))?;
                let mut mask = vec![false; r.num_vars];
                for &j in &r.candidates {
                    *mask
                        .get_mut(j)
                        .ok_or_else(|| Error::parse("dataset", format!("candidate {j} out of range")))? = true;
                }
                if !mask.get(r.action).copied().unwrap_or(false) {
                    return Err(Error::parse("dataset", format!("label {} is not a candidate", r.action)));
                }
                Ok(LabelledSample {
                    action: r.action,
                    state: Arc::new(BipartiteState {
                        var_features: Array2::from_shape_vec((r.num_vars, crate::features::NUM_VAR_FEATURES), vf)
                            .expect("length checked"),
                        cons_features: Array2::from_shape_vec((r.num_cons, crate::features::NUM_CONS_FEATURES), cf)
                            .expect("length checked"),
                        edges,
                        candidate_mask: mask,
                        focus_node_id: r.focus_node_id,
                    }),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { samples })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_label_cfg(explore_prob: f64) -> LabelConfig {
        LabelConfig {
            instances: ProblemClass::SetCovering { rows: 60, cols: 120, density: 0.15 },
            num_train: 20,
            num_valid: 5,
            explore_prob,
            ..LabelConfig::default()
        }
    }

    #[test]
    fn cross_entropy_gradient() {
        let q = [0.5, -1.0, 2.0];
        let (loss, grad) = candidate_cross_entropy(&q, 2);
        let z: f64 = q.iter().map(|v: &f64| v.exp()).sum();
        assert!((loss - (z.ln() - 2.0)).abs() < 1e-12);
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        assert!(grad[2] < 0.0 && grad[0] > 0.0);
    }

    #[test]
    fn full_exploration_labels_every_node() {
        let cfg = small_label_cfg(1.0);
        let inst = generate(&GeneratorSpec::new(cfg.instances.clone(), 3)).unwrap();
        let mut policy = ExploreThenStrongBranch::new(1.0);
        let o = solve(&inst, &mut policy, &SolveOptions::default()).unwrap();
        assert_eq!(policy.recorded.len(), o.tree.branched().count());
        let sb = solve(&inst, &mut StrongBranching::new(), &SolveOptions::default()).unwrap();
        assert_eq!(sb.stats.num_nodes, o.stats.num_nodes);
        assert_eq!(sb.stats.num_lp_iterations, o.stats.num_lp_iterations);
    }

    #[test]
    fn labels_are_candidates_and_reproducible() {
        let cfg = small_label_cfg(0.5);
        let (train, valid) = label_sb(&cfg).unwrap();
        assert_eq!((train.len(), valid.len()), (20, 5));
        for s in train.samples.iter().chain(&valid.samples) {
            assert!(s.state.candidate_mask[s.action]);
        }
        let (again, _) = label_sb(&cfg).unwrap();
        let actions = |d: &Dataset| d.samples.iter().map(|s| s.action).collect::<Vec<_>>();
        assert_eq!(actions(&train), actions(&again));
        assert!(label_sb(&LabelConfig { explore_prob: 0.0, ..cfg }).is_err());
    }

    #[test]
    fn dataset_roundtrip() {
        let (train, _) = label_sb(&small_label_cfg(1.0)).unwrap();
        let back = Dataset::from_json(&train.to_json().unwrap()).unwrap();
        assert_eq!(back.len(), train.len());
        for (a, b) in train.samples.iter().zip(&back.samples) {
            assert_eq!(a.action, b.action);
            assert_eq!(a.state.candidate_mask, b.state.candidate_mask);
            assert_eq!(a.state.edges.len(), b.state.edges.len());
            let diff = (&a.state.var_features - &b.state.var_features).mapv(f64::abs);
            assert!(diff.iter().all(|&d| d <= 1e-6 * 1e3));
        }
        let bad = train.to_json().unwrap().replace(DATASET_FORMAT, "other-format");
        assert!(matches!(Dataset::from_json(&bad), Err(Error::Incompatible { .. })));
    }

    #[test]
    fn memorizes_single_instance() {
        let cfg = LabelConfig {
            num_train: 6,
            num_valid: 0,
            ..small_label_cfg(1.0)
        };
        let (train, _) = label_sb(&cfg).unwrap();
        let il = IlConfig {
            epochs: 400,
            batch_size: 6,
            lr: 1e-2,
            arch: Architecture { hidden: 16, ..Architecture::default() },
            ..IlConfig::default()
        };
        let out = train_il(&train, &Dataset::default(), &il).unwrap();
        assert_eq!(top1_accuracy(&out.net, &train).unwrap().unwrap_or(1.0), 1.0);
        assert!(train_il(&Dataset::default(), &Dataset::default(), &il).is_err());
    }
}
