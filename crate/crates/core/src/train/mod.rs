//! n-step DQN with prioritized replay over retrospective or full-episode
//! trajectories, plus imitation learning from strong-branching labels.

mod config;
pub mod il;
mod replay;

pub use config::{TrainerConfig, TrajectoryMode};
pub use replay::{n_step_transitions, NStepTransition, ReplayBuffer, Sample, SumTree};

use crate::bnb::{solve, SolveOptions, SolveOutcome, SolveStats, SolveStatus};
use crate::branch::{ExplorationMode, NeuralBrancher};
use crate::eval::{self, EvalInstance, EvalOptions, EvalRecord};
use crate::features::BipartiteState;
use crate::milp::{generate, GeneratorSpec, MilpInstance, ProblemClass};
use crate::qnet::{AdamConfig, AdamState, Graph, QNet};
use crate::retro::{self, Construction, RetroTrajectory};
use crate::{Error, Result};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::Path;
use std::sync::Arc;

/// Online network, target network and optimizer state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub online: QNet,
    pub target: QNet,
    pub adam: AdamState,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
    pub beta: f64,
}

fn max_over_candidates(q: &Array1<f64>, state: &BipartiteState) -> f64 {
    state
        .candidate_mask
        .iter()
        .zip(q.iter())
        .filter(|(c, _)| **c)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max)
}

impl Learner {
    pub fn new(online: QNet, adam: AdamConfig) -> Self {
        Learner {
            target: online.clone(),
            adam: AdamState::new(adam, &online.params),
            online,
            steps: 0,
        }
    }

    /// Bootstrapped n-step targets from the target network.
    pub fn targets(&self, items: &[&NStepTransition]) -> Result<Vec<f64>> {
        let boot: Vec<&BipartiteState> = items.iter().filter_map(|t| t.bootstrap.as_deref()).collect();
        let mut next = if boot.is_empty() {
            Vec::new()
        } else {
            self.target.forward_batch(&boot)?
        }
        .into_iter()
        .zip(boot.iter())
        .map(|(q, s)| max_over_candidates(&q, s));
        items
            .iter()
            .map(|t| {
                if t.bootstrap.is_some() {
                    let v = next.next().expect("one value per bootstrap state");
                    if !v.is_finite() {
                        return Err(Error::Training("bootstrap state has no candidate".into()));
                    }
                    Ok(t.return_n + t.discount * v)
                } else {
                    Ok(t.return_n)
                }
            })
            .collect()
    }

    /// One gradient step on an explicit batch. Returns the weighted loss and
    /// the TD errors `y - Q(s, a)`.
    pub fn train_on(&mut self, items: &[&NStepTransition], weights: &[f64], tau: f64) -> Result<(f64, f64, Vec<f64>)> {
        let y = self.targets(items)?;
        let states: Vec<&BipartiteState> = items.iter().map(|t| t.state.as_ref()).collect();
        let pass = self.online.forward_pass(Graph::batch(&states)?)?;
        let rows: Vec<usize> = items
            .iter()
            .zip(&pass.graph().var_ranges)
            .map(|(t, r)| r.0 + t.action)
            .collect();
        let b = items.len() as f64;
        let mut dq = Array1::zeros(pass.q.len());
        let mut loss = 0.0f64;
        let mut td = Vec::with_capacity(items.len());
        for ((&row, &yi), &w) in rows.iter().zip(&y).zip(weights) {
            let d = yi - pass.q[row];
            loss += w * d * d / b;
            dq[row] += -2.0 * w * d / b;
            td.push(d);
        }
        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss at learner step {}: targets {:?}, td {:?}",
                self.steps, y, td
            )));
        }
        let grads = self.online.backward(&pass, &dq)?;
        let grad_norm = self.adam.update(&mut self.online.params, &grads)?;
        self.target.params.soft_update(&self.online.params, tau);
        self.steps += 1;
        Ok((loss, grad_norm, td))
    }

    /// Samples a batch, takes one step and refreshes the sampled priorities.
    pub fn step(&mut self, buffer: &mut ReplayBuffer, cfg: &TrainerConfig, rng: &mut impl Rng) -> Result<StepStats> {
        let beta = cfg.beta(self.steps);
        let sample = buffer.sample(cfg.batch_size, beta, rng)?;
        let items: Vec<&NStepTransition> = sample.indices.iter().map(|&i| buffer.get(i)).collect();
        let (loss, grad_norm, td) = self.train_on(&items, &sample.weights, cfg.tau_soft)?;
        buffer.update_priorities(&sample.indices, &td);
        Ok(StepStats { loss, grad_norm, beta })
    }
}

/// Trajectories of a finished solve under the configured mode.
pub fn trajectories(outcome: &SolveOutcome, cfg: &TrainerConfig, rng: &mut impl Rng) -> Construction {
    match cfg.trajectory_mode {
        TrajectoryMode::Retro => {
            retro::construct_trajectories(&outcome.tree, cfg.heuristic, cfg.terminal_rule, rng)
        }
        TrajectoryMode::FullEpisode => Construction {
            trajectories: retro::full_episode(&outcome.tree, outcome.stats.status == SolveStatus::Optimal)
                .into_iter()
                .collect(),
            dropped: 0,
        },
    }
}

/// What one acting episode produced.
#[derive(Debug, Clone)]
pub struct Episode {
    pub transitions: Vec<NStepTransition>,
    /// Branching decisions taken.
    pub decisions: usize,
    pub trajectory_lengths: Vec<usize>,
    pub returns: Vec<f64>,
    pub dropped: usize,
    pub stats: SolveStats,
}

/// Solves `inst` with the exploring policy and turns the tree into n-step
/// transitions.
pub fn act_and_collect(inst: &MilpInstance, net: Arc<QNet>, cfg: &TrainerConfig, seed: u64) -> Result<Episode> {
    let mut policy = NeuralBrancher::new(
        net,
        ExplorationMode::EpsilonStochastic {
            epsilon: cfg.epsilon,
            temperature: cfg.temperature,
        },
    );
    let mut opts = SolveOptions::with_selector(cfg.node_selector);
    opts.capture_states = true;
    opts.limits.max_nodes = Some(cfg.max_episode_nodes);
    opts.seed = seed;
    let outcome = solve(inst, &mut policy, &opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a11);
    let construction = trajectories(&outcome, cfg, &mut rng);
    let mut transitions = Vec::new();
    for traj in &construction.trajectories {
        let steps = retro::emit_transitions(traj, &outcome.tree)?;
        transitions.extend(n_step_transitions(&steps, cfg.n_step, cfg.gamma));
    }
    Ok(Episode {
        transitions,
        decisions: outcome.tree.branched().count(),
        trajectory_lengths: construction.trajectories.iter().map(RetroTrajectory::len).collect(),
        returns: construction.trajectories.iter().map(RetroTrajectory::undiscounted_return).collect(),
        dropped: construction.dropped,
        stats: outcome.stats,
    })
}

/// One row of the training log, written at every validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub learner_step: usize,
    pub episodes: usize,
    pub decisions: usize,
    pub buffer_size: usize,
    pub mean_loss: f64,
    pub mean_trajectory_length: f64,
    pub val_mean_nodes: f64,
    pub val_mean_lp_iterations: f64,
    pub val_limit_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub instance_seed: u64,
    pub num_nodes: usize,
    pub decisions: usize,
    pub num_trajectories: usize,
    pub mean_trajectory_length: f64,
    pub max_trajectory_length: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<TrainLogRow>,
    pub episodes: Vec<EpisodeLog>,
    pub best: QNet,
    pub best_step: usize,
    /// `(mean nodes, mean LP iterations)` of the best checkpoint.
    pub best_val: (f64, f64),
    pub initial_val: (f64, f64),
    pub last: QNet,
}

/// Consecutive steps with loss above 1e6 after which training halts.
const DIVERGENCE_PATIENCE: usize = 100;

pub fn validation_instances(class: &ProblemClass, first_seed: u64, count: usize) -> Result<Vec<EvalInstance>> {
    (0..count as u64)
        .map(|k| {
            let seed = first_seed + k;
            Ok(EvalInstance {
                id: format!("{}-{seed}", class.short_name()),
                seed,
                instance: generate(&GeneratorSpec::new(class.clone(), seed))?,
            })
        })
        .collect()
}

/// Greedy evaluation of `net`; limit-terminated solves count with the node
/// count they reached.
pub fn validate_net(net: &QNet, instances: &[EvalInstance], cfg: &TrainerConfig) -> Result<(f64, f64, usize, Vec<EvalRecord>)> {
    let mut policy = NeuralBrancher::greedy(Arc::new(net.clone()));
    let opts = EvalOptions {
        selector: cfg.eval_selector,
        max_nodes: Some(cfg.max_eval_nodes),
        seed: cfg.seed,
        record_wall_time: false,
    };
    let records = eval::evaluate(&mut policy, instances, &opts)?;
    let nodes: Vec<f64> = records.iter().map(|r| r.num_nodes as f64).collect();
    let iters: Vec<f64> = records.iter().map(|r| r.num_lp_iterations as f64).collect();
    let hits = records.iter().filter(|r| !r.is_optimal()).count();
    Ok((eval::mean(&nodes), eval::mean(&iters), hits, records))
}

fn checkpoint_metadata(cfg: &TrainerConfig, step: usize, val: (f64, f64)) -> serde_json::Value {
    serde_json::json!({
        "learner_step": step,
        "val_mean_nodes": val.0,
        "val_mean_lp_iterations": val.1,
        "config": serde_json::to_value(cfg).unwrap_or_default(),
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains a Q-network. Alternates acting episodes with learner steps, one
/// per `actor_steps_per_update` branching decisions once the buffer holds
/// `buffer_init` transitions, and validates greedily every `eval_every`
/// learner steps. With `out_dir`, writes `train_log.csv`,
/// `episodes.csv`, `best.qnet.json` and `last.qnet.json` there.
pub fn train_rl(cfg: &TrainerConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let val = validation_instances(&cfg.instances, cfg.val_seed, cfg.num_val_instances)?;
    let val_range = cfg.val_seed..cfg.val_seed + cfg.num_val_instances as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut learner = Learner::new(QNet::new(cfg.arch, cfg.seed), cfg.adam());
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.buffer_init.max(cfg.batch_size), cfg.per_alpha, cfg.min_priority);

    let (n0, i0, h0, _) = validate_net(&learner.online, &val, cfg)?;
    let mut log = vec![TrainLogRow {
        learner_step: 0,
        episodes: 0,
        decisions: 0,
        buffer_size: 0,
        mean_loss: f64::NAN,
        mean_trajectory_length: f64::NAN,
        val_mean_nodes: n0,
        val_mean_lp_iterations: i0,
        val_limit_hits: h0,
    }];
    let mut best = (learner.online.clone(), 0, (n0, i0));
    let mut episodes = Vec::new();
    let (mut decisions, mut pending) = (0usize, 0usize);
    let (mut loss_sum, mut loss_count, mut diverging) = (0.0, 0usize, 0usize);
    let (mut len_sum, mut len_count) = (0usize, 0usize);

    while learner.steps < cfg.learner_steps {
        let instance_seed = loop {
            let s = rng.gen::<u64>() >> 1;
            if !val_range.contains(&s) {
                break s;
            }
        };
        let inst = generate(&GeneratorSpec::new(cfg.instances.clone(), instance_seed))?;
        let ep = act_and_collect(&inst, Arc::new(learner.online.clone()), cfg, rng.gen())?;
        decisions += ep.decisions;
        len_sum += ep.trajectory_lengths.iter().sum::<usize>();
        len_count += ep.trajectory_lengths.len();
        episodes.push(EpisodeLog {
            episode: episodes.len(),
            instance_seed,
            num_nodes: ep.stats.num_nodes,
            decisions: ep.decisions,
            num_trajectories: ep.trajectory_lengths.len(),
            mean_trajectory_length: eval::mean(&ep.trajectory_lengths.iter().map(|&l| l as f64).collect::<Vec<_>>()),
            max_trajectory_length: ep.trajectory_lengths.iter().copied().max().unwrap_or(0),
            dropped: ep.dropped,
        });
        for t in ep.transitions {
            buffer.push(t);
        }
        if !buffer.is_ready() {
            continue;
        }
        pending += ep.decisions;
        while pending >= cfg.actor_steps_per_update && learner.steps < cfg.learner_steps {
            pending -= cfg.actor_steps_per_update;
            let st = learner.step(&mut buffer, cfg, &mut rng)?;
            loss_sum += st.loss;
            loss_count += 1;
            diverging = if st.loss > 1e6 { diverging + 1 } else { 0 };
            if diverging >= DIVERGENCE_PATIENCE {
                if let Some(dir) = out_dir {
                    write_csv(&dir.join("train_log.csv"), &log)?;
                }
                return Err(Error::Training(format!(
                    "loss above 1e6 for {DIVERGENCE_PATIENCE} consecutive steps (last {:.3e}) at step {}",
                    st.loss, learner.steps
                )));
            }
            if learner.steps.is_multiple_of(cfg.eval_every) || learner.steps == cfg.learner_steps {
                let (n, i, h, _) = validate_net(&learner.online, &val, cfg)?;
                log.push(TrainLogRow {
                    learner_step: learner.steps,
                    episodes: episodes.len(),
                    decisions,
                    buffer_size: buffer.len(),
                    mean_loss: loss_sum / loss_count.max(1) as f64,
                    mean_trajectory_length: len_sum as f64 / len_count.max(1) as f64,
                    val_mean_nodes: n,
                    val_mean_lp_iterations: i,
                    val_limit_hits: h,
                });
                (loss_sum, loss_count, len_sum, len_count) = (0.0, 0, 0, 0);
                if (n, i) < best.2 {
                    best = (learner.online.clone(), learner.steps, (n, i));
                    if let Some(dir) = out_dir {
                        best.0.save(&dir.join("best.qnet.json"), checkpoint_metadata(cfg, best.1, best.2))?;
                    }
                }
            }
        }
    }
    if let Some(dir) = out_dir {
        write_csv(&dir.join("train_log.csv"), &log)?;
        write_csv(&dir.join("episodes.csv"), &episodes)?;
        if best.1 == 0 {
            best.0.save(&dir.join("best.qnet.json"), checkpoint_metadata(cfg, 0, best.2))?;
        }
        let last_val = log.last().map_or((n0, i0), |r| (r.val_mean_nodes, r.val_mean_lp_iterations));
        learner
            .online
            .save(&dir.join("last.qnet.json"), checkpoint_metadata(cfg, learner.steps, last_val))?;
    }
    Ok(TrainOutcome {
        log,
        episodes,
        best: best.0,
        best_step: best.1,
        best_val: best.2,
        initial_val: (n0, i0),
        last: learner.online,
    })
}
