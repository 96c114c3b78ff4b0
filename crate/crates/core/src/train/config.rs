use crate::bnb::NodeSelectorKind;
use crate::milp::ProblemClass;
use crate::qnet::{AdamConfig, Architecture};
use crate::retro::{Heuristic, TerminalRule};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Where training episodes come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    /// Retrospective trajectories built with `heuristic`.
    Retro,
    /// The whole solve as one episode, in visit order.
    FullEpisode,
}

/// DQN training configuration. Field names follow the usual hyperparameter
/// names; every field has a default so a config file only lists overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub seed: u64,
    pub batch_size: usize,
    /// Branching decisions taken by the actor per learner step.
    pub actor_steps_per_update: usize,
    pub lr: f64,
    pub gamma: f64,
    /// Transitions required before the first learner step.
    pub buffer_init: usize,
    pub buffer_capacity: usize,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_end: f64,
    /// Learner steps over which beta is annealed linearly.
    pub per_beta_steps: usize,
    pub min_priority: f64,
    pub tau_soft: f64,
    pub grad_clip: f64,
    pub n_step: usize,
    /// Probability of a uniformly random action while acting.
    pub epsilon: f64,
    /// Softmax temperature of the non-random actions.
    pub temperature: f64,
    pub trajectory_mode: TrajectoryMode,
    pub heuristic: Heuristic,
    pub terminal_rule: TerminalRule,
    /// Node selector used while acting.
    pub node_selector: NodeSelectorKind,
    /// Node selector of the greedy validation runs.
    pub eval_selector: NodeSelectorKind,
    pub instances: ProblemClass,
    /// Total learner steps.
    pub learner_steps: usize,
    /// Learner steps between validation runs.
    pub eval_every: usize,
    pub num_val_instances: usize,
    /// Seed of the first validation instance; the rest follow consecutively.
    pub val_seed: u64,
    /// Focused-node cap for a single acting episode.
    pub max_episode_nodes: usize,
    /// Focused-node cap for a validation solve.
    pub max_eval_nodes: usize,
    pub arch: Architecture,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            seed: 0,
            batch_size: 64,
            actor_steps_per_update: 5,
            lr: 5e-5,
            gamma: 0.99,
            buffer_init: 20_000,
            buffer_capacity: 100_000,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_beta_end: 1.0,
            per_beta_steps: 5_000,
            min_priority: 1e-3,
            tau_soft: 1e-4,
            grad_clip: 10.0,
            n_step: 3,
            epsilon: 2.5e-2,
            temperature: 1.0,
            trajectory_mode: TrajectoryMode::Retro,
            heuristic: Heuristic::Mlpg,
            terminal_rule: TerminalRule::BothChildrenFathomed,
            node_selector: NodeSelectorKind::BestFirst,
            eval_selector: NodeSelectorKind::BestFirst,
            instances: ProblemClass::SetCovering {
                rows: 100,
                cols: 200,
                density: 0.15,
            },
            learner_steps: 5_000,
            eval_every: 250,
            num_val_instances: 100,
            val_seed: 1_000_000_000,
            max_episode_nodes: 10_000,
            max_eval_nodes: 10_000,
            arch: Architecture::default(),
        }
    }
}

impl TrainerConfig {
    /// Retro branching agent with the given construction heuristic.
    pub fn retro(heuristic: Heuristic) -> Self {
        TrainerConfig {
            trajectory_mode: TrajectoryMode::Retro,
            heuristic,
            ..Self::default()
        }
    }

    /// Full-episode agent under the default node selector.
    pub fn original() -> Self {
        TrainerConfig {
            trajectory_mode: TrajectoryMode::FullEpisode,
            ..Self::default()
        }
    }

    /// Full-episode agent under depth-first node selection, so that the
    /// -1-per-step return counts the nodes of the sub-tree below each node.
    pub fn fmsts() -> Self {
        TrainerConfig {
            trajectory_mode: TrajectoryMode::FullEpisode,
            node_selector: NodeSelectorKind::Dfs,
            ..Self::default()
        }
    }

    /// Settings for the large instance sizes.
    pub fn large(self) -> Self {
        TrainerConfig {
            batch_size: 128,
            actor_steps_per_update: 10,
            ..self
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            grad_clip: self.grad_clip,
            ..AdamConfig::default()
        }
    }

    /// Importance-sampling exponent after `step` learner steps.
    pub fn beta(&self, step: usize) -> f64 {
        let t = if self.per_beta_steps == 0 {
            1.0
        } else {
            (step as f64 / self.per_beta_steps as f64).min(1.0)
        };
        self.per_beta_start + (self.per_beta_end - self.per_beta_start) * t
    }

    pub fn validate(&self) -> Result<()> {
        let positive_int = [
            ("batch_size", self.batch_size),
            ("actor_steps_per_update", self.actor_steps_per_update),
            ("buffer_capacity", self.buffer_capacity),
            ("n_step", self.n_step),
            ("eval_every", self.eval_every),
            ("max_episode_nodes", self.max_episode_nodes),
            ("max_eval_nodes", self.max_eval_nodes),
        ];
        for (name, v) in positive_int {
            if v == 0 {
                return Err(Error::Parameter(format!("{name} must be positive")));
            }
        }
        let positive = [
            ("lr", self.lr),
            ("gamma", self.gamma),
            ("per_alpha", self.per_alpha),
            ("per_beta_start", self.per_beta_start),
            ("min_priority", self.min_priority),
            ("tau_soft", self.tau_soft),
            ("grad_clip", self.grad_clip),
            ("temperature", self.temperature),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma > 1.0 || self.tau_soft > 1.0 {
            return Err(Error::Parameter("gamma and tau_soft must not exceed 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Parameter(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.per_beta_start <= self.per_beta_end && self.per_beta_end <= 1.0) {
            return Err(Error::Parameter(
                "per_beta_start <= per_beta_end <= 1 is required".into(),
            ));
        }
        if self.buffer_init > self.buffer_capacity {
            return Err(Error::Parameter("buffer_init exceeds buffer_capacity".into()));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::Parameter("batch_size exceeds buffer_capacity".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainerConfig = toml::from_str(text).map_err(|e| Error::parse("trainer config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = TrainerConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.n_step, 3);
        assert_eq!(cfg.epsilon, 0.025);
    }

    #[test]
    fn toml_roundtrip_and_overrides() {
        let cfg = TrainerConfig::fmsts();
        assert_eq!(TrainerConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = TrainerConfig::from_toml("batch_size = 8\ntrajectory_mode = \"full_episode\"\n").unwrap();
        assert_eq!(partial.batch_size, 8);
        assert_eq!(partial.trajectory_mode, TrajectoryMode::FullEpisode);
        assert_eq!(partial.lr, 5e-5);
        let sc = TrainerConfig::from_toml(
            "[instances]\nproblem_class = \"set_covering\"\nrows = 10\ncols = 20\ndensity = 0.3\n",
        )
        .unwrap();
        assert_eq!(sc.instances, ProblemClass::SetCovering { rows: 10, cols: 20, density: 0.3 });
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainerConfig::from_toml("lr = -1.0").is_err());
        assert!(TrainerConfig::from_toml("epsilon = 1.5").is_err());
        assert!(TrainerConfig::from_toml("unknown_key = 1").is_err());
        assert!(TrainerConfig::from_toml("per_beta_start = 0.9\nper_beta_end = 0.5").is_err());
    }

    #[test]
    fn beta_anneals_to_end() {
        let cfg = TrainerConfig::default();
        assert_eq!(cfg.beta(0), 0.4);
        assert!((cfg.beta(2_500) - 0.7).abs() < 1e-12);
        assert_eq!(cfg.beta(5_000), 1.0);
        assert_eq!(cfg.beta(50_000), 1.0);
        let mut prev = 0.0;
        for s in (0..6000).step_by(100) {
            assert!(cfg.beta(s) >= prev);
            prev = cfg.beta(s);
        }
    }
}
