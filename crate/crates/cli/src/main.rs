use clap::{Args, Parser, Subcommand, ValueEnum};
use retrobranch::bnb::NodeSelectorKind;
use retrobranch::branch::PolicySpec;
use retrobranch::eval::{self, EvalInstance, EvalOptions};
use retrobranch::features::FEATURE_SET_VERSION;
use retrobranch::milp::{generate, read_instance, write_instance, GeneratorSpec, ProblemClass, INSTANCE_EXTENSION};
use retrobranch::qnet::CHECKPOINT_FORMAT;
use retrobranch::train::il::{self, Dataset, IlConfig, LabelConfig};
use retrobranch::train::{self, TrainerConfig};
use retrobranch::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "retrobranch", version, about = "Branch-and-bound with learned variable selection")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write seeded benchmark instances to --out.
    Generate(GenerateArgs),
    /// Solve one instance and print its evaluation record.
    Solve(SolveArgs),
    /// Train a Q-network by reinforcement learning (config: trainer TOML).
    TrainRl(TrainRlArgs),
    /// Record explore-then-strong-branch labels (config: label TOML).
    Label,
    /// Imitation-learn strong branching from labelled datasets.
    TrainIl(TrainIlArgs),
    /// Evaluate a policy on every instance of a directory.
    Evaluate(EvaluateArgs),
    /// Compare two evaluation CSVs instance by instance.
    Compare(CompareArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
#[value(rename_all = "snake_case")]
enum ClassName {
    SetCovering,
    CombinatorialAuction,
    CapacitatedFacilityLocation,
    MaximumIndependentSet,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    class: ClassName,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 1000)]
    cols: usize,
    #[arg(long, default_value_t = 0.05)]
    density: f64,
    #[arg(long, default_value_t = 100)]
    items: usize,
    #[arg(long, default_value_t = 500)]
    bids: usize,
    #[arg(long, default_value_t = 0.65)]
    add_item_prob: f64,
    #[arg(long, default_value_t = 100)]
    customers: usize,
    #[arg(long, default_value_t = 100)]
    facilities: usize,
    #[arg(long, default_value_t = 5.0)]
    capacity_ratio: f64,
    #[arg(long, default_value_t = 500)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    affinity: usize,
}

impl GenerateArgs {
    fn class(&self) -> ProblemClass {
        match self.class {
            ClassName::SetCovering => ProblemClass::SetCovering {
                rows: self.rows,
                cols: self.cols,
                density: self.density,
            },
            ClassName::CombinatorialAuction => ProblemClass::CombinatorialAuction {
                items: self.items,
                bids: self.bids,
                add_item_prob: self.add_item_prob,
            },
            ClassName::CapacitatedFacilityLocation => ProblemClass::CapacitatedFacilityLocation {
                customers: self.customers,
                facilities: self.facilities,
                capacity_ratio: self.capacity_ratio,
            },
            ClassName::MaximumIndependentSet => ProblemClass::MaximumIndependentSet {
                nodes: self.nodes,
                affinity: self.affinity,
            },
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, default_value = "pb")]
    policy: PolicySpec,
    #[arg(long, default_value = "best_first")]
    selector: NodeSelectorKind,
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Fill the wall_ms column (makes output timing dependent).
    #[arg(long)]
    wall_time: bool,
    instance: PathBuf,
}

#[derive(Args, Debug)]
struct TrainRlArgs {
    /// Overrides `learner_steps` from the config.
    #[arg(long)]
    learner_steps: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainIlArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    policy: PolicySpec,
    #[arg(long, default_value = "best_first")]
    selector: NodeSelectorKind,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args, Debug)]
struct CompareArgs {
    baseline: PathBuf,
    candidate: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn require_out(cli: &Cli, what: &str) -> Outcome<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| Failure::Usage(format!("{what} needs --out <dir>")))
}

fn ensure_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))
}

fn load_config<T: DeserializeOwned + Default + Serialize>(cli: &Cli) -> Outcome<(T, Option<String>)> {
    match &cli.config {
        None => Ok((T::default(), None)),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
            let cfg: T = toml::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let canonical = toml::to_string(&cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
            Ok((cfg, Some(canonical)))
        }
    }
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes the run's metadata next to its output: `<dir>/metadata.json` for
/// directory outputs, `<file>.meta.json` otherwise.
fn write_sidecar(
    out: &Path,
    is_dir: bool,
    command: &str,
    config: Option<serde_json::Value>,
    generator: Option<serde_json::Value>,
    extra: serde_json::Value,
) -> Outcome {
    let config_hash = config.as_ref().map(|c| sha256_hex(&c.to_string()));
    let meta = serde_json::json!({
        "tool": "retrobranch",
        "version": env!("CARGO_PKG_VERSION"),
        "feature_set_version": FEATURE_SET_VERSION,
        "checkpoint_format": CHECKPOINT_FORMAT,
        "command": command,
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
        "config": config,
        "config_sha256": config_hash,
        "generator": generator,
        "details": extra,
    });
    let path = if is_dir {
        out.join("metadata.json")
    } else {
        let mut name = out.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| io_fail(&path, e))
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Outcome {
    let out = require_out(cli, "generate")?;
    if args.count == 0 {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    ensure_dir(&out)?;
    let class = args.class();
    let base = cli.seed.unwrap_or(0);
    for k in 0..args.count {
        let spec = GeneratorSpec::new(class.clone(), base + k);
        let inst = generate(&spec)?;
        write_instance(&inst, out.join(format!("inst{k}.{INSTANCE_EXTENSION}")))?;
    }
    let generator = serde_json::json!({ "class": to_json(&class), "first_seed": base, "count": args.count });
    write_sidecar(&out, true, "generate", None, Some(generator), serde_json::Value::Null)?;
    eprintln!("wrote {} instances to {}", args.count, out.display());
    Ok(())
}

fn write_records_out(cli: &Cli, records: &[eval::EvalRecord]) -> Outcome {
    match &cli.out {
        Some(path) => eval::write_records(path, records)?,
        None => eval::write_records_to(std::io::stdout().lock(), records)?,
    }
    Ok(())
}

fn cmd_solve(cli: &Cli, args: &SolveArgs) -> Outcome {
    let inst = EvalInstance::from_instance(read_instance(&args.instance)?);
    let mut policy = args.policy.build()?;
    let opts = EvalOptions {
        selector: args.selector,
        max_nodes: args.max_nodes,
        seed: cli.seed.unwrap_or(0),
        record_wall_time: args.wall_time,
    };
    let records = eval::evaluate(policy.as_mut(), &[inst], &opts)?;
    write_records_out(cli, &records)?;
    if let Some(out) = &cli.out {
        let extra = serde_json::json!({ "policy": args.policy.to_string(), "selector": args.selector.as_str() });
        write_sidecar(out, false, "solve", None, None, extra)?;
    }
    Ok(())
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Outcome {
    let instances = eval::load_instance_dir(&args.instances)?;
    let mut policy = args.policy.build()?;
    let opts = EvalOptions {
        selector: args.selector,
        max_nodes: args.max_nodes,
        seed: cli.seed.unwrap_or(0),
        record_wall_time: args.wall_time,
    };
    let records = eval::evaluate(policy.as_mut(), &instances, &opts)?;
    let summary = eval::summarize(&records);
    write_records_out(cli, &records)?;
    eprintln!(
        "{}: {} instances, {} solved, mean nodes {:.2} (geo {:.2}), mean LP iterations {:.1} (geo {:.1})",
        args.policy, summary.records, summary.solved, summary.mean_nodes, summary.geo_mean_nodes,
        summary.mean_lp_iterations, summary.geo_mean_lp_iterations
    );
    if let Some(out) = &cli.out {
        let extra = serde_json::json!({
            "policy": args.policy.to_string(),
            "selector": args.selector.as_str(),
            "summary": to_json(&summary),
        });
        write_sidecar(out, false, "evaluate", None, None, extra)?;
    }
    Ok(())
}

fn cmd_compare(cli: &Cli, args: &CompareArgs) -> Outcome {
    let base = eval::read_records(&args.baseline)?;
    let cand = eval::read_records(&args.candidate)?;
    let report = eval::compare(&base, &cand)?;
    eprintln!(
        "{} vs {}: win {:.1}% tie {:.1}% loss {:.1}%, mean node ratio {:.3}, mean LP-iteration ratio {:.3}",
        report.candidate, report.baseline, report.win_pct, report.tie_pct, report.loss_pct,
        report.mean_node_ratio, report.mean_lp_iteration_ratio
    );
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))? + "\n";
    match &cli.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| io_fail(path, e))?;
            write_sidecar(path, false, "compare", None, None, serde_json::Value::Null)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_train_rl(cli: &Cli, args: &TrainRlArgs) -> Outcome {
    let out = require_out(cli, "train-rl")?;
    let (mut cfg, _) = load_config::<TrainerConfig>(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = args.learner_steps {
        cfg.learner_steps = steps;
    }
    cfg.validate()?;
    ensure_dir(&out)?;
    let result = train::train_rl(&cfg, Some(&out))?;
    let extra = serde_json::json!({
        "best_step": result.best_step,
        "best_val_mean_nodes": result.best_val.0,
        "initial_val_mean_nodes": result.initial_val.0,
    });
    write_sidecar(&out, true, "train-rl", Some(to_json(&cfg)), Some(to_json(&cfg.instances)), extra)?;
    eprintln!(
        "validation mean nodes {:.2} -> best {:.2} at step {}",
        result.initial_val.0, result.best_val.0, result.best_step
    );
    Ok(())
}

fn cmd_label(cli: &Cli) -> Outcome {
    let out = require_out(cli, "label")?;
    let (mut cfg, _) = load_config::<LabelConfig>(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    ensure_dir(&out)?;
    let (train, valid) = il::label_sb(&cfg)?;
    train.save(&out.join("train.dataset.json"))?;
    valid.save(&out.join("valid.dataset.json"))?;
    let extra = serde_json::json!({ "train_samples": train.len(), "valid_samples": valid.len() });
    write_sidecar(&out, true, "label", Some(to_json(&cfg)), Some(to_json(&cfg.instances)), extra)?;
    eprintln!("{} training and {} validation labels", train.len(), valid.len());
    Ok(())
}

fn cmd_train_il(cli: &Cli, args: &TrainIlArgs) -> Outcome {
    let out = require_out(cli, "train-il")?;
    let (mut cfg, _) = load_config::<IlConfig>(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let train_set = Dataset::load(&args.train)?;
    let valid_set = match &args.valid {
        Some(p) => Dataset::load(p)?,
        None => Dataset::default(),
    };
    ensure_dir(&out)?;
    let result = il::train_il(&train_set, &valid_set, &cfg)?;
    let meta = serde_json::json!({ "best_epoch": result.best_epoch, "valid_accuracy": result.valid_accuracy });
    result.net.save(&out.join("il.qnet.json"), meta.clone())?;
    let log_path = out.join("il_log.csv");
    let mut log = String::from("epoch,train_loss,valid_accuracy\n");
    for r in &result.log {
        let _ = writeln!(log, "{},{},{}", r.epoch, r.train_loss, r.valid_accuracy);
    }
    std::fs::write(&log_path, log).map_err(|e| io_fail(&log_path, e))?;
    write_sidecar(&out, true, "train-il", Some(to_json(&cfg)), None, meta)?;
    eprintln!("top-1 validation accuracy {:.3} (epoch {})", result.valid_accuracy, result.best_epoch);
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Generate(a) => cmd_generate(cli, a),
        Command::Solve(a) => cmd_solve(cli, a),
        Command::TrainRl(a) => cmd_train_rl(cli, a),
        Command::Label => cmd_label(cli),
        Command::TrainIl(a) => cmd_train_il(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::Compare(a) => cmd_compare(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
