use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retrobranch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn generate(dir: &Path, count: &str) {
    let o = run(&[
        "generate", "--class", "set_covering", "--rows", "60", "--cols", "120", "--density", "0.15",
        "--count", count, "--seed", "1", "--out", dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_writes_instances_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    generate(&d, "5");
    for k in 0..5 {
        assert!(d.join(format!("inst{k}.milp.json")).exists());
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["generator"]["class"]["density"], 0.15);
    assert_eq!(meta["generator"]["first_seed"], 1);
    assert_eq!(meta["command"], "generate");
}

#[test]
fn solve_prints_one_record_and_policies_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    generate(&d, "1");
    let inst = d.join("inst0.milp.json");
    let mut objectives = Vec::new();
    for policy in ["sb", "pb", "random", "mostfrac"] {
        let o = run(&["solve", "--policy", policy, "--selector", "best_first", inst.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = String::from_utf8(o.stdout).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2, "{text}");
        assert!(lines[0].starts_with("instance,seed,brancher,node_selector,num_nodes"));
        objectives.push(lines[1].split(',').nth(9).unwrap().to_string());
    }
    assert!(objectives.windows(2).all(|w| w[0] == w[1]), "{objectives:?}");
}

#[test]
fn evaluate_and_compare_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    generate(&d, "4");
    let eval = |policy: &str, name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "evaluate", "--policy", policy, "--instances", d.to_str().unwrap(), "--seed", "3",
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(&out).unwrap()
    };
    let a = eval("random", "a.csv");
    let b = eval("random", "b.csv");
    assert_eq!(a, b);
    eval("pb", "pb.csv");
    let report = dir.path().join("report.json");
    let o = run(&[
        "compare",
        dir.path().join("pb.csv").to_str().unwrap(),
        dir.path().join("pb.csv").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["tie_pct"], 100.0);
    assert_eq!(r["mean_node_ratio"], 1.0);
    assert!(dir.path().join("report.json.meta.json").exists());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&[])), 2);
    let empty = tempfile::tempdir().unwrap();
    let o = run(&["evaluate", "--policy", "pb", "--instances", empty.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no .milp.json"));
    assert_eq!(code(&run(&["solve", "--policy", "bogus", "x.milp.json"])), 2);
    assert_eq!(code(&run(&["generate", "--class", "set_covering"])), 2);
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.milp.json");
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(code(&run(&["solve", bad.to_str().unwrap()])), 1);
    let ckpt = dir.path().join("missing.qnet.json");
    let o = run(&["solve", "--policy", &format!("neural:{}", ckpt.display()), bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn train_label_and_il_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rl.toml");
    std::fs::write(
        &cfg,
        "batch_size = 4\nbuffer_init = 8\nbuffer_capacity = 200\nlearner_steps = 4\neval_every = 2\n\
         num_val_instances = 2\n[instances]\nproblem_class = \"set_covering\"\nrows = 60\ncols = 120\ndensity = 0.15\n\
         [arch]\nhidden = 8\n",
    )
    .unwrap();
    let train_once = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&["train-rl", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = train_once("a");
    let b = train_once("b");
    for f in ["train_log.csv", "best.qnet.json", "last.qnet.json", "episodes.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    let label_cfg = dir.path().join("label.toml");
    std::fs::write(
        &label_cfg,
        "num_train = 12\nnum_valid = 4\nexplore_prob = 0.5\n[instances]\nproblem_class = \"set_covering\"\n\
         rows = 60\ncols = 120\ndensity = 0.15\n",
    )
    .unwrap();
    let labels = dir.path().join("labels");
    let o = run(&["label", "--config", label_cfg.to_str().unwrap(), "--out", labels.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let il_cfg = dir.path().join("il.toml");
    std::fs::write(&il_cfg, "epochs = 2\nbatch_size = 4\n").unwrap();
    let il_out = dir.path().join("il");
    let o = run(&[
        "train-il", "--config", il_cfg.to_str().unwrap(),
        "--train", labels.join("train.dataset.json").to_str().unwrap(),
        "--valid", labels.join("valid.dataset.json").to_str().unwrap(),
        "--out", il_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = il_out.join("il.qnet.json");
    let inst_dir = dir.path().join("d");
    generate(&inst_dir, "1");
    let o = run(&[
        "solve", "--policy", &format!("neural:{}", ckpt.display()),
        inst_dir.join("inst0.milp.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}
