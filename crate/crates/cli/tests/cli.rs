use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn econsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_econsim"))
        .args(args)
        .env_remove("ECONSIM_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 10] = [
    "--set",
    "env.population_size=4",
    "--set",
    "train.num_envs=2",
    "--set",
    "train.hidden_width=16",
    "--set",
    "train.shared_hidden_width=16",
    "--set",
    "env.episode_length=100",
];

fn train_small(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.display().to_string();
    let mut args = vec!["train", "--output", &out, "--total-steps", "900"];
    args.extend(SMALL);
    args.extend(extra);
    econsim(&args)
}

#[test]
fn train_smoke_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fm");
    let d = dir.display().to_string();
    let o = econsim(&[
        "train",
        "--preset",
        "free_market",
        "--seed",
        "1",
        "--total-steps",
        "10000",
        "--output",
        &d,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "metrics.csv",
        "config.json",
        "checkpoint.json",
        "episodes.csv",
        "timing.csv",
        "obs_layout.txt",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["seed"], 1);
    assert_eq!(config["run"]["preset"], "free_market");
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let hash = config["config_hash"].as_str().unwrap();
    let steps: Vec<u64> = metrics
        .lines()
        .skip(1)
        .map(|l| {
            assert!(l.contains(hash));
            l.split(',').next().unwrap().parse().unwrap()
        })
        .collect();
    assert!(!steps.is_empty());
    assert!(steps.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\ntrain.learning_rat = 0.1\n").unwrap();
    let o = econsim(&["train", "--config", &cfg.display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.learning_rat"), "{}", stderr(&o));

    let o = econsim(&["print-config", "--set", "env.population_size=-3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("env.population_size"), "{}", stderr(&o));
}

#[test]
fn same_seed_gives_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(train_small(&a, &["--seed", "7"]).status.success());
    assert!(train_small(&b, &["--seed", "7"]).status.success());
    let ma = fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(ma, fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("episodes.csv")).unwrap(),
        fs::read(b.join("episodes.csv")).unwrap()
    );
    let c = tmp.path().join("c");
    assert!(train_small(&c, &["--seed", "8"]).status.success());
    assert_ne!(ma, fs::read(c.join("metrics.csv")).unwrap());
}

#[test]
fn eval_free_market_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("fm");
    let o = train_small(&run, &["--preset", "free_market"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = run.join("checkpoint.json").display().to_string();
    let out = tmp.path().join("eval");
    let o = econsim(&[
        "eval",
        "--checkpoint",
        &ckpt,
        "--seeds",
        "15",
        "--output",
        &out.display().to_string(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let text = fs::read_to_string(out.join("eval_episodes.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 15);
    for (i, h) in header.iter().enumerate().filter(|(_, h)| h.starts_with("tax_rate_")) {
        assert!(rows.iter().all(|r| r[i] == "0"), "{h}");
    }
    let seeds: Vec<&str> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(seeds, (0..15).map(|s| s.to_string()).collect::<Vec<_>>());
    let actions = fs::read_to_string(out.join("eval_actions.csv")).unwrap();
    assert_eq!(actions.lines().count(), 1 + 15 * 4);
    assert!(out.join("eval_prices.csv").exists());
}

#[test]
fn eval_guards_environment_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("r");
    assert!(train_small(&run, &[]).status.success());
    let ckpt = run.join("checkpoint.json").display().to_string();
    let out = tmp.path().join("e").display().to_string();
    let changed = [
        "eval",
        "--checkpoint",
        &ckpt,
        "--seeds",
        "1",
        "--output",
        &out,
        "--set",
        "env.starting_coin=20",
    ];
    let o = econsim(&changed);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
    let mut forced = changed.to_vec();
    forced.push("--force");
    assert!(econsim(&forced).status.success());

    let missing = tmp.path().join("nope.json").display().to_string();
    assert_eq!(econsim(&["eval", "--checkpoint", &missing]).status.code(), Some(1));
    fs::write(tmp.path().join("bad.json"), "{\"format\": 3").unwrap();
    let bad = tmp.path().join("bad.json").display().to_string();
    assert_eq!(econsim(&["eval", "--checkpoint", &bad]).status.code(), Some(1));
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--name", "rooted", "--total-steps", "300"];
    args.extend(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_econsim"))
        .args(&args)
        .env("ECONSIM_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("rooted/metrics.csv").exists());
}

#[test]
fn bench_reports_fixed_schema() {
    let args = [
        "bench",
        "--envs",
        "1",
        "--steps",
        "150",
        "--set",
        "train.hidden_width=16",
    ];
    let run = || -> serde_json::Value {
        let o = econsim(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_slice(&o.stdout).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a["schema"], "econsim-bench/1");
    assert_eq!(a["population_size"], 4);
    let rows = a["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for (x, y) in rows.iter().zip(b["rows"].as_array().unwrap()) {
        assert!(x["agent_steps_per_sec"].as_f64().unwrap() > 0.0);
        assert_eq!(x["agent_steps"], y["agent_steps"]);
        assert_eq!(x["mode"], y["mode"]);
    }
}

#[test]
fn printed_config_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let o = econsim(&["print-config", "--preset", "section5_multiagent", "--seed", "4"]);
    assert!(o.status.success());
    let path = tmp.path().join("c.toml");
    fs::write(&path, &o.stdout).unwrap();
    let again = econsim(&["print-config", "--config", &path.display().to_string()]);
    assert_eq!(o.stdout, again.stdout);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("env.num_resources = 4"));
    assert!(text.contains("seed = 4"));
}
