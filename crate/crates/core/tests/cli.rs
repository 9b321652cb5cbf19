use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 8] = [
    "mapgen.width=40",
    "mapgen.height=40",
    "mapgen.goal_distance={\"min\":12,\"max\":14}",
    "mapgen.n_obstacles={\"min\":2,\"max\":4}",
    "mapgen.border_margin=5",
    "eval.n_episodes=1",
    "eval.n_samples=4",
    "sample.n_samples=6",
];

fn heatplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatplan"))
        .args(args)
        .env_remove("HEATPLAN_THREADS")
        .output()
        .expect("binary runs")
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(SMALL);
    v
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = heatplan(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(heatplan(&["genmap", "--frob"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_usage_error() {
    let o = heatplan(&["genmap", "sampler.epsilom=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sampler.epsilom"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"mapgen": {"widht": 10}}"#).unwrap();
    let o = heatplan(&["genmap", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_runtime_error_naming_the_path() {
    let o = heatplan(&["genmap", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/definitely/not/here.json"));
}

#[test]
fn bad_thread_env_is_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_heatplan"))
        .args(["genmap", "--out"])
        .arg(tempfile::tempdir().unwrap().path())
        .env("HEATPLAN_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let o = heatplan(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["genmap", "kernel", "sample", "train", "eval", "render", "bench"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn eval_with_config_file_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"models": ["ours", "gaussian"], "kinds": ["unimodal"]}"#).unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["eval", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let o = heatplan(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("model,scenario,success_rate,kl_divergence"));
    assert_eq!(lines.count(), 2);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["models"], serde_json::json!(["ours", "gaussian"]));
    assert_eq!(report["config"]["eval"]["n_samples"], 4);
}

#[test]
fn effective_config_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = heatplan(&with_small(&["genmap", "--seed", "9", "--out", out.to_str().unwrap(), "sampler.epsilon=0.001"]));
    assert_eq!(o.status.code(), Some(0));
    for name in ["run.json", "scenario.json"] {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join(name)).unwrap()).unwrap();
        assert_eq!(v["config"]["seed"], 9);
        assert_eq!(v["config"]["sampler"]["epsilon"], 0.001);
        assert_eq!(v["config"]["mapgen"]["width"], 40);
    }
    let pgm = std::fs::read(out.join("map.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n40 40\n255\n"));
}

#[test]
fn sample_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = heatplan(&with_small(&["sample", "--seed", "2", "--threads", threads, "--out", out.to_str().unwrap()]));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ja = std::fs::read(a.join("trajectories.jsonl")).unwrap();
    assert_eq!(ja, std::fs::read(b.join("trajectories.jsonl")).unwrap());
    assert_eq!(String::from_utf8_lossy(&ja).lines().count(), 6);
}

fn ppm_size(path: &Path) -> (usize, usize, usize) {
    let bytes = std::fs::read(path).unwrap();
    let text = String::from_utf8_lossy(&bytes[..16]).into_owned();
    let mut it = text.split_whitespace();
    assert_eq!(it.next(), Some("P6"));
    let w: usize = it.next().unwrap().parse().unwrap();
    let h: usize = it.next().unwrap().parse().unwrap();
    (w, h, bytes.len())
}

#[test]
fn scenario_dir_feeds_kernel_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    let k = dir.path().join("k");
    let r = dir.path().join("r");
    assert_eq!(heatplan(&with_small(&["genmap", "--seed", "3", "--out", g.to_str().unwrap()])).status.code(), Some(0));
    // The scenario comes from the directory, so the map size overrides are not needed here.
    let o = heatplan(&["kernel", "--scenario", g.to_str().unwrap(), "--out", k.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(k.join("kernel.json")).unwrap()).unwrap();
    assert_eq!(manifest["levels"], 10);
    assert_eq!(manifest["width"], 40);
    let score = std::fs::read(k.join("score_t10.hkf")).unwrap();
    assert_eq!(&score[..4], b"HKF1");
    assert_eq!(score.len(), 16 + 8 * 2 * 40 * 40);

    let o = heatplan(&[
        "render",
        "--scenario",
        g.to_str().unwrap(),
        "--field",
        k.join("p_t01.hkf").to_str().unwrap(),
        "--out",
        r.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (w, h, len) = ppm_size(&r.join("render.ppm"));
    assert_eq!((w, h), (40, 40));
    assert_eq!(len, "P6\n40 40\n255\n".len() + 3 * 40 * 40);

    // A two-channel field cannot be shaded.
    let o = heatplan(&[
        "render",
        "--scenario",
        g.to_str().unwrap(),
        "--field",
        k.join("score_t01.hkf").to_str().unwrap(),
        "--out",
        r.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_writes_checkpoints_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = heatplan(&with_small(&["train", "--out", out.to_str().unwrap(), "train.n_iterations=20", "train.batch_size=16"]));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("model/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["T"], 10);
    assert_eq!(m["width"], 40);
    assert_eq!(m["schedule"]["k_min"], 12.5);
    for t in 1..=10 {
        let f = std::fs::read(out.join(format!("model/level_{t:02}.hkf"))).unwrap();
        assert_eq!(f.len(), 16 + 8 * 2 * 40 * 40);
    }
    let losses = std::fs::read_to_string(out.join("losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 21);
}
