use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use arbiter::checkpoint;
use arbiter::metrics::read_metrics;
use arbiter::report::EvalReport;
use arbiter::RunConfig;
use arbiter_core::agent::{Agent, AgentConfig};

fn arbiter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arbiter"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Pretraining settings small enough for a test, with a threshold loose
/// enough to always pass.
const QUICK_PRETRAIN: &str = "[pretrain]\ntrain_samples = 600\nvalidation_samples = 100\nhead_max_epochs = 3\nactor_max_epochs = 3\ntolerance = 10.0\n";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn random_checkpoint(dir: &Path) -> PathBuf {
    let cfg = RunConfig::default();
    let agent = Agent::new(AgentConfig::default(), cfg.env.goal_count, cfg.env.max_speed, 3).unwrap();
    let p = dir.join("random.ckpt");
    checkpoint::save(&agent, &p).unwrap();
    p
}

#[test]
fn config_init_writes_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    let out = arbiter(&["config", "init", "--output", s(&path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), RunConfig::default());
    for section in ["[run]", "[env]", "[intent]", "[reward]", "[agent]", "[pretrain]", "[user]", "[serve]"] {
        assert!(text.contains(section), "missing {section}");
    }

    let out = arbiter(&["config", "show", "--config", s(&path), "--seed", "42", "--user", "noisy0.5"]);
    assert_eq!(code(&out), 0);
    let shown = RunConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(shown.run.seed, 42);
    assert_eq!(shown.user.mode.to_string(), "noisy0.5");
}

#[test]
fn usage_and_config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&arbiter(&["pretrain", "--config", s(&missing)])), 2);
    assert_eq!(code(&arbiter(&["frobnicate"])), 2);
    assert_eq!(code(&arbiter(&["eval", "--user", "sleepy"])), 2);
    assert_eq!(code(&arbiter(&["eval", "--assistance", "partial"])), 2);
    let bad = write(dir.path(), "bad.toml", "[env]\nmax_speed = -1.0\n");
    assert_eq!(code(&arbiter(&["eval", "--config", s(&bad)])), 2);
    let unknown = write(dir.path(), "unknown.toml", "[env]\ncolour = \"red\"\n");
    assert_eq!(code(&arbiter(&["eval", "--config", s(&unknown)])), 2);
    // shared evaluation and serving need a checkpoint
    assert_eq!(code(&arbiter(&["eval", "--assistance", "shared"])), 2);
    assert_eq!(code(&arbiter(&["serve", "--assistance", "shared"])), 2);
    assert_eq!(code(&arbiter(&["--help"])), 0);
}

#[test]
fn runtime_failures_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");
    let out = arbiter(&["train", "--checkpoint", s(&missing), "--output", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ckpt"));

    let garbage = write(dir.path(), "garbage.ckpt", "not a checkpoint");
    let out = arbiter(&["eval", "--checkpoint", s(&garbage), "--output", s(&dir.path().join("r.json"))]);
    assert_eq!(code(&out), 1);

    let strict = write(
        dir.path(),
        "strict.toml",
        "[pretrain]\ntrain_samples = 300\nvalidation_samples = 100\nhead_max_epochs = 1\nactor_max_epochs = 1\ntolerance = 1e-9\n",
    );
    let out = arbiter(&["pretrain", "--config", s(&strict), "--output", s(&dir.path().join("p.ckpt"))]);
    assert_eq!(code(&out), 1, "an unmet pretraining threshold is a runtime failure");
}

#[test]
fn pretraining_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "quick.toml", QUICK_PRETRAIN);
    let run = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let out = arbiter(&["pretrain", "--config", s(&cfg), "--seed", seed, "--output", s(&p)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(p).unwrap()
    };
    let a = run("a.ckpt", "4");
    let b = run("b.ckpt", "4");
    let c = run("c.ckpt", "5");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(dir.path().join("a.pretrain.json").exists());
}

#[test]
fn two_episode_smoke_run_writes_metrics_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = random_checkpoint(dir.path());
    let out_dir = dir.path().join("train");
    let out = arbiter(&["train", "--checkpoint", s(&ckpt), "--episodes", "2", "--output", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let lines = read_metrics(&out_dir.join("metrics.jsonl")).unwrap();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].episode.episode, 1);
    for name in ["final.ckpt", "best.ckpt"] {
        checkpoint::load(&out_dir.join(name), &AgentConfig::default()).unwrap();
    }
}

#[test]
fn training_without_a_checkpoint_pretrains_first() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "quick.toml", QUICK_PRETRAIN);
    let out_dir = dir.path().join("train");
    let out = arbiter(&["train", "--config", s(&cfg), "--episodes", "1", "--output", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("pretrained.ckpt").exists());
    assert_eq!(read_metrics(&out_dir.join("metrics.jsonl")).unwrap().len(), 1);
}

#[test]
fn eval_report_aggregates_match_its_records() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = random_checkpoint(dir.path());
    for (assistance, extra) in [("direct", vec![]), ("shared", vec!["--checkpoint", s(&ckpt)])] {
        let path = dir.path().join(format!("{assistance}.json"));
        let mut args = vec!["eval", "--assistance", assistance, "--episodes", "4", "--seed", "8", "--output", s(&path)];
        args.extend(extra);
        let out = arbiter(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let report = EvalReport::load(&path).unwrap();
        assert_eq!(report.episodes.len(), 4);
        assert_eq!(report.config.run.seed, 8);
        let again = report.recompute_summary();
        assert_eq!(again.successes, report.summary.successes);
        assert_eq!(again.collision_episodes, report.summary.collision_episodes);
        assert!((again.travel_mean_cm - report.summary.travel_mean_cm).abs() < 1e-9);
        assert!((again.travel_std_cm - report.summary.travel_std_cm).abs() < 1e-9);
        for e in &report.episodes {
            assert_eq!(e.l2_human.len(), e.steps);
            assert_eq!(e.l2_robot.len(), e.steps);
        }
    }
    // direct and shared runs share the same episode stream
    let d = EvalReport::load(&dir.path().join("direct.json")).unwrap();
    let sh = EvalReport::load(&dir.path().join("shared.json")).unwrap();
    let goals = |r: &EvalReport| r.episodes.iter().map(|e| e.true_goal).collect::<Vec<_>>();
    assert_eq!(goals(&d), goals(&sh));
    assert_eq!(d.eval_seed, sh.eval_seed);
}

#[test]
fn trace_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let report = dir.path().join("report.json");
    let common = ["--assistance", "direct", "--episodes", "3", "--seed", "2"];
    let out = arbiter(&[&["trace"][..], &common, &["--output", s(&trace)]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = arbiter(&[&["eval"][..], &common, &["--output", s(&report)]].concat());
    assert_eq!(code(&out), 0);
    let report = EvalReport::load(&report).unwrap();

    let mut rd = csv::Reader::from_path(&trace).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "episode", "step", "time", "l2_human", "l2_robot", "modality", "peak", "predicted_goal",
            "obstacle_distance", "collision", "score_0", "score_1", "score_2"
        ]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    for e in &report.episodes {
        let ep: Vec<_> = rows.iter().filter(|r| r[0] == e.index.to_string()).collect();
        assert_eq!(ep.len(), e.steps);
        for (r, l2) in ep.iter().zip(&e.l2_human) {
            assert_eq!(r[3].parse::<f64>().unwrap(), *l2);
            let scores: f64 = (10..13).map(|i| r[i].parse::<f64>().unwrap()).sum();
            assert!((scores - 1.0).abs() < 1e-9);
        }
    }
}
