use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[domains]
source_n = 300
target_n = 200

[train]
iterations = 60
eval_every = 30
seeds = [1, 2]
"#;

fn iada(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iada"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn iada")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn gen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    for out in ["a", "b"] {
        let o = iada(tmp.path(), &["--config", &cfg, "--out", out, "gen"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["source.csv", "target.csv", "manifest.toml"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
    let o = iada(
        tmp.path(),
        &[
            "--config",
            &cfg,
            "--out",
            "c",
            "--seed-override",
            "9",
            "gen",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_ne!(
        fs::read(tmp.path().join("a/source.csv")).unwrap(),
        fs::read(tmp.path().join("c/source.csv")).unwrap()
    );
}

#[test]
fn unwritable_output_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("blocker"), "file").unwrap();
    let o = iada(tmp.path(), &["--out", "blocker/sub", "gen"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("blocker"), "{}", stderr(&o));
}

#[test]
fn bad_config_and_preset_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "[train]\nlearning_rat = 0.1\n");
    assert_eq!(code(&iada(tmp.path(), &["--config", &cfg, "gen"])), 2);
    assert_eq!(code(&iada(tmp.path(), &["--preset", "nope", "gen"])), 2);
    assert_eq!(code(&iada(tmp.path(), &["frobnicate"])), 2);
}

#[test]
fn train_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = iada(tmp.path(), &["--config", &cfg, "--out", "data", "gen"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = iada(
        tmp.path(),
        &["--config", &cfg, "--out", "run", "train", "--data", "data"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = tmp.path().join("run");
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    assert!(
        summary.lines().any(|l| l.starts_with("mean,target")),
        "{summary}"
    );
    for seed in [1, 2] {
        assert!(run
            .join(format!("checkpoint/seed-{seed}/params.bin"))
            .exists());
    }
    assert!(
        fs::read_to_string(run.join("metrics.csv"))
            .unwrap()
            .lines()
            .count()
            > 1
    );

    let o = iada(tmp.path(), &["report", "--run", "run"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[target]") && text.contains("auc"), "{text}");

    assert_eq!(code(&iada(tmp.path(), &["report", "--run", "missing"])), 2);
}

#[test]
fn mismatched_data_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    assert_eq!(
        code(&iada(
            tmp.path(),
            &["--config", &cfg, "--out", "data", "gen"]
        )),
        0
    );
    let wide = small_config(tmp.path(), "[domains]\nd = 7\n");
    let o = iada(
        tmp.path(),
        &["--config", &wide, "--out", "run", "train", "--data", "data"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn divergence_exits_with_runtime_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let path = tmp.path().join("small.toml");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("[train]\n", "[train]\nlearning_rate = 1e12\n");
    fs::write(&path, text).unwrap();
    let o = iada(tmp.path(), &["--config", &cfg, "--out", "run", "train"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let o = iada(
        tmp.path(),
        &[
            "--config",
            &cfg,
            "--out",
            "s",
            "sweep",
            "--axis",
            "lambda_adv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("s/sweep_lambda_adv.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");

    let o = iada(
        tmp.path(),
        &[
            "--config",
            &cfg,
            "sweep",
            "--axis",
            "lambda_adv",
            "--grid",
            "",
        ],
    );
    assert_eq!(code(&o), 2);
    let o = iada(tmp.path(), &["--config", &cfg, "sweep", "--axis", "gamma"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn theory_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(
        tmp.path(),
        "[theory]\nseeds = 4\niterations = 2000\nlog_every = 100\n",
    );
    let o = iada(
        tmp.path(),
        &["--config", &cfg, "--out", "t", "theory", "convergence"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(tmp.path().join("t/theory_convergence.txt")).unwrap();
    assert!(report.lines().all(|l| l.starts_with("PASS")), "{report}");
    assert!(tmp.path().join("t/convergence_imbalanced_d5.csv").exists());

    let o = iada(
        tmp.path(),
        &["--config", &cfg, "--out", "t", "theory", "alloc"],
    );
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("t/alloc.csv").exists());

    let o = iada(tmp.path(), &["--out", "t", "theory", "nonsense"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("convergence"), "{}", stderr(&o));
}
