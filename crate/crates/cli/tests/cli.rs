use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bias_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bias-lab"))
        .args(args)
        .env_remove("BIAS_LAB_OUT_DIR")
        .output()
        .expect("spawn bias-lab")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

const SMALL: &str = "k = 3\nepochs = 2\nbatches_per_epoch = 4\nbatch_size = 32\n\
meta_episodes = 15\nenco_stages = 4\nenco_fit_batches = 3\nenco_graph_batches = 3\n";

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn verify_passes_and_reports_dpi() {
    let out = bias_lab(&["verify", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("DPI violations: 0"), "{text}");
    assert!(!text.contains("FAILED"), "{text}");
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["--bogus"],
        vec![],
        vec!["train", "--mode", "sideways"],
        vec!["train", "--lambda", "0.5,x"],
        vec!["train", "--lambda", "1.5", "--runs", "1"],
        vec!["bias-h", "--k", "1"],
        vec!["bias-s", "--epsilon", "0.5,2"],
        vec!["baseline-meta", "--model", "cm"],
        vec!["train", "--model", "enco", "--runs", "1"],
        vec!["train", "--jobs", "0"],
        vec!["train", "--config", "/nonexistent/bias-lab.toml"],
    ] {
        let out = bias_lab(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn help_and_version_exit_zero() {
    for args in [vec!["--help"], vec!["--version"], vec!["train", "--help"]] {
        assert_eq!(bias_lab(&args).status.code(), Some(0), "{args:?}");
    }
    let help = stdout(&bias_lab(&["train", "--help"]));
    for flag in [
        "--seed",
        "--out-dir",
        "--k",
        "--epsilon",
        "--lambda",
        "--runs",
        "--epochs",
        "--batches-per-intervention",
        "--warmup",
        "--mode",
        "--jobs",
        "--model",
        "--config",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
}

#[test]
fn bad_config_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "epochs = 2\nlearning_rate = 0.1\n").unwrap();
    let out = bias_lab(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_is_independent_of_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let commands: [&[&str]; 6] = [
        &["bias-h", "--runs", "50", "--epsilon", "0.1,1,10"],
        &["bias-s", "--runs", "6", "--lambda", "0,0.5,1"],
        &["train", "--model", "mm", "--runs", "3", "--lambda", "0,1"],
        &["train", "--model", "cm", "--mode", "observational", "--runs", "3", "--epsilon", "0.1,10"],
        &["baseline-meta", "--runs", "3", "--lambda", "0,1"],
        &["baseline-enco", "--runs", "3", "--lambda", "0,0.5"],
    ];
    for (i, cmd) in commands.iter().enumerate() {
        let mut outputs = Vec::new();
        for jobs in ["1", "3"] {
            let dir = tmp.path().join(format!("c{i}_j{jobs}"));
            let mut args = cmd.to_vec();
            args.extend(["--config", &config, "--seed", "11", "--jobs", jobs, "--out-dir", dir.to_str().unwrap()]);
            let out = bias_lab(&args);
            assert_eq!(out.status.code(), Some(0), "{cmd:?}: {}", String::from_utf8_lossy(&out.stderr));
            outputs.push(read_dir_sorted(&dir));
        }
        assert!(!outputs[0].is_empty());
        assert_eq!(outputs[0], outputs[1], "{cmd:?}");
    }
}

#[test]
fn train_writes_expected_files() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let dir = tmp.path().join("out");
    let out = bias_lab(&[
        "train",
        "--config",
        &config,
        "--runs",
        "4",
        "--lambda",
        "0",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let runs = fs::read_to_string(dir.join("runs.csv")).unwrap();
    let mut lines = runs.lines();
    assert_eq!(lines.next(), Some("run_id,model,epsilon,lambda,mode,seed,final_c1"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.contains(",mm,1,0,interventional,")));
    let traj = fs::read_to_string(dir.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 4 * 2);
    let summary = fs::read_to_string(dir.join("runs_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn out_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_bias-lab"))
        .args(["bias-h", "--runs", "10", "--epsilon", "1"])
        .env("BIAS_LAB_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("bias_h.csv").exists());

    let flag_dir = tmp.path().join("from_flag");
    let out = Command::new(env!("CARGO_BIN_EXE_bias-lab"))
        .args(["bias-h", "--runs", "10", "--epsilon", "1", "--out-dir"])
        .arg(&flag_dir)
        .env("BIAS_LAB_OUT_DIR", tmp.path().join("unused"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(flag_dir.join("bias_h.csv").exists());
    assert!(!tmp.path().join("unused").exists());
}

#[test]
fn seeds_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for seed in ["1", "2"] {
        let dir = tmp.path().join(seed);
        let out = bias_lab(&["bias-h", "--runs", "20", "--epsilon", "1", "--seed", seed, "--out-dir", dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        bodies.push(fs::read(dir.join("bias_h.csv")).unwrap());
    }
    assert_ne!(bodies[0], bodies[1]);
}
