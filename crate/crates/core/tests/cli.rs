use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn osbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osbf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn osbf")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SYNTH_CONFIG: &str = r#"
dataset = "synth"
out_dir = "out"

[[subjects]]
name = "s01"
[subjects.synth]
n_trials = 8
n_iterations = 4
n_flashes = 6
n_levels = 2
feature_dim = 8
target_shift = 2.0
noise_sd = 1.0
seed = 3

[[subjects]]
name = "s02"
[subjects.synth]
n_trials = 8
n_iterations = 4
n_flashes = 4
n_levels = 1
feature_dim = 8
target_shift = 1.0
noise_sd = 1.0
seed = 4

[scoreopt]
l = -5
u = 5
"#;

#[test]
fn runs_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SYNTH_CONFIG);
    let mut outputs = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("run{jobs}"));
        let o = osbf(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", jobs, "--seed", "11"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8(o.stdout).unwrap();
        assert!(stdout.starts_with(osbf::eval::SUMMARY_HEADER));
        outputs.push((out, stdout));
    }
    assert_eq!(outputs[0].1, outputs[1].1);
    for file in ["summary.csv", "s01/report.json", "s02/report.json", "s01/hyperplane.txt", "s02/score_optimization.json"] {
        let a = fs::read_to_string(outputs[0].0.join(file)).unwrap();
        let b = fs::read_to_string(outputs[1].0.join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
    // the manifest records where and how wide each run was, but hashes the same config
    let hash = |p: &Path| -> String {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap();
        v["config_sha256"].as_str().unwrap().to_owned()
    };
    assert_eq!(hash(&outputs[0].0), hash(&outputs[1].0));
}

#[test]
fn staged_commands_reuse_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SYNTH_CONFIG);
    let out = dir.path().join("staged");
    let out_s = out.to_str().unwrap();
    for cmd in ["train", "optimize-scores"] {
        let o = osbf(&[cmd, "--config", &cfg, "--out", out_s]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(out.join("s01/hyperplane.txt").exists());
    assert!(out.join("s01/score_optimization.json").exists());
    let o = osbf(&["evaluate", "--config", &cfg, "--out", out_s, "--mode", "earlystop", "--method", "osbf"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains(",osbf,earlystop,")));
}

#[test]
fn missing_dataset_file_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dataset = \"x\"\nout_dir = \"out\"\n[[subjects]]\nname = \"s01\"\ntrain = \"nowhere/train.txt\"\ntest = \"nowhere/test.txt\"\n",
    );
    let o = osbf(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nowhere/train.txt"), "{err}");
    assert!(dir.path().join("out/error.json").exists());
}

#[test]
fn bad_config_and_bad_arguments_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dataset = \"x\"\nunknown_key = 1\n");
    assert_eq!(osbf(&["run", "--config", &cfg]).status.code(), Some(1));
    assert_eq!(osbf(&["run", "--mode", "sometimes"]).status.code(), Some(1));
    assert_eq!(osbf(&["run"]).status.code(), Some(1));
}

#[test]
fn help_lists_every_subcommand() {
    let o = osbf(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for cmd in ["synth", "train", "optimize-scores", "evaluate", "run", "selftest"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn synth_writes_a_loadable_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let o = osbf(&["synth", "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let train = osbf::dataset::load_dataset(out.join("train.txt")).unwrap();
    let test = osbf::dataset::load_dataset(out.join("test.txt")).unwrap();
    assert_eq!(train.shape().n_flashes, test.shape().n_flashes);
}
