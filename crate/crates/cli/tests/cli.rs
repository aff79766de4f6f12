use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use kstep::trainer::TRAIN_LOG_HEADER;
use kstep_bench::pipeline::SUMMARY_HEADER;
use kstep_bench::sweep::BIAS_VARIANCE_HEADER;
use kstep_bench::ExperimentConfig;

const SMALL: &str = r#"
task = { kind = "markov_chain", order = 1, transition_seed = 3 }
vocab_size = 6
horizon = 6
window = 2
k_list = [1, 2, 4]
baselines = ["mean_baseline", "minvar_baseline"]
seeds = [0, 1]
output_dir = "unused"

[teacher]
arch = { kind = "mlp1", hidden_width = 8 }
corpus_size = 200
epochs = 2
lr = 0.5
batch_size = 16

[student]
arch = { kind = "linear" }

[predistill]
epochs = 1
lr = 0.5
batch_size = 8

[rl]
lr = 0.1
batch_size = 4
iterations = 12
grad_accum = 1
optimizer = "sgd"
eval_every = 5
clip = [-100.0, 100.0]

[data]
train_inputs = 16
validation_inputs = 8
test_inputs = 8

[sweep]
samples_per_input = 8
n_inputs = 10
kl_bucket_epochs = [0, 1]
iid = false
iid_samples = 20000
iid_sigma2_sa = 1.0
iid_sigma2_s = 0.5
"#;

fn kstep(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kstep")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL).unwrap();
    path
}

fn header_line(path: &Path) -> (String, usize) {
    let text = fs::read_to_string(path).unwrap();
    let first = text.lines().next().unwrap_or_default().to_string();
    let repeats = text.lines().filter(|l| *l == first).count();
    (first, repeats)
}

#[test]
fn small_config_parses_and_validates() {
    ExperimentConfig::parse(SMALL).unwrap().validate().unwrap();
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, SMALL.replace("horizon = 6", "horizon = 6\nhorizn = 7")).unwrap();
    let out = kstep(&["--config", path.to_str().unwrap(), "gen-corpus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizn"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = kstep(&["--config", "/nonexistent/cfg.toml", "gen-corpus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_values_are_rejected() {
    for (from, to) in [
        ("horizon = 6", "horizon = 0"),
        ("k_list = [1, 2, 4]", "k_list = [0]"),
        ("vocab_size = 6", "vocab_size = 2"),
        ("lr = 0.1", "lr = -1.0"),
    ] {
        let cfg = ExperimentConfig::parse(&SMALL.replace(from, to));
        assert!(cfg.and_then(|c| c.validate()).is_err(), "{to} accepted");
    }
}

#[test]
fn gen_corpus_writes_requested_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let file = dir.path().join("c.txt");
    let out = kstep(&[
        "--config",
        cfg.to_str().unwrap(),
        "gen-corpus",
        "--n",
        "1",
        "--file",
        file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&file).unwrap().lines().count(), 1);
}

#[test]
fn copy_task_with_length_three_emits_seven_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.toml");
    let text = SMALL.replace(
        r#"task = { kind = "markov_chain", order = 1, transition_seed = 3 }"#,
        r#"task = { kind = "copy", length = 3 }"#,
    );
    fs::write(&path, text).unwrap();
    let file = dir.path().join("c.txt");
    let out = kstep(&[
        "--config",
        path.to_str().unwrap(),
        "gen-corpus",
        "--n",
        "5",
        "--file",
        file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for line in fs::read_to_string(&file).unwrap().lines() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(toks.len(), 8, "{line}");
        assert_eq!(toks[0..3], toks[4..7]);
    }
}

#[test]
fn train_rejects_unknown_estimator() {
    let out = kstep(&[
        "train",
        "--teacher",
        "t.json",
        "--student",
        "s.json",
        "--estimator",
        "k0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn emit_plots_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = kstep(&[
        "--out",
        dir.path().to_str().unwrap(),
        "emit-plots",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    let mut header: Vec<&str> = SUMMARY_HEADER.to_vec();
    header[3] = "best_val";
    fs::write(&bad, header.join(",") + "\n").unwrap();
    let out = kstep(&[
        "--out",
        dir.path().to_str().unwrap(),
        "emit-plots",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("best_val"));
}

#[test]
fn pipeline_layout_headers_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let res = kstep(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "sweep-k",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let runs: Vec<_> = fs::read_dir(out.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 2 * 5);
    for run in &runs {
        let mut names: Vec<_> = fs::read_dir(run).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(
            names,
            ["predistilled.json", "student.json", "summary.json", "trainlog.csv"]
        );
        let (first, n) = header_line(&run.join("trainlog.csv"));
        assert_eq!((first, n), (TRAIN_LOG_HEADER.join(","), 1));
    }
    for seed in [0, 1] {
        assert!(out.join(format!("seed-{seed}/teacher.json")).is_file());
        assert_eq!(
            fs::read_to_string(out.join(format!("seed-{seed}/corpus.txt")))
                .unwrap()
                .lines()
                .count(),
            200
        );
    }
    let summary = out.join("summary.csv");
    assert_eq!(header_line(&summary), (SUMMARY_HEADER.join(","), 1));
    assert_eq!(fs::read_to_string(&summary).unwrap().lines().count(), 1 + 10);

    let plots = dir.path().join("plots");
    let trainlog = runs[0].join("trainlog.csv");
    let res = kstep(&[
        "--out",
        plots.to_str().unwrap(),
        "emit-plots",
        summary.to_str().unwrap(),
        trainlog.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(plots.join("manifest.json").is_file());
    assert!(plots.join("learning_curves.dat").is_file());
    assert!(plots.join("method_summary.dat").is_file());
}

#[test]
fn sweep_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let res = kstep(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "sweep-bias-variance",
        ]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        outputs.push(out);
    }
    for file in ["bias_variance.csv", "diagnostics.csv"] {
        let a = fs::read(outputs[0].join(file)).unwrap();
        assert_eq!(a, fs::read(outputs[1].join(file)).unwrap(), "{file}");
    }
    let bv = outputs[0].join("bias_variance.csv");
    assert_eq!(header_line(&bv), (BIAS_VARIANCE_HEADER.join(","), 1));
    // two seeds, two buckets, one row per K
    assert_eq!(fs::read_to_string(&bv).unwrap().lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn iid_sweep_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("iid");
    let res = kstep(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "4",
        "sweep-bias-variance",
        "--iid",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("bias_variance.csv").is_file());
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let res = kstep(&["--out", dir.path().to_str().unwrap(), "oracle-check"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = dir.path().join("oracle_report.csv");
    let (first, n) = header_line(&report);
    assert_eq!(n, 1);
    assert!(first.starts_with("metric"));
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    let corpus = dir.path().join("corpus.txt");
    assert!(kstep(&["--config", c, "--out", out, "gen-corpus"]).status.success());
    let res = kstep(&[
        "--config",
        c,
        "--out",
        out,
        "fit-teacher",
        "--corpus",
        corpus.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let teacher = dir.path().join("teacher.json");
    let res = kstep(&[
        "--config",
        c,
        "--out",
        out,
        "predistill",
        "--teacher",
        teacher.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let student = dir.path().join("predistilled.json");
    let res = kstep(&[
        "--config",
        c,
        "--out",
        out,
        "train",
        "--teacher",
        teacher.to_str().unwrap(),
        "--student",
        student.to_str().unwrap(),
        "--estimator",
        "k2",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(dir.path().join("runs/k2-seed0/trainlog.csv").is_file());
}
