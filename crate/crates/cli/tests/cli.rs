//! End-to-end command tests driving the compiled binary: exit-code contract,
//! determinism of generated artifacts, and failure messages.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn relm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relm"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn tiny_config(out_dir: &Path) -> String {
    format!(
        r#"
seed = 7
output_dir = "{}"

[synth]
n_reports = 60

[lm]
embedding_dim = 8
hidden_dim = 8
epochs = 1

[finetune]
total_epochs = 2
freeze_epochs = 1

[baseline]
gd_epochs = 20
mlp_epochs = 5
"#,
        out_dir.display()
    )
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Runs synth + train-lm with the tiny config, returning the output dir.
fn trained_lm(tmp: &Path, seed_suffix: &str) -> PathBuf {
    let out_dir = tmp.join(format!("out{seed_suffix}"));
    let cfg = write_config(
        &tmp.join_cfg_dir(seed_suffix),
        &tiny_config(&out_dir),
    );
    run_ok(relm().args(["--config"]).arg(&cfg).arg("synth"));
    run_ok(
        relm()
            .args(["--config"])
            .arg(&cfg)
            .args(["train-lm", "--corpus"])
            .arg(out_dir.join("corpus.jsonl")),
    );
    out_dir
}

trait CfgDir {
    fn join_cfg_dir(&self, suffix: &str) -> PathBuf;
}

impl CfgDir for Path {
    fn join_cfg_dir(&self, suffix: &str) -> PathBuf {
        let dir = self.join(format!("cfg{suffix}"));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }
}

#[test]
fn synth_is_deterministic_and_reports_prevalence() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let cfg = write_config(&tmp.path().join_cfg_dir(dir.file_name().unwrap().to_str().unwrap()), &tiny_config(dir));
        let out = run_ok(relm().args(["--config"]).arg(&cfg).arg("synth"));
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        assert!(stdout.contains("prevalence"), "missing summary: {stdout}");
    }
    for file in ["corpus.jsonl", "labels.jsonl"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn synth_rejects_zero_reports() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "seed = 1\noutput_dir = \"{}\"\n[synth]\nn_reports = 0\n",
            tmp.path().join("out").display()
        ),
    );
    let (code, stderr) = exit_code(relm().args(["--config"]).arg(&cfg).arg("synth"));
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("n_reports"), "{stderr}");
}

#[test]
fn seed_is_mandatory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("output_dir = \"{}\"\n", tmp.path().join("out").display()),
    );
    let (code, stderr) = exit_code(relm().args(["--config"]).arg(&cfg).arg("synth"));
    assert_eq!(code, 1);
    assert!(stderr.contains("seed"), "{stderr}");
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "seed = 1\nnot_a_real_key = true\n");
    let (code, stderr) = exit_code(relm().args(["--config"]).arg(&cfg).arg("synth"));
    assert_eq!(code, 1);
    assert!(stderr.contains("not_a_real_key"), "{stderr}");
}

#[test]
fn missing_corpus_is_an_io_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config(&tmp.path().join("out")));
    let missing = tmp.path().join("nowhere.jsonl");
    let (code, stderr) = exit_code(
        relm()
            .args(["--config"])
            .arg(&cfg)
            .args(["train-lm", "--corpus"])
            .arg(&missing),
    );
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("nowhere.jsonl"), "{stderr}");
}

#[test]
fn full_pipeline_runs_and_encode_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let out_dir = trained_lm(tmp.path(), "");
    let cfg = tmp.path().join_cfg_dir("").join("cfg.toml");

    for enc in ["enc1.jsonl", "enc2.jsonl"] {
        run_ok(
            relm()
                .args(["--config"])
                .arg(&cfg)
                .args(["encode", "--model"])
                .arg(out_dir.join("lm.relm"))
                .args(["--vocab"])
                .arg(out_dir.join("vocabulary.json"))
                .args(["--corpus"])
                .arg(out_dir.join("corpus.jsonl"))
                .args(["--out"])
                .arg(out_dir.join(enc)),
        );
    }
    assert_eq!(
        std::fs::read(out_dir.join("enc1.jsonl")).unwrap(),
        std::fs::read(out_dir.join("enc2.jsonl")).unwrap(),
        "encodings differ across reruns of the same model"
    );

    run_ok(
        relm()
            .args(["--config"])
            .arg(&cfg)
            .args(["train-clf", "--encoder"])
            .arg(out_dir.join("lm.relm"))
            .args(["--vocab"])
            .arg(out_dir.join("vocabulary.json"))
            .args(["--train"])
            .arg(out_dir.join("labels.jsonl"))
            .args(["--test"])
            .arg(out_dir.join("labels.jsonl")),
    );
    for artifact in ["classifier.relm", "clf_metrics.csv", "eval_report.json", "predictions.jsonl", "test_roc.csv"] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }

    run_ok(
        relm()
            .args(["--config"])
            .arg(&cfg)
            .args(["baseline", "--train"])
            .arg(out_dir.join("labels.jsonl"))
            .args(["--test"])
            .arg(out_dir.join("labels.jsonl")),
    );
    let sweep = std::fs::read_to_string(out_dir.join("baselines.csv")).unwrap();
    assert!(sweep.starts_with("model,feature,micro_auc,micro_f1,error"));
    // four requested models, one row each, whether scored or errored
    assert_eq!(sweep.lines().count(), 5, "{sweep}");

    // effective config is written next to outputs for provenance
    for provenance in ["synth_config.toml", "train_lm_config.toml", "train_clf_config.toml", "baseline_config.toml"] {
        assert!(out_dir.join(provenance).exists(), "missing {provenance}");
    }
}

#[test]
fn encode_refuses_on_vocabulary_hash_mismatch() {
    let tmp = TempDir::new().unwrap();
    let out_a = trained_lm(tmp.path(), "_a");
    // a different corpus yields a different vocabulary, hence a new hash
    let out_b = tmp.path().join("out_b");
    let cfg_b = write_config(
        &tmp.path().join_cfg_dir("_b"),
        &tiny_config(&out_b).replace("seed = 7", "seed = 8"),
    );
    run_ok(relm().args(["--config"]).arg(&cfg_b).arg("synth"));
    run_ok(
        relm()
            .args(["--config"])
            .arg(&cfg_b)
            .args(["train-lm", "--corpus"])
            .arg(out_b.join("corpus.jsonl")),
    );

    let cfg_a = tmp.path().join_cfg_dir("_a").join("cfg.toml");
    let (code, stderr) = exit_code(
        relm()
            .args(["--config"])
            .arg(&cfg_a)
            .args(["encode", "--model"])
            .arg(out_a.join("lm.relm"))
            .args(["--vocab"])
            .arg(out_b.join("vocabulary.json"))
            .args(["--corpus"])
            .arg(out_a.join("corpus.jsonl"))
            .args(["--out"])
            .arg(out_a.join("enc.jsonl")),
    );
    assert_eq!(code, 1, "{stderr}");
    // the refusal prints both hashes
    let container_hash = hash_of(&out_a.join("vocabulary.json"));
    let current_hash = hash_of(&out_b.join("vocabulary.json"));
    assert!(stderr.contains(&container_hash), "{stderr}");
    assert!(stderr.contains(&current_hash), "{stderr}");
}

fn hash_of(vocab_path: &Path) -> String {
    let json = std::fs::read_to_string(vocab_path).unwrap();
    relm_core::corpus::Vocabulary::from_json(&json).unwrap().hash()
}

#[test]
fn encode_rejects_empty_text_naming_the_id() {
    let tmp = TempDir::new().unwrap();
    let out_dir = trained_lm(tmp.path(), "");
    let cfg = tmp.path().join_cfg_dir("").join("cfg.toml");
    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": \"blank-1\", \"text\": \"  \"}\n").unwrap();
    let (code, stderr) = exit_code(
        relm()
            .args(["--config"])
            .arg(&cfg)
            .args(["encode", "--model"])
            .arg(out_dir.join("lm.relm"))
            .args(["--vocab"])
            .arg(out_dir.join("vocabulary.json"))
            .args(["--corpus"])
            .arg(&bad)
            .args(["--out"])
            .arg(tmp.path().join("enc.jsonl")),
    );
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("blank-1"), "{stderr}");
}

#[test]
fn baseline_requires_at_least_one_model() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let body = tiny_config(&out_dir) + "models = []\n";
    // append to the [baseline] section: tiny_config ends inside [baseline]
    let cfg = write_config(tmp.path(), &body);
    let labeled = tmp.path().join("labeled.jsonl");
    std::fs::write(
        &labeled,
        "{\"id\": \"r1\", \"text\": \"a b\", \"labels\": {\"occlusion\": 1, \"hemorrhage\": 0, \"edema\": 0}}\n",
    )
    .unwrap();
    let (code, stderr) = exit_code(
        relm()
            .args(["--config"])
            .arg(&cfg)
            .args(["baseline", "--train"])
            .arg(&labeled)
            .args(["--test"])
            .arg(&labeled),
    );
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("at least one"), "{stderr}");
}

#[test]
fn project_validates_k_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let enc = tmp.path().join("enc.jsonl");
    let mut lines = String::new();
    for i in 0..20 {
        let v: Vec<f64> = (0..6).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0).collect();
        lines.push_str(&format!(
            "{{\"id\": \"r{i}\", \"vector\": {}}}\n",
            serde_json::to_string(&v).unwrap()
        ));
    }
    std::fs::write(&enc, &lines).unwrap();
    let cfg = write_config(tmp.path(), "seed = 3\n");

    let (code, stderr) = exit_code(
        relm()
            .args(["--config"])
            .arg(&cfg)
            .args(["project", "--source"])
            .arg(&enc)
            .args(["--out"])
            .arg(tmp.path().join("c.csv"))
            .args(["--k", "5"]),
    );
    assert_eq!(code, 1, "{stderr}");

    for out in ["c1.csv", "c2.csv"] {
        run_ok(
            relm()
                .args(["--config"])
                .arg(&cfg)
                .args(["project", "--source"])
                .arg(&enc)
                .args(["--out"])
                .arg(tmp.path().join(out))
                .args(["--k", "3"]),
        );
    }
    let c1 = std::fs::read_to_string(tmp.path().join("c1.csv")).unwrap();
    assert_eq!(c1, std::fs::read_to_string(tmp.path().join("c2.csv")).unwrap());
    assert!(c1.starts_with("id,x,y,z\n"), "{c1}");
    assert_eq!(c1.lines().nth(1).unwrap().split(',').count(), 4);
}
