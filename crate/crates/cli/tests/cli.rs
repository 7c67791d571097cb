use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalista_cli::{main_with_args, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

const TINY: &str = r#"
seeds = [0]
[ensemble]
m = 10
n = 20
s = 2.0
test_size = 300
[model]
iterations = 4
hidden = 4
[training]
epochs = 2
samples_per_epoch = 200
batch_size = 50
[diagnose]
pairs = [[0, 0], [2, 3]]
correlation_samples = 200
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn nalista(cmd: &[&str], config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["nalista".to_string()];
    args.extend(cmd.iter().map(|s| s.to_string()));
    args.extend(["--config".into(), config.display().to_string()]);
    args.extend(["--out".into(), out.display().to_string()]);
    args.extend(extra.iter().map(|s| s.to_string()));
    main_with_args(args)
}

fn pipeline(config: &Path, out: &Path, extra: &[&str]) {
    for cmd in [&["gen-data"][..], &["compute-dict"], &["train"], &["eval"], &["diagnose"]] {
        assert_eq!(nalista(cmd, config, out, extra), EXIT_OK, "{cmd:?}");
    }
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, acc);
            } else {
                acc.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

/// Data rows of a CSV written by the CLI (hash comment line skipped).
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let (first, body) = text.split_once('\n').unwrap();
    assert!(first.starts_with("# config_hash="), "{}", path.display());
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn full_pipeline_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let out = dir.path().join("out");
    pipeline(&cfg, &out, &[]);
    let first = snapshot(&out);
    pipeline(&cfg, &out, &["--force"]);
    assert_eq!(first, snapshot(&out));
    for name in ["eval/nmse.csv", "diag/params.csv", "curves/alista-seed-0.csv"] {
        assert!(first.contains_key(Path::new(name)), "{name}");
    }
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let out = dir.path().join("out");
    assert_eq!(nalista(&["gen-data"], &cfg, &out, &[]), EXIT_OK);
    let before = std::fs::read(out.join("data/seed-0.dataset")).unwrap();
    assert_eq!(nalista(&["gen-data"], &cfg, &out, &[]), EXIT_USAGE);
    assert_eq!(nalista(&["gen-data"], &cfg, &out, &["--force"]), EXIT_OK);
    assert_eq!(before, std::fs::read(out.join("data/seed-0.dataset")).unwrap());
}

#[test]
fn config_errors_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_s = write_config(dir.path(), "s.toml", "[ensemble]\ns = 500.0\n");
    assert_eq!(nalista(&["gen-data"], &bad_s, &out, &[]), EXIT_USAGE);
    let unknown = write_config(dir.path(), "u.toml", "[model]\nlayers = 3\n");
    assert_eq!(nalista(&["gen-data"], &unknown, &out, &[]), EXIT_USAGE);
    assert_eq!(main_with_args(["nalista", "frobnicate"]), EXIT_USAGE);
    assert_eq!(main_with_args(["nalista", "train", "--profile", "huge"]), EXIT_USAGE);
    assert!(!out.exists());
}

#[test]
fn missing_artifacts_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let out = dir.path().join("out");
    assert_eq!(nalista(&["compute-dict"], &cfg, &out, &[]), EXIT_USAGE);
    assert_eq!(nalista(&["gen-data"], &cfg, &out, &[]), EXIT_OK);
    assert_eq!(nalista(&["train"], &cfg, &out, &[]), EXIT_USAGE);
    assert_eq!(nalista(&["compute-dict"], &cfg, &out, &[]), EXIT_OK);
    assert_eq!(nalista(&["eval"], &cfg, &out, &[]), EXIT_USAGE);
}

#[test]
fn zero_step_model_scores_zero_db_and_eval_leaves_checkpoints_alone() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TINY}\n");
    let text = text
        .replace("[model]\n", "[model]\nkinds = [\"alista\"]\ninit_gamma = 0.0\n")
        .replace("epochs = 2", "epochs = 0");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = dir.path().join("out");
    for cmd in ["gen-data", "compute-dict", "train"] {
        assert_eq!(nalista(&[cmd], &cfg, &out, &[]), EXIT_OK);
    }
    let ckpt = std::fs::read(out.join("models/alista-seed-0.ckpt")).unwrap();
    assert_eq!(nalista(&["eval"], &cfg, &out, &[]), EXIT_OK);
    assert_eq!(ckpt, std::fs::read(out.join("models/alista-seed-0.ckpt")).unwrap());
    let (_, rows) = read_csv(&out.join("eval/nmse.csv"));
    let alista = rows.iter().find(|r| r[0] == "alista").unwrap();
    let nmse: f64 = alista[3].parse().unwrap();
    assert!(nmse.abs() < 1e-12, "{nmse}");
}

#[test]
fn untrained_model_diagnostics_are_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &TINY.replace("epochs = 2", "epochs = 0"));
    let out = dir.path().join("out");
    pipeline(&cfg, &out, &[]);
    for name in [
        "correlation.csv",
        "correlation_summary.csv",
        "params.csv",
        "assumption_ratio.csv",
        "proxy_pairs.csv",
        "proxy_summary.csv",
    ] {
        let (header, rows) = read_csv(&out.join("diag").join(name));
        assert!(!rows.is_empty(), "{name}");
        assert!(rows.iter().all(|r| r.len() == header.len()), "{name}");
    }
    let (_, params) = read_csv(&out.join("diag/params.csv"));
    assert_eq!(params.len(), 2 * 4);
}

#[test]
fn ablation_emits_three_input_sets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let out = dir.path().join("out");
    for cmd in [&["gen-data"][..], &["compute-dict"], &["train", "--ablation"], &["eval", "--ablation"]] {
        assert_eq!(nalista(cmd, &cfg, &out, &[]), EXIT_OK, "{cmd:?}");
    }
    let (_, rows) = read_csv(&out.join("eval/ablation.csv"));
    let models: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(models, ["na_alista-r", "na_alista-u", "na_alista-both"]);
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap().is_finite()));
}

#[test]
fn diagnose_rejects_checkpoint_from_other_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", TINY);
    let out = dir.path().join("out");
    pipeline(&cfg, &out, &[]);
    let other = write_config(dir.path(), "o.toml", &TINY.replace("batch_size = 50", "batch_size = 40"));
    assert_eq!(nalista(&["diagnose"], &other, &out, &["--force"]), EXIT_USAGE);
    assert_eq!(nalista(&["diagnose"], &other, &out, &[]), EXIT_USAGE);
}

#[test]
fn single_point_sweep_matches_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let plain = write_config(dir.path(), "p.toml", TINY);
    let direct = dir.path().join("direct");
    for cmd in ["gen-data", "compute-dict", "train", "eval"] {
        assert_eq!(nalista(&[cmd], &plain, &direct, &[]), EXIT_OK);
    }
    let swept = write_config(
        dir.path(),
        "s.toml",
        &format!("{TINY}\n[sweep]\naxis = \"k\"\nvalues = [4]\n"),
    );
    let out = dir.path().join("sweep");
    assert_eq!(nalista(&["sweep"], &swept, &out, &[]), EXIT_OK);
    let point = out.join("sweep/k-4");
    for f in ["eval/nmse.csv", "eval/nmse_per_iteration.csv", "models/na_alista-seed-0.ckpt"] {
        assert_eq!(std::fs::read(direct.join(f)).unwrap(), std::fs::read(point.join(f)).unwrap(), "{f}");
    }
    let (header, rows) = read_csv(&out.join("sweep/k.csv"));
    assert_eq!(header, ["axis", "value", "model", "seed", "nmse_db", "cost_ratio"]);
    let (_, direct_rows) = read_csv(&direct.join("eval/nmse.csv"));
    assert_eq!(rows.len(), direct_rows.len());
    for (s, d) in rows.iter().zip(&direct_rows) {
        assert_eq!((&s[2], &s[4]), (&d[0], &d[3]));
    }
}

#[test]
fn sweep_keeps_completed_points_and_lists_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        &format!("{TINY}\n[sweep]\naxis = \"n\"\nvalues = [20, 5]\n"),
    );
    let out = dir.path().join("out");
    assert_eq!(nalista(&["sweep"], &cfg, &out, &[]), EXIT_RUNTIME);
    let (_, rows) = read_csv(&out.join("sweep/n.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[1] == "20"));
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep/n.json")).unwrap()).unwrap();
    let failures = side["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["value"], 5);
}

#[test]
fn paper_profile_generates_full_size_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[ensemble]\ntest_size = 4\n");
    let out = dir.path().join("out");
    assert_eq!(nalista(&["gen-data"], &cfg, &out, &["--profile", "paper", "--seed", "5"]), EXIT_OK);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("data/seed-5.json")).unwrap()).unwrap();
    let d = &side["dataset"];
    assert_eq!((d["m"].as_u64(), d["n"].as_u64(), d["s"].as_f64()), (Some(250), Some(1000), Some(50.0)));
    assert_eq!(d["snr_db"].as_f64(), Some(40.0));
}
