use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const DATA: &str = "synthetic:30x40:rank2:seed1";

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_recbench"))
            .current_dir(self.dir.path())
            .env("RECBENCH_CACHE", self.path("cache"))
            .env_remove("RUST_LOG")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    }

    fn code(&self, args: &[&str]) -> i32 {
        self.run(args).status.code().unwrap()
    }

    fn train(&self, store: &str, model: &str, loss: &str, extra: &[&str]) -> PathBuf {
        let mut args = vec![
            "train", "--dataset", DATA, "--model", model, "--loss", loss, "--dim", "8", "--epochs", "2", "--out", store,
        ];
        args.extend_from_slice(extra);
        let out = self.ok(&args);
        let line = out.lines().find(|l| l.starts_with("manifest\t")).unwrap();
        self.path(line.split('\t').nth(1).unwrap())
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn metric(m: &Value, name: &str, k: u64) -> f64 {
    m["record"]["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["metric"] == name && e["k"] == k)
        .unwrap()["value"]
        .as_f64()
        .unwrap()
}

/// Overwrites the stored NDCG@20 of a manifest.
fn seed_ndcg(p: &Path, value: f64) {
    let mut m = read_json(p);
    for e in m["record"]["metrics"].as_array_mut().unwrap() {
        if e["metric"] == "ndcg" && e["k"] == 20 {
            e["value"] = value.into();
        }
    }
    fs::write(p, serde_json::to_string_pretty(&m).unwrap()).unwrap();
}

fn gains(json: &Path) -> Vec<(String, f64, String)> {
    read_json(json)["columns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["model"].as_str().unwrap().to_string(),
                c["grmf_x"].as_f64().unwrap() * 100.0,
                c["grmf_x_percent"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn usage_errors_exit_2() {
    let e = Env::new();
    assert_eq!(e.code(&[]), 2);
    assert_eq!(e.code(&["dataset", "stats", "netflix"]), 2);
    assert_eq!(e.code(&["train", "--dataset", DATA, "--model", "mf", "--loss", "bpr", "--layers", "2"]), 2);
    assert_eq!(e.code(&["train", "--dataset", DATA, "--model", "ultragcn", "--loss", "bpr"]), 2);
    assert_eq!(e.code(&["train", "--dataset", DATA, "--model", "gru4rec", "--loss", "bpr"]), 2);
    assert_eq!(e.code(&["train", "--dataset", DATA, "--model", "mf", "--loss", "bpr", "--dim", "0"]), 2);
    assert_eq!(e.code(&["bench", "--plan", "missing.toml", "--store", "s"]), 2);
    assert_eq!(e.code(&["--version"]), 0);
}

#[test]
fn runtime_errors_exit_1() {
    let e = Env::new();
    assert_eq!(e.code(&["report", "--store", "nowhere", "--dataset", DATA]), 1);
    let src = e.path("src");
    fs::create_dir_all(&src).unwrap();
    let url = src.display().to_string();
    assert_eq!(e.code(&["--base-url", &url, "dataset", "fetch", "gowalla"]), 1);
}

#[test]
fn fetch_twice_reports_cache() {
    let e = Env::new();
    let src = e.path("src/gowalla");
    fs::create_dir_all(&src).unwrap();
    fs::write(src.join("train.txt"), "0 0 1\n1 2 3\n2 1 4\n").unwrap();
    fs::write(src.join("test.txt"), "0 2\n1 0\n2 3\n").unwrap();
    let url = e.path("src").display().to_string();
    let first = e.ok(&["--base-url", &url, "dataset", "fetch", "gowalla"]);
    assert!(first.contains("prepared"), "{first}");
    let second = e.ok(&["--base-url", &url, "dataset", "fetch", "gowalla"]);
    assert!(second.contains("cached at"), "{second}");
    let stats = e.ok(&["dataset", "stats", "gowalla"]);
    assert!(stats.contains("| gowalla | 3 | 5 | 9 |"), "{stats}");
}

#[test]
fn synthetic_stats_use_separators() {
    let e = Env::new();
    let out = e.ok(&["dataset", "stats", "synthetic:1500x2000:rank2:seed0"]);
    assert!(out.contains("| 1,500 | 2,000 |"), "{out}");
}

#[test]
fn train_defaults_and_reproducibility() {
    let e = Env::new();
    let a = e.ok(&["train", "--dataset", DATA, "--model", "mf", "--loss", "bpr", "--epochs", "2", "--out", "a"]);
    let b = e.ok(&["train", "--dataset", DATA, "--model", "mf", "--loss", "bpr", "--epochs", "2", "--out", "b"]);
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with("manifest")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&a), strip(&b));

    let path = |s: &str| e.path(s.lines().last().unwrap().split('\t').nth(1).unwrap());
    let (ma, mb) = (read_json(&path(&a)), read_json(&path(&b)));
    let ctx = &ma["record"]["ctx"];
    assert_eq!(ctx["loss_kind"], "bpr");
    assert_eq!(ctx["num_negatives"], 1);
    assert_eq!(ctx["embedding_dim"], 64);
    assert_eq!(ma["run_key"], mb["run_key"]);
    assert_eq!(ma["representative"], true);
    let ckpt = |m: &Value, root: &str| fs::read(e.path(root).join(m["checkpoint"].as_str().unwrap())).unwrap();
    assert_eq!(ckpt(&ma, "a"), ckpt(&mb, "b"));
    let trace = fs::read_to_string(e.path("a").join(ma["loss_trace"].as_str().unwrap())).unwrap();
    assert_eq!(trace.lines().count(), 3);
    assert!(trace.starts_with("epoch,mean_loss,wall_seconds"));
}

#[test]
fn lightgcn_layers_are_recorded() {
    let e = Env::new();
    let p = e.train("s", "lightgcn", "bpr", &["--layers", "2"]);
    let m = read_json(&p);
    assert_eq!(m["train_config"]["lightgcn_layers"], 2);
    assert_eq!(m["record"]["hyper_point"]["lightgcn_layers"], 2.0);
}

#[test]
fn eval_reproduces_stored_metrics() {
    let e = Env::new();
    for (model, loss) in [("lightgcn", "bpr"), ("ultragcn", "bce")] {
        let p = e.train(model, model, loss, &["--precision", "f64"]);
        let m = read_json(&p);
        let mp = p.display().to_string();
        let rec: Value = serde_json::from_str(&e.ok(&["eval", "--manifest", &mp, "--batch-size", "7"])).unwrap();
        for name in ["ndcg", "recall", "precision"] {
            let stored = metric(&m, name, 20);
            let again = metric(&serde_json::json!({ "record": rec.clone() }), name, 20);
            assert!((stored - again).abs() < 1e-12, "{model} {name}: {stored} vs {again}");
        }
        assert_eq!(rec["ctx_fingerprint"], m["record"]["ctx_fingerprint"]);
        assert_eq!(e.code(&["eval", "--manifest", &mp, "--no-mask"]), 0);
    }
}

const PLAN: &str = r#"
dataset = "synthetic:30x40:rank2:seed1"

[context]
loss = "bpr"
dim = 8
k = [10, 20]

[train]
epochs = 3
learning_rate = 0.01
batch_size = 64
patience = 2

[models.mf]
l2_coefficient = [1e-5, 1e-4, 1e-3, 1e-2]

[models.lightgcn]
lightgcn_layers = 1
"#;

#[test]
fn bench_grid_representatives_and_resume() {
    let e = Env::new();
    fs::write(e.path("plan.toml"), PLAN).unwrap();
    let out = e.ok(&["bench", "--plan", "plan.toml", "--store", "store"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("done")).count(), 5, "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("representative")).count(), 2);

    let manifests: Vec<Value> = fs::read_dir(e.path("store"))
        .unwrap()
        .map(|d| d.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| read_json(&p))
        .collect();
    assert_eq!(manifests.len(), 5);
    let reps = |kind: &str| {
        manifests
            .iter()
            .filter(|m| m["model_kind"] == kind && m["representative"] == true)
            .count()
    };
    assert_eq!(reps("mf"), 1);
    assert_eq!(reps("lightgcn"), 1);
    let fps: std::collections::BTreeSet<String> =
        manifests.iter().map(|m| m["record"]["ctx_fingerprint"].to_string()).collect();
    assert_eq!(fps.len(), 1);
    // the representative MF run has the best validation score among the grid
    let best = manifests
        .iter()
        .filter(|m| m["model_kind"] == "mf")
        .map(|m| m["validation"]["ndcg"].as_f64().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let rep = manifests
        .iter()
        .find(|m| m["model_kind"] == "mf" && m["representative"] == true)
        .unwrap();
    assert_eq!(rep["validation"]["ndcg"].as_f64().unwrap(), best);

    let again = e.ok(&["bench", "--plan", "plan.toml", "--store", "store"]);
    assert_eq!(again.lines().filter(|l| l.starts_with("skip")).count(), 5, "{again}");
    assert_eq!(again.lines().filter(|l| l.starts_with("done")).count(), 0);

    let report = e.ok(&["report", "--store", "store", "--dataset", DATA, "--k", "10"]);
    assert!(report.contains("| Metric | MF | LightGCN |"), "{report}");
    assert!(report.contains("| GRMF-NDCG@10 (%) | 0.00% |"), "{report}");
}

#[test]
fn context_keys_in_model_sections_are_usage_errors() {
    let e = Env::new();
    fs::write(e.path("plan.toml"), PLAN.replace("lightgcn_layers = 1", "dim = 16")).unwrap();
    let o = e.run(&["bench", "--plan", "plan.toml", "--store", "store"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("one context"));
    assert!(!e.path("store").exists() || fs::read_dir(e.path("store")).unwrap().count() == 0);
}

#[test]
fn report_gains_from_seeded_scores() {
    let e = Env::new();
    let mf_bpr = e.train("s", "mf", "bpr", &[]);
    let lg_bpr = e.train("s", "lightgcn", "bpr", &[]);
    seed_ndcg(&mf_bpr, 0.0461);
    seed_ndcg(&lg_bpr, 0.0524);
    let mf_bce = e.train("s", "mf", "bce", &[]);
    let ug_bce = e.train("s", "ultragcn", "bce", &[]);
    let lg_bce = e.train("s", "lightgcn", "bce", &[]);
    seed_ndcg(&mf_bce, 0.0420);
    seed_ndcg(&ug_bce, 0.0442);
    seed_ndcg(&lg_bce, 0.0458);

    // two losses in one store are two contexts
    let o = e.run(&["report", "--store", "s", "--dataset", DATA]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("context violation"));

    let md = e.ok(&["report", "--store", "s", "--dataset", DATA, "--loss", "bpr", "--json", "bpr.json"]);
    let g = gains(&e.path("bpr.json"));
    assert_eq!(g.iter().map(|c| c.0.as_str()).collect::<Vec<_>>(), ["MF", "LightGCN"]);
    assert_eq!(g[0].1, 0.0);
    assert_eq!(g[0].2, "0.00%");
    assert!((g[1].1 - 13.66).abs() <= 0.01, "{}", g[1].1);
    assert!(md.contains("| NDCG@20 | 0.0461 | 0.0524 |"), "{md}");
    assert!(md.contains("| GRMF-NDCG@20 (%) | 0.00% | 13.67% |"), "{md}");

    e.ok(&["report", "--store", "s", "--dataset", DATA, "--loss", "bce", "--json", "bce.json"]);
    let g = gains(&e.path("bce.json"));
    assert_eq!(g.iter().map(|c| c.0.as_str()).collect::<Vec<_>>(), ["MF", "UltraGCN", "LightGCN"]);
    assert_eq!(g[0].1, 0.0);
    assert!((g[1].1 - 5.23).abs() <= 0.01, "{}", g[1].1);
    assert!((g[2].1 - 9.05).abs() <= 0.01, "{}", g[2].1);

    // repeat runs render byte-identical tables
    let again = e.ok(&["report", "--store", "s", "--dataset", DATA, "--loss", "bpr"]);
    assert_eq!(md, again);
    e.ok(&["report", "--store", "s", "--dataset", DATA, "--loss", "bpr", "--out", "t1.md"]);
    e.ok(&["report", "--store", "s", "--dataset", DATA, "--loss", "bpr", "--out", "t2.md"]);
    assert_eq!(fs::read(e.path("t1.md")).unwrap(), fs::read(e.path("t2.md")).unwrap());

    // fingerprint selection is equivalent to loss selection here
    let fp = read_json(&mf_bce)["record"]["ctx_fingerprint"].as_str().unwrap().to_string();
    e.ok(&["report", "--store", "s", "--dataset", DATA, "--fingerprint", &fp, "--json", "fp.json"]);
    assert_eq!(fs::read(e.path("fp.json")).unwrap(), fs::read(e.path("bce.json")).unwrap());
}

#[test]
fn report_without_baseline_fails() {
    let e = Env::new();
    e.train("s", "lightgcn", "bpr", &[]);
    let o = e.run(&["report", "--store", "s", "--dataset", DATA]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing baseline"));
}

#[test]
fn mismatched_negatives_are_a_context_violation() {
    let e = Env::new();
    e.train("s", "mf", "bpr", &[]);
    e.train("s", "lightgcn", "bpr", &["--negatives", "2"]);
    let o = e.run(&["report", "--store", "s", "--dataset", DATA, "--loss", "bpr"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("context violation"));
}
