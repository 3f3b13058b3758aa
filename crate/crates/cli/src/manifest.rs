//! Run manifests and the directory store that holds them.
//!
//! A store is a flat directory of `<run key>.json` manifests plus an
//! `artifacts/` directory with checkpoints and loss traces. Every write goes
//! through a temporary file and a rename, so concurrent writers never leave a
//! half-written manifest behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use recbench::{EvalContext, ModelKind, RunRecord, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const ARTIFACTS_DIR: &str = "artifacts";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            _ => Err(format!("unknown precision `{s}` (expected f32 or f64)")),
        }
    }
}

/// Everything that determines a run's outcome. Its hash names the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub model_kind: ModelKind,
    pub ctx: EvalContext,
    pub train_config: TrainConfig,
    pub precision: Precision,
    /// Fraction of training positives held out for validation; 0 disables it.
    pub holdout_fraction: f64,
    pub holdout_seed: u64,
    pub patience: Option<usize>,
}

impl RunSpec {
    pub fn run_key(&self) -> String {
        let json = serde_json::to_string(self).expect("run spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validates(&self) -> bool {
        self.holdout_fraction > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub holdout_fraction: f64,
    pub holdout_seed: u64,
    /// NDCG at the largest K on the held-out positives.
    pub ndcg: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_key: String,
    pub record: RunRecord,
    pub model_kind: ModelKind,
    pub train_config: TrainConfig,
    pub precision: Precision,
    pub toolkit_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub seed: u64,
    pub epochs_run: usize,
    pub patience: Option<usize>,
    pub validation: Option<Validation>,
    /// Relative to the store directory.
    pub loss_trace: Option<String>,
    pub checkpoint: Option<String>,
    #[serde(default)]
    pub representative: bool,
}

impl RunManifest {
    pub fn spec(&self) -> RunSpec {
        RunSpec {
            model_kind: self.model_kind,
            ctx: self.record.ctx.clone(),
            train_config: self.train_config.clone(),
            precision: self.precision,
            holdout_fraction: self.validation.as_ref().map_or(0.0, |v| v.holdout_fraction),
            holdout_seed: self.validation.as_ref().map_or(0, |v| v.holdout_seed),
            patience: self.patience,
        }
    }

    pub fn validation_ndcg(&self) -> Option<f64> {
        self.validation.as_ref().map(|v| v.ndcg)
    }
}

pub fn hyper_point(kind: ModelKind, cfg: &TrainConfig) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("learning_rate".into(), cfg.learning_rate);
    m.insert("l2_coefficient".into(), cfg.l2_coefficient);
    m.insert("batch_size".into(), cfg.batch_size as f64);
    m.insert("epochs".into(), cfg.epochs as f64);
    m.insert("seed".into(), cfg.seed as f64);
    match kind {
        ModelKind::LightGcn => {
            m.insert("lightgcn_layers".into(), cfg.lightgcn_layers as f64);
        }
        ModelKind::UltraGcn => {
            m.insert("ultragcn_gamma".into(), cfg.ultragcn_gamma);
        }
        ModelKind::Mf => {}
    }
    m
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> CliResult<Self> {
        let root = root.into();
        fs::create_dir_all(root.join(ARTIFACTS_DIR))?;
        Ok(Self { root })
    }

    /// Opens an existing store without creating anything.
    pub fn existing(root: impl Into<PathBuf>) -> CliResult<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(CliError::runtime(format!("run store {} does not exist", root.display())));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self, key: &str) -> PathBuf {
        self.root.join(format!("{key}.json"))
    }

    pub fn artifact_rel(&self, key: &str, ext: &str) -> String {
        format!("{ARTIFACTS_DIR}/{key}.{ext}")
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.manifest_path(key).is_file()
    }

    pub fn save(&self, m: &RunManifest) -> CliResult<PathBuf> {
        let path = self.manifest_path(&m.run_key);
        let mut json = serde_json::to_vec_pretty(m)?;
        json.push(b'\n');
        write_atomic(&path, &json)?;
        Ok(path)
    }

    pub fn load(&self, key: &str) -> CliResult<RunManifest> {
        load_manifest(&self.manifest_path(key))
    }

    /// All manifests, sorted by run key.
    pub fn list(&self) -> CliResult<Vec<RunManifest>> {
        let mut names: Vec<String> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.ends_with(".json") && !n.starts_with('.'))
            .collect();
        names.sort();
        names
            .iter()
            .map(|n| load_manifest(&self.root.join(n)))
            .collect()
    }
}

pub fn load_manifest(path: &Path) -> CliResult<RunManifest> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
    let m: RunManifest = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::runtime(format!("{}: malformed manifest: {e}", path.display())))?;
    if !m.record.fingerprint_is_consistent() {
        return Err(CliError::runtime(format!(
            "{}: stored fingerprint {} does not match its context ({})",
            path.display(),
            m.record.ctx_fingerprint,
            m.record.ctx.fingerprint()
        )));
    }
    Ok(m)
}
