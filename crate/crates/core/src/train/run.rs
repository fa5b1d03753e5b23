//! Run directories: a config snapshot, `metrics.csv`, and checkpoints.
//!
//! ```text
//! RUN/
//!   config.toml
//!   metrics.csv          step,split,accuracy,precision,recall,loss
//!   checkpoints/step_000500.json ...
//!   best.json            highest validation accuracy
//!   final.json           parameters after the last step
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::{preset, ArchName, Checkpoint, Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::features::FeatureSelection;
use crate::train::dataset::{Dataset, Split};
use crate::train::fit::{train_with, TrainConfig, TrainOutcome};
use crate::train::metrics::MetricsReport;

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const BEST_FILE: &str = "best.json";
pub const FINAL_FILE: &str = "final.json";
pub const METRICS_HEADER: &str = "step,split,accuracy,precision,recall,loss";

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: PathBuf,
    /// Preset used when `network` is absent.
    pub arch: ArchName,
    pub network: Option<NetworkSpec>,
    pub features: FeatureSelection,
    /// Cache features and adjacency beside each mesh.
    pub cache: bool,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: PathBuf::from("data"),
            arch: ArchName::D,
            network: None,
            features: FeatureSelection::default(),
            cache: true,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// The explicit network, or the preset sized for the feature selection.
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let spec = match &self.network {
            Some(spec) => {
                spec.validate()?;
                spec.clone()
            }
            None => preset(self.arch, self.features.width())?,
        };
        if spec.input_features != self.features.width() {
            return Err(Error::FeatureMismatch {
                expected: spec.input_features,
                found: self.features.width(),
            });
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.train.validate()?;
        self.network_spec().map(|_| ())
    }

    /// Loads one split of the configured data for `spec`.
    pub fn load_split(&self, split: Split, spec: &NetworkSpec) -> Result<Dataset> {
        let rings: Vec<usize> = spec.required_rings().into_iter().collect();
        Dataset::load(&self.data, split, self.features, &rings, self.cache)
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub split: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates the layout and writes the config snapshot and CSV header,
    /// replacing earlier metrics in the same directory.
    pub fn create(root: impl Into<PathBuf>, config: &RunConfig) -> Result<Self> {
        let run = RunDir { root: root.into() };
        let ckpt = run.root.join(CHECKPOINT_DIR);
        fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        let cfg = run.root.join(CONFIG_FILE);
        fs::write(&cfg, config.to_toml_string()?).map_err(|e| Error::io(&cfg, e))?;
        let metrics = run.metrics_path();
        fs::write(&metrics, format!("{METRICS_HEADER}\n")).map_err(|e| Error::io(&metrics, e))?;
        Ok(run)
    }

    /// Opens an existing run directory.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let run = RunDir { root: root.into() };
        let cfg = run.root.join(CONFIG_FILE);
        if !cfg.is_file() {
            return Err(Error::io(
                &cfg,
                std::io::Error::new(std::io::ErrorKind::NotFound, "not a run directory"),
            ));
        }
        Ok(run)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::load(self.root.join(CONFIG_FILE))
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join(METRICS_FILE)
    }

    pub fn checkpoint_path(&self, step: usize) -> PathBuf {
        self.root.join(CHECKPOINT_DIR).join(format!("step_{step:06}.json"))
    }

    pub fn best_path(&self) -> PathBuf {
        self.root.join(BEST_FILE)
    }

    pub fn final_path(&self) -> PathBuf {
        self.root.join(FINAL_FILE)
    }

    pub fn append_metrics(&self, split: &str, report: &MetricsReport) -> Result<()> {
        let path = self.metrics_path();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if file.metadata().map(|m| m.len() == 0).unwrap_or(false) {
            writeln!(file, "{METRICS_HEADER}").map_err(|e| Error::io(&path, e))?;
        }
        let loss = report.loss.map(|l| l.to_string()).unwrap_or_default();
        writeln!(
            file,
            "{},{},{},{},{},{}",
            report.step, split, report.accuracy, report.precision, report.recall, loss
        )
        .map_err(|e| Error::io(&path, e))
    }

    pub fn read_metrics(&self) -> Result<Vec<MetricsRow>> {
        let path = self.metrics_path();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |line: usize, what: &str| Error::Parse {
            line,
            message: format!("{}: {what}", path.display()),
        };
        let mut rows = Vec::new();
        for (k, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(k + 1, "expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(k + 1, "bad number"));
            rows.push(MetricsRow {
                step: f[0].parse().map_err(|_| bad(k + 1, "bad step"))?,
                split: f[1].to_string(),
                accuracy: num(f[2])?,
                precision: num(f[3])?,
                recall: num(f[4])?,
                loss: if f[5].is_empty() { None } else { Some(num(f[5])?) },
            });
        }
        Ok(rows)
    }

    /// The best checkpoint if one was written, else the final one.
    pub fn load_best(&self) -> Result<Checkpoint> {
        let best = self.best_path();
        if best.is_file() {
            Checkpoint::load(best)
        } else {
            Checkpoint::load(self.final_path())
        }
    }
}

/// Loads the configured data, trains, and fills `run` with metrics rows
/// (`train` and `val` per validation point), a checkpoint per validation
/// point, `best.json` and `final.json`.
pub fn run_training(run: &RunDir, config: &RunConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = config.network_spec()?;
    let train_set = config.load_split(Split::Train, &spec)?;
    let val_set = config.load_split(Split::Val, &spec)?;
    let (pos, neg) = train_set.label_counts();
    log::info!(
        "training {} on {} meshes ({pos} positive / {neg} negative vertices), validating on {}",
        spec.name,
        train_set.len(),
        val_set.len()
    );
    let features = config.features;
    let mut best_acc = f64::NEG_INFINITY;
    let outcome = train_with(&train_set, &val_set, &spec, &config.train, |record, net: &Network| {
        run.append_metrics("train", &record.train)?;
        run.append_metrics("val", &record.val)?;
        let ckpt = net.to_checkpoint(features, record.step);
        ckpt.save(run.checkpoint_path(record.step))?;
        if record.val.accuracy > best_acc {
            best_acc = record.val.accuracy;
            ckpt.save(run.best_path())?;
        }
        Ok(())
    })?;
    let last = outcome.history.last().map_or(0, |r| r.step);
    outcome.network.to_checkpoint(features, last).save(run.final_path())?;
    Ok(outcome)
}
