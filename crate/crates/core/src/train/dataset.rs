use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{assemble_features, FeatureMatrix, FeatureSelection};
use crate::mesh::{labels_from_colors, load_obj, Mesh, RingAdjacency, VertexLabels, DEFAULT_RED_THRESHOLD};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidConfig(format!("unknown split {s:?} (expected train, val or test)"))),
        }
    }
}

/// One mesh ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: FeatureMatrix,
    pub labels: VertexLabels,
    /// Absent when no rings were requested.
    pub adjacency: Option<RingAdjacency>,
}

impl Sample {
    pub fn new(id: impl Into<String>, features: FeatureMatrix, labels: VertexLabels, adjacency: Option<RingAdjacency>) -> Result<Self> {
        let id = id.into();
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::Shape(format!("{id}: {n} feature rows but {} labels", labels.len())));
        }
        if let Some(adj) = &adjacency {
            if adj.vertex_count() != n {
                return Err(Error::Shape(format!(
                    "{id}: {n} feature rows but adjacency covers {} vertices",
                    adj.vertex_count()
                )));
            }
        }
        Ok(Sample {
            id,
            features,
            labels,
            adjacency,
        })
    }

    /// Computes features and, if `rings` is non-empty, ring adjacency.
    pub fn from_mesh(id: impl Into<String>, mesh: &Mesh, labels: VertexLabels, sel: FeatureSelection, rings: &[usize]) -> Result<Self> {
        let features = assemble_features(mesh, sel)?;
        let adjacency = if rings.is_empty() {
            None
        } else {
            Some(RingAdjacency::build(mesh, rings)?)
        };
        Sample::new(id, features, labels, adjacency)
    }

    pub fn vertex_count(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_tensor(&self) -> Tensor {
        self.features.to_tensor()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    split: Split,
    selection: FeatureSelection,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(split: Split, selection: FeatureSelection, samples: Vec<Sample>) -> Result<Self> {
        let width = selection.width();
        for s in &samples {
            if s.features.cols() != width {
                return Err(Error::FeatureMismatch {
                    expected: width,
                    found: s.features.cols(),
                });
            }
        }
        Ok(Dataset {
            split,
            selection,
            samples,
        })
    }

    /// Builds samples from in-memory meshes, in parallel.
    pub fn from_meshes(
        split: Split,
        selection: FeatureSelection,
        rings: &[usize],
        meshes: Vec<(String, Mesh, VertexLabels)>,
    ) -> Result<Self> {
        let samples = meshes
            .into_par_iter()
            .map(|(id, mesh, labels)| Sample::from_mesh(id, &mesh, labels, selection, rings))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(split, selection, samples)
    }

    /// Loads every `DIR/<split>/*.obj`, in file-name order. Labels come from
    /// vertex colors. With `cache`, features and adjacency are read from (or
    /// written to) a sidecar beside each mesh. A missing split directory gives
    /// an empty dataset.
    pub fn load(dir: impl AsRef<Path>, split: Split, selection: FeatureSelection, rings: &[usize], cache: bool) -> Result<Self> {
        let split_dir = dir.as_ref().join(split.as_str());
        if !split_dir.is_dir() {
            return Dataset::new(split, selection, Vec::new());
        }
        let files = obj_files(&split_dir)?;
        let samples = files
            .par_iter()
            .map(|path| load_sample(path, selection, rings, cache))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(split, selection, samples)
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn selection(&self) -> FeatureSelection {
        self.selection
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.samples.iter().map(Sample::vertex_count).sum()
    }

    /// `(positives, negatives)` over every vertex.
    pub fn label_counts(&self) -> (usize, usize) {
        let pos: usize = self.samples.iter().map(|s| s.labels.positives()).sum();
        (pos, self.vertex_count() - pos)
    }

    pub fn positive_fraction(&self) -> f64 {
        let (p, n) = self.label_counts();
        if p + n == 0 {
            0.0
        } else {
            p as f64 / (p + n) as f64
        }
    }
}

fn obj_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    features: FeatureMatrix,
    labels: VertexLabels,
    adjacency: Option<RingAdjacency>,
}

/// Sidecar path: `mesh.obj` caches to `mesh.obj.cache.json`.
pub fn cache_path(mesh_path: &Path) -> PathBuf {
    let mut name = mesh_path.file_name().unwrap_or_default().to_os_string();
    name.push(".cache.json");
    mesh_path.with_file_name(name)
}

fn cache_key(bytes: &[u8], selection: FeatureSelection, rings: &[usize]) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_VERSION.to_le_bytes());
    h.update(selection.to_string().as_bytes());
    for r in rings {
        h.update((*r as u64).to_le_bytes());
    }
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn sample_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_sample(path: &Path, selection: FeatureSelection, rings: &[usize], cache: bool) -> Result<Sample> {
    let id = sample_id(path);
    if !cache {
        let mesh = load_obj(path)?;
        let labels = labels_from_colors(&mesh, DEFAULT_RED_THRESHOLD)?;
        return Sample::from_mesh(id, &mesh, labels, selection, rings);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let key = cache_key(&bytes, selection, rings);
    let sidecar = cache_path(path);
    if let Ok(text) = fs::read_to_string(&sidecar) {
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if entry.key == key => {
                return Sample::new(id, entry.features, entry.labels, entry.adjacency);
            }
            Ok(_) => log::debug!("{}: stale cache", sidecar.display()),
            Err(e) => log::warn!("{}: unreadable cache ({e}), recomputing", sidecar.display()),
        }
    }
    let mesh = crate::mesh::parse_obj(bytes.as_slice()).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })?;
    let labels = labels_from_colors(&mesh, DEFAULT_RED_THRESHOLD)?;
    let sample = Sample::from_mesh(id, &mesh, labels, selection, rings)?;
    let entry = CacheEntry {
        key,
        features: sample.features.clone(),
        labels: sample.labels.clone(),
        adjacency: sample.adjacency.clone(),
    };
    match serde_json::to_string(&entry) {
        Ok(text) => {
            if let Err(e) = fs::write(&sidecar, text) {
                log::warn!("{}: could not write cache: {e}", sidecar.display());
            }
        }
        Err(e) => log::warn!("{}: could not serialize cache: {e}", sidecar.display()),
    }
    Ok(sample)
}
