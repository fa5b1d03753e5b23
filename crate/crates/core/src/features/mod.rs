//! Per-vertex input features.
//!
//! Up to eight columns, always in this order: centered coordinates
//! `x y z`, the four curvatures `k_max k_min k_mean k_gauss`, and the mean
//! ring-1 edge length `d`. Curvatures are clamped to `[-50, 50]` and then
//! z-scored per mesh; `d` is z-scored per mesh; coordinates are only centered.

mod curvature;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::nn::Tensor;

pub use curvature::{curvatures, Curvatures};

/// Curvature values are clamped to this magnitude before standardization.
pub const CURVATURE_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureName {
    X,
    Y,
    Z,
    KMax,
    KMin,
    KMean,
    KGauss,
    D,
}

impl FeatureName {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureName::X => "x",
            FeatureName::Y => "y",
            FeatureName::Z => "z",
            FeatureName::KMax => "k_max",
            FeatureName::KMin => "k_min",
            FeatureName::KMean => "k_mean",
            FeatureName::KGauss => "k_gauss",
            FeatureName::D => "d",
        }
    }
}

/// Which feature groups to compute. Serializes as its display form, e.g.
/// `"curv+dist"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSelection {
    pub coordinates: bool,
    pub curvatures: bool,
    pub distance: bool,
}

impl FeatureSelection {
    pub const CURVATURES_AND_DISTANCE: Self = FeatureSelection {
        coordinates: false,
        curvatures: true,
        distance: true,
    };
    pub const COORDINATES: Self = FeatureSelection {
        coordinates: true,
        curvatures: false,
        distance: false,
    };
    pub const ALL: Self = FeatureSelection {
        coordinates: true,
        curvatures: true,
        distance: true,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.coordinates || self.curvatures || self.distance) {
            return Err(Error::InvalidConfig(
                "feature selection must include at least one group".into(),
            ));
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<FeatureName> {
        use FeatureName::*;
        let mut names = Vec::with_capacity(8);
        if self.coordinates {
            names.extend([X, Y, Z]);
        }
        if self.curvatures {
            names.extend([KMax, KMin, KMean, KGauss]);
        }
        if self.distance {
            names.push(D);
        }
        names
    }

    pub fn width(&self) -> usize {
        3 * self.coordinates as usize + 4 * self.curvatures as usize + self.distance as usize
    }
}

impl Default for FeatureSelection {
    fn default() -> Self {
        Self::CURVATURES_AND_DISTANCE
    }
}

impl fmt::Display for FeatureSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.coordinates {
            parts.push("xyz");
        }
        if self.curvatures {
            parts.push("curv");
        }
        if self.distance {
            parts.push("dist");
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FeatureSelection {
    type Err = Error;

    /// Parses `+`/`,` separated groups: `xyz`, `curv`, `dist` or `all`.
    fn from_str(s: &str) -> Result<Self> {
        let mut sel = FeatureSelection {
            coordinates: false,
            curvatures: false,
            distance: false,
        };
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "xyz" | "coords" | "coordinates" => sel.coordinates = true,
                "curv" | "curvature" | "curvatures" => sel.curvatures = true,
                "dist" | "d" | "distance" => sel.distance = true,
                "all" => sel = FeatureSelection::ALL,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown feature group {other:?}"
                    )))
                }
            }
        }
        sel.validate()?;
        Ok(sel)
    }
}

impl TryFrom<String> for FeatureSelection {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSelection> for String {
    fn from(sel: FeatureSelection) -> String {
        sel.to_string()
    }
}

/// Dense `n x m` per-vertex feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    names: Vec<FeatureName>,
    rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<FeatureName>, rows: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * names.len() {
            return Err(Error::Shape(format!(
                "{} values for {rows} rows of {} features",
                data.len(),
                names.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("feature matrix contains non-finite values".into()));
        }
        Ok(FeatureMatrix { names, rows, data })
    }

    pub fn names(&self) -> &[FeatureName] {
        &self.names
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.cols();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols() + c]).collect()
    }

    /// The matrix as an `[n, m]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(vec![self.rows, self.cols()], self.data.clone())
            .expect("feature matrix shape is consistent")
    }
}

/// Mean Euclidean distance from `v` to its ring-1 neighbors; zero (with a
/// warning) for an isolated vertex.
pub fn mean_neighbor_distance(mesh: &Mesh, v: usize) -> Result<f64> {
    mesh.check_vertex(v)?;
    let nbrs = mesh.neighbors(v);
    if nbrs.is_empty() {
        log::warn!("vertex {v} has no neighbors; mean neighbor distance set to 0");
        return Ok(0.0);
    }
    let p = mesh.vertices()[v];
    let total: f64 = nbrs
        .iter()
        .map(|&j| {
            let q = mesh.vertices()[j];
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
        })
        .sum();
    Ok(total / nbrs.len() as f64)
}

pub fn mean_neighbor_distances(mesh: &Mesh) -> Vec<f64> {
    (0..mesh.vertex_count())
        .map(|v| mean_neighbor_distance(mesh, v).expect("vertex in range"))
        .collect()
}

fn standardize(column: &mut [f64]) {
    if column.is_empty() {
        return;
    }
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
    for v in column.iter_mut() {
        *v = (*v - mean) * scale;
    }
}

/// Builds the normalized feature matrix for `mesh`.
pub fn assemble_features(mesh: &Mesh, sel: FeatureSelection) -> Result<FeatureMatrix> {
    sel.validate()?;
    let n = mesh.vertex_count();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(sel.width());

    if sel.coordinates {
        let mut centroid = [0.0; 3];
        for p in mesh.vertices() {
            for a in 0..3 {
                centroid[a] += p[a];
            }
        }
        if n > 0 {
            for c in &mut centroid {
                *c /= n as f64;
            }
        }
        for a in 0..3 {
            columns.push(mesh.vertices().iter().map(|p| p[a] - centroid[a]).collect());
        }
    }
    if sel.curvatures {
        let curv = curvatures(mesh);
        for mut col in [curv.k_max, curv.k_min, curv.k_mean, curv.k_gauss] {
            for v in &mut col {
                *v = v.clamp(-CURVATURE_CLAMP, CURVATURE_CLAMP);
            }
            standardize(&mut col);
            columns.push(col);
        }
    }
    if sel.distance {
        let mut col = mean_neighbor_distances(mesh);
        standardize(&mut col);
        columns.push(col);
    }

    let m = columns.len();
    let mut data = vec![0.0; n * m];
    for (c, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            data[i * m + c] = v;
        }
    }
    FeatureMatrix::new(sel.names(), n, data)
}
