//! Procedural labeled meshes.
//!
//! Two surface families are available. A ridged heightfield is a jittered
//! grid folded along creases that follow grid lines; vertices within
//! `ridge_width` grid steps of a crease are positive. A bumpy sphere is an
//! icosphere carrying raised-cosine bumps; vertices near the inflection
//! circle of a bump are positive. Labels come from the parametric
//! construction, never from estimated curvature.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{save_obj, Mesh, Point, VertexLabels};
use crate::train::{colored_mesh, ColorSource, Split};

pub const MAX_VERTEX_BUDGET: usize = 6000;
pub const MIN_VERTEX_BUDGET: usize = 12;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceFamily {
    #[default]
    RidgedHeightfield,
    BumpySphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    /// Upper bound on the vertex count of each mesh.
    pub vertex_budget: usize,
    pub family: SurfaceFamily,
    /// Half-width of the positive band, in vertices.
    pub ridge_width: usize,
    /// Jitter amplitude as a fraction of the local edge length.
    pub noise: f64,
    /// Bump count for the sphere family.
    pub bumps: usize,
    /// Positive fraction the heightfield aims for when choosing its crease count.
    pub positive_target: f64,
    /// Slope of each crease flank.
    pub crease_slope: f64,
    /// Amplitude of the smooth background undulation.
    pub undulation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            vertex_budget: 1600,
            family: SurfaceFamily::RidgedHeightfield,
            ridge_width: 2,
            noise: 0.05,
            bumps: 6,
            positive_target: 0.25,
            crease_slope: 0.5,
            undulation: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_VERTEX_BUDGET..=MAX_VERTEX_BUDGET).contains(&self.vertex_budget) {
            return Err(Error::InvalidConfig(format!(
                "vertex budget must lie in {MIN_VERTEX_BUDGET}..={MAX_VERTEX_BUDGET}, got {}",
                self.vertex_budget
            )));
        }
        if self.ridge_width == 0 {
            return Err(Error::InvalidConfig("ridge width must be at least 1".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise must be non-negative, got {}", self.noise)));
        }
        if !(self.positive_target > 0.0 && self.positive_target < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "positive target must lie in (0, 1), got {}",
                self.positive_target
            )));
        }
        if !(self.crease_slope.is_finite() && self.crease_slope > 0.0) {
            return Err(Error::InvalidConfig("crease slope must be positive".into()));
        }
        if !self.undulation.is_finite() {
            return Err(Error::InvalidConfig("undulation must be finite".into()));
        }
        if self.family == SurfaceFamily::BumpySphere && self.bumps == 0 {
            return Err(Error::InvalidConfig("bumpy sphere needs at least one bump".into()));
        }
        Ok(())
    }

    /// Same settings, different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        SynthConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn generate(&self) -> Result<(Mesh, VertexLabels)> {
        generate(self)
    }
}

pub fn generate(config: &SynthConfig) -> Result<(Mesh, VertexLabels)> {
    config.validate()?;
    match config.family {
        SurfaceFamily::RidgedHeightfield => ridged_heightfield(config),
        SurfaceFamily::BumpySphere => bumpy_sphere(config),
    }
}

/// Side length of the heightfield domain.
const HEIGHTFIELD_SIZE: f64 = 20.0;

/// Triangulated `nx x ny` grid in the `z = 0` plane, wound counter-clockwise
/// seen from `+z`. Vertex `(i, j)` has index `j * nx + i`.
pub fn plane_grid(nx: usize, ny: usize, spacing: f64) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidConfig("grid needs at least 2 x 2 vertices".into()));
    }
    let vertices = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| [i as f64 * spacing, j as f64 * spacing, 0.0]))
        .collect();
    Mesh::new(vertices, None, grid_faces(nx, ny))
}

fn grid_faces(nx: usize, ny: usize) -> Vec<[usize; 3]> {
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let b = a + 1;
            let c = a + nx + 1;
            let d = a + nx;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    faces
}

/// Picks `count` grid lines in `lo..=hi` at least `gap` apart.
fn place_lines(rng: &mut impl Rng, count: usize, lo: usize, hi: usize, gap: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    for _ in 0..200 {
        let mut lines: Vec<usize> = (0..count).map(|_| rng.gen_range(lo..=hi)).collect();
        lines.sort_unstable();
        if lines.windows(2).all(|w| w[1] - w[0] >= gap) {
            return lines;
        }
    }
    // Evenly spaced fallback.
    let span = (hi - lo) as f64;
    (0..count)
        .map(|k| lo + ((k as f64 + 0.5) / count as f64 * span).round() as usize)
        .collect()
}

fn ridged_heightfield(config: &SynthConfig) -> Result<(Mesh, VertexLabels)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let side = (config.vertex_budget as f64).sqrt().floor() as usize;
    let w = config.ridge_width;
    // Keep bands off the boundary where the grid allows it.
    let margin = (w + 2).min((side - 1) / 2);
    let h = HEIGHTFIELD_SIZE / (side - 1) as f64;

    // Crease count closest to the target positive fraction, splitting lines
    // between the two axes.
    let band = (2 * w + 1) as f64 / side as f64;
    let fraction = |k: usize| {
        let (kx, ky) = (k.div_ceil(2), k / 2);
        1.0 - (1.0 - (kx as f64 * band).min(1.0)) * (1.0 - (ky as f64 * band).min(1.0))
    };
    let max_lines = 2 * ((side - 2 * margin) / (2 * w + 2)).max(1);
    let lines = (1..=max_lines)
        .min_by(|&a, &b| {
            (fraction(a) - config.positive_target)
                .abs()
                .total_cmp(&(fraction(b) - config.positive_target).abs())
        })
        .unwrap_or(1);
    let (mut nx_lines, mut ny_lines) = (lines.div_ceil(2), lines / 2);
    if rng.gen_bool(0.5) {
        std::mem::swap(&mut nx_lines, &mut ny_lines);
    }
    let gap = 2 * w + 2;
    let cols = place_lines(&mut rng, nx_lines, margin, side - 1 - margin, gap);
    let rows = place_lines(&mut rng, ny_lines, margin, side - 1 - margin, gap);

    let wave = 2.0 * std::f64::consts::PI / HEIGHTFIELD_SIZE;
    let (phase_x, phase_y) = (rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3));
    let freq_x = rng.gen_range(0.7..1.3) * wave;
    let freq_y = rng.gen_range(0.7..1.3) * wave;
    let slope = config.crease_slope;

    let mut vertices: Vec<Point> = Vec::with_capacity(side * side);
    let mut positive = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            let (x, y) = (i as f64 * h, j as f64 * h);
            let mut z = config.undulation * (freq_x * x + phase_x).sin() * (freq_y * y + phase_y).cos();
            for &c in &cols {
                z -= slope * (x - c as f64 * h).abs();
            }
            for &r in &rows {
                z -= slope * (y - r as f64 * h).abs();
            }
            let near = cols.iter().any(|&c| i.abs_diff(c) <= w) || rows.iter().any(|&r| j.abs_diff(r) <= w);
            positive.push(near);
            vertices.push([x, y, z]);
        }
    }
    jitter(&mut rng, &mut vertices, config.noise * h);
    let mesh = Mesh::new(vertices, None, grid_faces(side, side))?;
    Ok((mesh, VertexLabels::from_bools(&positive)))
}

fn jitter(rng: &mut impl Rng, vertices: &mut [Point], amplitude: f64) {
    if amplitude > 0.0 {
        for p in vertices.iter_mut() {
            for c in p.iter_mut() {
                *c += rng.gen_range(-amplitude..=amplitude);
            }
        }
    }
}

fn normalize(p: Point) -> Point {
    let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / len, p[1] / len, p[2] / len]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Unit icosphere: an icosahedron with every face split into four
/// `subdivisions` times, vertices projected onto the sphere. Has
/// `10 * 4^s + 2` vertices.
pub fn icosphere(subdivisions: u32) -> Result<Mesh> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(vertices, None, faces)
}

/// Vertex count of an icosphere with `subdivisions` levels.
pub fn icosphere_vertex_count(subdivisions: u32) -> usize {
    10 * 4usize.pow(subdivisions) + 2
}

fn bumpy_sphere(config: &SynthConfig) -> Result<(Mesh, VertexLabels)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let subdivisions = (0..=6)
        .take_while(|&s| icosphere_vertex_count(s) <= config.vertex_budget)
        .last()
        .expect("budget of at least 12 fits the icosahedron");
    let sphere = icosphere(subdivisions)?;
    // Angle subtended by an icosahedron edge, halved per subdivision.
    let edge_angle = (1.0 / 5f64.sqrt()).acos() / f64::from(1u32 << subdivisions);

    // Best of a few random center sets by minimum separation.
    let random_unit = |rng: &mut ChaCha8Rng| loop {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let len2 = dot(p, p);
        if len2 > 1e-6 && len2 <= 1.0 {
            return normalize(p);
        }
    };
    let mut best: Option<(f64, Vec<Point>)> = None;
    for _ in 0..64 {
        let centers: Vec<Point> = (0..config.bumps).map(|_| random_unit(&mut rng)).collect();
        let mut sep = std::f64::consts::PI;
        for a in 0..centers.len() {
            for b in a + 1..centers.len() {
                sep = sep.min(dot(centers[a], centers[b]).clamp(-1.0, 1.0).acos());
            }
        }
        if best.as_ref().is_none_or(|(s, _)| sep > *s) {
            best = Some((sep, centers));
        }
    }
    let (separation, centers) = best.expect("at least one draw");
    let rho = (separation / 2.0).min(1.0);
    if rho < 3.0 * edge_angle {
        return Err(Error::InvalidConfig(format!(
            "vertex budget {} too small for {} bumps: bump radius {rho:.3} rad spans fewer than 3 edges",
            config.vertex_budget, config.bumps
        )));
    }
    let amplitude = 0.25 * rho;
    let band = config.ridge_width as f64 * edge_angle / 2.0;

    let mut vertices = Vec::with_capacity(sphere.vertex_count());
    let mut positive = Vec::with_capacity(sphere.vertex_count());
    for &p in sphere.vertices() {
        let theta = centers
            .iter()
            .map(|&c| dot(p, c).clamp(-1.0, 1.0).acos())
            .fold(f64::INFINITY, f64::min);
        let radius = if theta < rho {
            1.0 + amplitude * 0.5 * (1.0 + (std::f64::consts::PI * theta / rho).cos())
        } else {
            1.0
        };
        positive.push((theta - rho / 2.0).abs() <= band);
        vertices.push([p[0] * radius, p[1] * radius, p[2] * radius]);
    }
    jitter(&mut rng, &mut vertices, config.noise * edge_angle);
    let mesh = sphere.with_positions(vertices)?;
    Ok((mesh, VertexLabels::from_bools(&positive)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        SplitCounts {
            train: 40,
            val: 10,
            test: 10,
        }
    }
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// Generator settings plus split sizes, as read by `gen-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DatasetConfig {
    pub synth: SynthConfig,
    pub splits: SplitCounts,
}

impl DatasetConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: DatasetConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.synth.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    /// Path relative to the dataset directory.
    pub file: String,
    pub seed: u64,
    pub vertices: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn entries_for(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// One planned mesh: its split, index within the split and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedMesh {
    pub split: Split,
    pub index: usize,
    pub seed: u64,
}

/// Distinct per-mesh seeds drawn from the master seed, in train, val, test order.
pub fn plan_dataset(master_seed: u64, counts: SplitCounts) -> Vec<PlannedMesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut used = HashSet::with_capacity(counts.total());
    let mut plan = Vec::with_capacity(counts.total());
    for split in Split::ALL {
        for index in 0..counts.get(split) {
            let seed = loop {
                let s: u64 = rng.gen();
                if used.insert(s) {
                    break s;
                }
            };
            plan.push(PlannedMesh { split, index, seed });
        }
    }
    plan
}

/// Generates every planned mesh in memory.
pub fn generate_meshes(config: &DatasetConfig) -> Result<Vec<(PlannedMesh, Mesh, VertexLabels)>> {
    config.synth.validate()?;
    plan_dataset(config.synth.seed, config.splits)
        .into_par_iter()
        .map(|planned| {
            let (mesh, labels) = generate(&config.synth.with_seed(planned.seed))?;
            Ok((planned, mesh, labels))
        })
        .collect()
}

fn mesh_file_name(planned: &PlannedMesh) -> PathBuf {
    Path::new(planned.split.as_str()).join(format!("mesh_{:04}.obj", planned.index))
}

/// Writes `split/mesh_NNNN.obj` files, colored by label, plus a manifest of
/// per-mesh seeds under `out_dir`.
pub fn generate_dataset(config: &DatasetConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    for split in Split::ALL {
        let dir = out_dir.join(split.as_str());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let meshes = generate_meshes(config)?;
    let entries = meshes
        .par_iter()
        .map(|(planned, mesh, labels)| {
            let rel = mesh_file_name(planned);
            let colored = colored_mesh(mesh, ColorSource::Labels(labels))?;
            save_obj(&colored, out_dir.join(&rel))?;
            Ok(ManifestEntry {
                split: planned.split,
                file: rel.to_string_lossy().replace('\\', "/"),
                seed: planned.seed,
                vertices: mesh.vertex_count(),
                positives: labels.positives(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        config: config.clone(),
        entries,
    };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for s in 0..4 {
            let m = icosphere(s).unwrap();
            assert_eq!(m.vertex_count(), icosphere_vertex_count(s));
            assert_eq!(m.face_count(), 20 * 4usize.pow(s));
            assert_eq!(m.edge_count(), 30 * 4usize.pow(s));
            assert!(m.boundary_vertices().iter().all(|&b| !b));
        }
    }

    #[test]
    fn heightfield_is_deterministic() {
        let c = SynthConfig::default();
        let (m1, l1) = generate(&c).unwrap();
        let (m2, l2) = generate(&c).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(l1, l2);
        let (m3, _) = generate(&c.with_seed(1)).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn heightfield_respects_budget() {
        for budget in [200, 1600, 2000, 6000] {
            let c = SynthConfig {
                vertex_budget: budget,
                ..SynthConfig::default()
            };
            let (m, l) = generate(&c).unwrap();
            assert!(m.vertex_count() <= budget);
            assert_eq!(l.len(), m.vertex_count());
        }
    }

    #[test]
    fn sphere_family() {
        let c = SynthConfig {
            family: SurfaceFamily::BumpySphere,
            vertex_budget: 3000,
            ..SynthConfig::default()
        };
        let (m, l) = generate(&c).unwrap();
        assert_eq!(m.vertex_count(), 2562);
        assert!(l.positives() > 0);
        assert!(l.positives() < m.vertex_count() / 2);
    }

    #[test]
    fn sphere_budget_too_small() {
        let c = SynthConfig {
            family: SurfaceFamily::BumpySphere,
            vertex_budget: 50,
            bumps: 20,
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&c), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::default();
        for bad in [
            SynthConfig { vertex_budget: 11, ..base.clone() },
            SynthConfig { vertex_budget: 6001, ..base.clone() },
            SynthConfig { ridge_width: 0, ..base.clone() },
            SynthConfig { noise: -1.0, ..base.clone() },
        ] {
            assert!(generate(&bad).is_err());
        }
    }

    #[test]
    fn plan_has_distinct_seeds() {
        let plan = plan_dataset(7, SplitCounts::default());
        assert_eq!(plan.len(), 60);
        let seeds: HashSet<_> = plan.iter().map(|p| p.seed).collect();
        assert_eq!(seeds.len(), 60);
        assert_eq!(plan, plan_dataset(7, SplitCounts::default()));
    }

    #[test]
    fn dataset_config_toml() {
        let c = DatasetConfig::from_toml_str("[synth]\nseed = 5\nvertex_budget = 400\n[splits]\ntrain = 3\n").unwrap();
        assert_eq!(c.synth.seed, 5);
        assert_eq!(c.synth.vertex_budget, 400);
        assert_eq!(c.splits.train, 3);
        assert_eq!(c.splits.val, 10);
    }
}
