//! Triangle meshes, vertex labels and ring neighborhoods.
//!
//! A [`Mesh`] is immutable once built. Construction validates the face list,
//! drops duplicate faces and derives the undirected edge set together with a
//! compressed neighbor list, which is what the ring walks in [`rings`] run on.

pub mod obj;
pub mod rings;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use obj::{load_obj, parse_obj, parse_obj_str, save_obj, write_obj};
pub use rings::{ring_adjacency, ring_neighbors, RingAdjacency, RingSlot, RingWalker};

/// Position in model units (millimeters for dental scans).
pub type Point = [f64; 3];

/// RGB triple with channels in `[0, 1]`.
pub type Color = [f64; 3];

/// Default red threshold used when turning annotation colors into labels.
pub const DEFAULT_RED_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    colors: Option<Vec<Color>>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    neighbor_offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh, validating faces and deriving edges.
    ///
    /// Faces that repeat an earlier face (same vertex set, any order) are
    /// dropped with a warning.
    pub fn new(vertices: Vec<Point>, colors: Option<Vec<Color>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(c) = &colors {
            if c.len() != n {
                return Err(Error::Shape(format!(
                    "{} colors for {} vertices",
                    c.len(),
                    n
                )));
            }
        }

        let mut seen = HashSet::with_capacity(faces.len());
        let mut kept = Vec::with_capacity(faces.len());
        let mut duplicates = 0usize;
        for (fi, face) in faces.into_iter().enumerate() {
            for &index in &face {
                if index >= n {
                    return Err(Error::FaceIndex {
                        face: fi,
                        index,
                        count: n,
                    });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::DegenerateFace { face: fi });
            }
            let mut key = face;
            key.sort_unstable();
            if seen.insert(key) {
                kept.push(face);
            } else {
                duplicates += 1;
            }
        }
        if duplicates > 0 {
            log::warn!("dropped {duplicates} duplicate face(s)");
        }

        let mut edges: Vec<[usize; 2]> = kept
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|[a, b]| if a < b { [a, b] } else { [b, a] })
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let mut degree = vec![0usize; n];
        for &[a, b] in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut neighbor_offsets = Vec::with_capacity(n + 1);
        neighbor_offsets.push(0);
        for d in &degree {
            neighbor_offsets.push(neighbor_offsets.last().unwrap() + d);
        }
        let mut fill = neighbor_offsets[..n].to_vec();
        let mut neighbors = vec![0usize; edges.len() * 2];
        for &[a, b] in &edges {
            neighbors[fill[a]] = b;
            fill[a] += 1;
            neighbors[fill[b]] = a;
            fill[b] += 1;
        }
        for v in 0..n {
            neighbors[neighbor_offsets[v]..neighbor_offsets[v + 1]].sort_unstable();
        }

        Ok(Mesh {
            vertices,
            colors,
            faces: kept,
            edges,
            neighbor_offsets,
            neighbors,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn colors(&self) -> Option<&[Color]> {
        self.colors.as_deref()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Unordered edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Ring-1 neighbors of `v`, sorted ascending.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.neighbor_offsets[v]..self.neighbor_offsets[v + 1]]
    }

    /// Same connectivity with new vertex positions.
    pub fn with_positions(&self, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Shape(format!(
                "{} positions for {} vertices",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Ok(Mesh {
            vertices,
            ..self.clone()
        })
    }

    /// Same geometry with per-vertex colors replaced.
    pub fn with_colors(&self, colors: Option<Vec<Color>>) -> Result<Self> {
        if let Some(c) = &colors {
            if c.len() != self.vertices.len() {
                return Err(Error::Shape(format!(
                    "{} colors for {} vertices",
                    c.len(),
                    self.vertices.len()
                )));
            }
        }
        Ok(Mesh {
            colors,
            ..self.clone()
        })
    }

    pub(crate) fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.vertices.len() {
            return Err(Error::VertexOutOfRange {
                vertex: v,
                count: self.vertices.len(),
            });
        }
        Ok(())
    }

    /// Vertices that belong to a face edge with only one incident face.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut counts = std::collections::HashMap::with_capacity(self.edges.len());
        for &[a, b, c] in &self.faces {
            for [p, q] in [[a, b], [b, c], [c, a]] {
                let key = if p < q { (p, q) } else { (q, p) };
                *counts.entry(key).or_insert(0u32) += 1;
            }
        }
        let mut boundary = vec![false; self.vertices.len()];
        for ((p, q), count) in counts {
            if count == 1 {
                boundary[p] = true;
                boundary[q] = true;
            }
        }
        boundary
    }
}

/// Binary per-vertex labels; `1` marks the positive (margin) class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexLabels(Vec<u8>);

impl VertexLabels {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(pos) = labels.iter().position(|&l| l > 1) {
            return Err(Error::Shape(format!(
                "label at vertex {pos} is {}, expected 0 or 1",
                labels[pos]
            )));
        }
        Ok(VertexLabels(labels))
    }

    pub fn from_bools(flags: &[bool]) -> Self {
        VertexLabels(flags.iter().map(|&b| b as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&l| l == 1).count()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.positives() as f64 / self.0.len() as f64
        }
    }
}

/// Labels a vertex positive when its color reads as annotation red:
/// `r >= red_threshold` while `g` and `b` stay at or below `1 - red_threshold`.
pub fn labels_from_colors(mesh: &Mesh, red_threshold: f64) -> Result<VertexLabels> {
    let colors = mesh.colors().ok_or(Error::MissingColors)?;
    let low = 1.0 - red_threshold;
    Ok(VertexLabels(
        colors
            .iter()
            .map(|&[r, g, b]| (r >= red_threshold && g <= low && b <= low) as u8)
            .collect(),
    ))
}
