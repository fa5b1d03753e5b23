//! Discrete curvature from the cotangent Laplacian and the angle deficit.
//!
//! Both are normalized by the mixed Voronoi area of the vertex: the Voronoi
//! cell inside non-obtuse triangles, half the triangle when the vertex owns
//! the obtuse angle and a quarter of it otherwise.
//!
//! Mean curvature is half the norm of the Laplace-Beltrami vector, signed by
//! its agreement with the area-weighted vertex normal, so outward-oriented
//! convex surfaces get positive mean curvature. On boundary vertices the
//! Laplacian has an in-plane part coming from the missing fan, so only its
//! normal component is used there, and the angle deficit is taken against
//! `pi` instead of `2 pi`.

use std::f64::consts::PI;

use crate::mesh::{Mesh, Point};

/// Per-vertex principal, mean and Gaussian curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct Curvatures {
    pub k_max: Vec<f64>,
    pub k_min: Vec<f64>,
    pub k_mean: Vec<f64>,
    pub k_gauss: Vec<f64>,
}

impl Curvatures {
    pub fn len(&self) -> usize {
        self.k_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_mean.is_empty()
    }
}

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Per-vertex accumulators gathered in one pass over the faces.
pub(crate) struct VertexSums {
    pub angle_sum: Vec<f64>,
    pub mixed_area: Vec<f64>,
    pub laplacian: Vec<Point>,
    pub normal: Vec<Point>,
}

pub(crate) fn accumulate(mesh: &Mesh) -> VertexSums {
    let n = mesh.vertex_count();
    let mut sums = VertexSums {
        angle_sum: vec![0.0; n],
        mixed_area: vec![0.0; n],
        laplacian: vec![[0.0; 3]; n],
        normal: vec![[0.0; 3]; n],
    };
    let pts = mesh.vertices();
    let mut skipped = 0usize;

    for face in mesh.faces() {
        let p = [pts[face[0]], pts[face[1]], pts[face[2]]];
        let face_cross = cross(sub(p[1], p[0]), sub(p[2], p[0]));
        let double_area = norm(face_cross);
        let longest = (0..3)
            .map(|c| dot(sub(p[(c + 1) % 3], p[c]), sub(p[(c + 1) % 3], p[c])))
            .fold(0.0, f64::max);
        if !(double_area > 1e-12 * longest) {
            skipped += 1;
            continue;
        }
        let area = 0.5 * double_area;

        let mut angle = [0.0; 3];
        let mut cot = [0.0; 3];
        for c in 0..3 {
            let e1 = sub(p[(c + 1) % 3], p[c]);
            let e2 = sub(p[(c + 2) % 3], p[c]);
            let cos_part = dot(e1, e2);
            // |e1 x e2| is twice the area at every corner
            cot[c] = cos_part / double_area;
            angle[c] = double_area.atan2(cos_part);
        }
        let obtuse = (0..3).find(|&c| angle[c] > 0.5 * PI);

        for c in 0..3 {
            let (i, j, k) = (c, (c + 1) % 3, (c + 2) % 3);
            let vi = face[i];
            sums.angle_sum[vi] += angle[i];
            for a in 0..3 {
                sums.normal[vi][a] += face_cross[a];
            }

            sums.mixed_area[vi] += match obtuse {
                None => {
                    let eij = sub(p[j], p[i]);
                    let eik = sub(p[k], p[i]);
                    0.125 * (dot(eij, eij) * cot[k] + dot(eik, eik) * cot[j])
                }
                Some(o) if o == i => 0.5 * area,
                Some(_) => 0.25 * area,
            };

            // edge (j, k) is opposite corner i
            let (vj, vk) = (face[j], face[k]);
            let d = sub(p[j], p[k]);
            for a in 0..3 {
                sums.laplacian[vj][a] += cot[i] * d[a];
                sums.laplacian[vk][a] -= cot[i] * d[a];
            }
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} degenerate triangle(s) in curvature estimation");
    }
    sums
}

/// Discrete curvatures at every vertex.
///
/// Vertices with zero mixed area (isolated, or only degenerate triangles)
/// get all four values set to zero.
pub fn curvatures(mesh: &Mesh) -> Curvatures {
    let n = mesh.vertex_count();
    let sums = accumulate(mesh);
    let boundary = mesh.boundary_vertices();

    let mut out = Curvatures {
        k_max: vec![0.0; n],
        k_min: vec![0.0; n],
        k_mean: vec![0.0; n],
        k_gauss: vec![0.0; n],
    };
    let mut zero_area = 0usize;
    for v in 0..n {
        let area = sums.mixed_area[v];
        if !(area > 0.0) || !area.is_finite() {
            zero_area += 1;
            continue;
        }
        let reference = if boundary[v] { PI } else { 2.0 * PI };
        let gauss = (reference - sums.angle_sum[v]) / area;

        let lap = sums.laplacian[v];
        let nrm = sums.normal[v];
        let nrm_len = norm(nrm);
        let mean = if boundary[v] {
            if nrm_len > 0.0 {
                dot(lap, nrm) / nrm_len / (4.0 * area)
            } else {
                0.0
            }
        } else {
            let magnitude = norm(lap) / (4.0 * area);
            if dot(lap, nrm) < 0.0 {
                -magnitude
            } else {
                magnitude
            }
        };

        let spread = (mean * mean - gauss).max(0.0).sqrt();
        out.k_mean[v] = mean;
        out.k_gauss[v] = gauss;
        out.k_max[v] = mean + spread;
        out.k_min[v] = mean - spread;
    }
    if zero_area > 0 {
        log::warn!("{zero_area} vertex(es) with zero mixed area; curvature set to 0");
    }
    out
}
