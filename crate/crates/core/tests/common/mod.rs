//! Independent reference implementations and mesh builders shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use meshcnn::arch::Network;
use meshcnn::mesh::{Mesh, Point, RingAdjacency};
use meshcnn::nn::{LossKind, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;

/// Jittered grid with random diagonals, a few faces removed (which can leave
/// holes, boundaries, isolated vertices and separate components), and
/// vertices shuffled. Vertex count lies in `n_min..=n_max`.
pub fn random_mesh<R: Rng>(rng: &mut R, n_min: usize, n_max: usize) -> Mesh {
    loop {
        let nx = rng.gen_range(3..=25usize);
        let ny_lo = n_min.div_ceil(nx).max(3);
        let ny_hi = n_max / nx;
        if ny_lo > ny_hi {
            continue;
        }
        let ny = rng.gen_range(ny_lo..=ny_hi);
        let n = nx * ny;
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let mut vertices = vec![[0.0; 3]; n];
        for j in 0..ny {
            for i in 0..nx {
                vertices[perm[j * nx + i]] = [
                    i as f64 + rng.gen_range(-0.2..0.2),
                    j as f64 + rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.3..0.3),
                ];
            }
        }
        let drop_rate = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.3) };
        let mut faces = Vec::new();
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let a = perm[j * nx + i];
                let b = perm[j * nx + i + 1];
                let c = perm[(j + 1) * nx + i + 1];
                let d = perm[(j + 1) * nx + i];
                let tris = if rng.gen_bool(0.5) { [[a, b, c], [a, c, d]] } else { [[a, b, d], [b, c, d]] };
                for t in tris {
                    if !rng.gen_bool(drop_rate) {
                        faces.push(t);
                    }
                }
            }
        }
        if faces.is_empty() {
            continue;
        }
        return Mesh::new(vertices, None, faces).expect("valid random mesh");
    }
}

/// Neighbor lists built straight from the face list.
pub fn face_adjacency(n: usize, faces: &[[usize; 3]]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &[a, b, c] in faces {
        for (p, q) in [(a, b), (b, c), (c, a)] {
            adj[p].push(q);
            adj[q].push(p);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Unweighted graph distance from `src` to every vertex (`usize::MAX` when unreachable).
pub fn bfs_distances(adj: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::from([src]);
    dist[src] = 0;
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Level sets `0..=k_max` of BFS distance, each sorted.
pub fn bfs_levels(adj: &[Vec<usize>], src: usize, k_max: usize) -> Vec<Vec<usize>> {
    let dist = bfs_distances(adj, src);
    let mut levels = vec![Vec::new(); k_max + 1];
    for (v, &d) in dist.iter().enumerate() {
        if d <= k_max {
            levels[d].push(v);
        }
    }
    levels
}

/// Dense reference for the expanding layer: for each ring, the 0/1
/// membership matrix `A` is built from BFS distances, `D` holds its row
/// sums, and the slot is `D^-1 A X` with zero rows where `D` is zero.
/// Returns `[rings.len(), n, m]` row-major.
pub fn dense_expand(mesh: &Mesh, x: &[f64], m: usize, rings: &[usize]) -> Vec<f64> {
    let n = mesh.vertex_count();
    let adj = face_adjacency(n, mesh.faces());
    let dist: Vec<Vec<usize>> = (0..n).map(|i| bfs_distances(&adj, i)).collect();
    let mut out = vec![0.0; rings.len() * n * m];
    for (s, &k) in rings.iter().enumerate() {
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if dist[i][j] == k { 1.0 } else { 0.0 }).collect())
            .collect();
        for i in 0..n {
            let d: f64 = a[i].iter().sum();
            if d == 0.0 {
                continue;
            }
            for c in 0..m {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += a[i][j] * x[j * m + c];
                }
                out[(s * n + i) * m + c] = acc / d;
            }
        }
    }
    out
}

/// Relabels vertex `i` as `perm[i]`.
pub fn permute_mesh(mesh: &Mesh, perm: &[usize]) -> Mesh {
    let mut vertices = vec![[0.0; 3]; mesh.vertex_count()];
    for (i, &p) in perm.iter().enumerate() {
        vertices[p] = mesh.vertices()[i];
    }
    let faces = mesh.faces().iter().map(|f| f.map(|v| perm[v])).collect();
    Mesh::new(vertices, None, faces).unwrap()
}

pub fn random_permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Uniform random rotation from a normalized Gaussian-ish quaternion.
pub fn random_rotation<R: Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    let (w, x, y, z) = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let len = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > 0.1 && len <= 1.0 {
            break (q[0] / len, q[1] / len, q[2] / len, q[3] / len);
        }
    };
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn transform(mesh: &Mesh, mut f: impl FnMut(Point) -> Point) -> Mesh {
    mesh.with_positions(mesh.vertices().iter().map(|&p| f(p)).collect()).unwrap()
}

pub fn rotate(r: &[[f64; 3]; 3], p: Point) -> Point {
    std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2])
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Open cylinder of radius `r`: `around` vertices per ring, `rings` rings
/// spaced `dz`, faces oriented outward.
pub fn cylinder(r: f64, around: usize, rings: usize, dz: f64) -> Mesh {
    let mut vertices = Vec::with_capacity(around * rings);
    for j in 0..rings {
        // Alternate rings are rotated half a step so triangles stay acute.
        let offset = if j % 2 == 0 { 0.0 } else { 0.5 };
        for i in 0..around {
            let t = 2.0 * std::f64::consts::PI * (i as f64 + offset) / around as f64;
            vertices.push([r * t.cos(), r * t.sin(), j as f64 * dz]);
        }
    }
    let idx = |i: usize, j: usize| j * around + i % around;
    let mut faces = Vec::new();
    for j in 0..rings - 1 {
        for i in 0..around {
            if j % 2 == 0 {
                faces.push([idx(i, j), idx(i + 1, j), idx(i, j + 1)]);
                faces.push([idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            } else {
                faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            }
        }
    }
    Mesh::new(vertices, None, faces).unwrap()
}

/// Network loss on one mesh, recorded fresh.
pub fn network_loss(net: &Network, x: &Tensor, adj: Option<&RingAdjacency>, labels: &[u8], pos_weight: f64) -> f64 {
    let mut tape = Tape::new();
    let rec = net.record(&mut tape, x, adj).unwrap();
    let z = tape.logit_diff(rec.logits).unwrap();
    let loss = tape.weighted_ce(z, labels, pos_weight, LossKind::WeightedCe).unwrap();
    tape.value(loss).data()[0]
}

/// Analytic parameter gradients of [`network_loss`].
pub fn network_grads(net: &Network, x: &Tensor, adj: Option<&RingAdjacency>, labels: &[u8], pos_weight: f64) -> Vec<Tensor> {
    let mut tape = Tape::new();
    let rec = net.record(&mut tape, x, adj).unwrap();
    let z = tape.logit_diff(rec.logits).unwrap();
    let loss = tape.weighted_ce(z, labels, pos_weight, LossKind::WeightedCe).unwrap();
    let mut grads = tape.backward(loss).unwrap();
    rec.params
        .iter()
        .zip(net.params())
        .map(|(&v, p)| grads.take_or_zeros(v, p.shape()))
        .collect()
}

/// Worst per-entry relative error between analytic and central-difference
/// gradients over sampled parameter entries (at most `per_tensor` from each
/// tensor).
pub fn network_gradient_error<R: Rng>(
    rng: &mut R,
    net: &Network,
    x: &Tensor,
    adj: Option<&RingAdjacency>,
    labels: &[u8],
    eps: f64,
    per_tensor: usize,
) -> (f64, usize) {
    let analytic = network_grads(net, x, adj, labels, 3.0);
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for t in 0..analytic.len() {
        let len = analytic[t].len();
        let mut picks: Vec<usize> = (0..len).collect();
        picks.shuffle(rng);
        picks.truncate(per_tensor);
        for k in picks {
            let orig = probe.params()[t].data()[k];
            probe.params_mut()[t].data_mut()[k] = orig + eps;
            let up = network_loss(&probe, x, adj, labels, 3.0);
            probe.params_mut()[t].data_mut()[k] = orig - eps;
            let down = network_loss(&probe, x, adj, labels, 3.0);
            probe.params_mut()[t].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(rel_err(analytic[t].data()[k], numeric, 1e-6));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + eps;
            let up = f(&probe);
            probe[k] = x[k] - eps;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| rel_err(a, b, floor))
        .fold(0.0, f64::max)
}
