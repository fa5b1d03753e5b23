//! Ring neighborhoods.
//!
//! Ring 0 of a vertex is the vertex itself and ring 1 its edge neighbors. For
//! `k >= 2`, ring `k` is every neighbor of a ring `k-1` vertex that lies in
//! neither ring `k-1` nor ring `k-2`. Rings further in never need to be
//! excluded: a neighbor of ring `k-1` is at distance `k-2`, `k-1` or `k`.
//! Rings are therefore the level sets of unweighted graph distance.

use serde::{Deserialize, Serialize};

use super::Mesh;
use crate::error::{Error, Result};

/// Reusable scratch state for walking rings outward from many source vertices.
pub struct RingWalker<'m> {
    mesh: &'m Mesh,
    epoch: Vec<u32>,
    ring_of: Vec<usize>,
    current: u32,
    rings: Vec<Vec<usize>>,
}

impl<'m> RingWalker<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        let n = mesh.vertex_count();
        RingWalker {
            mesh,
            epoch: vec![0; n],
            ring_of: vec![0; n],
            current: 0,
            rings: Vec::new(),
        }
    }

    #[inline]
    fn in_ring(&self, u: usize, ring: usize) -> bool {
        self.epoch[u] == self.current && self.ring_of[u] == ring
    }

    #[inline]
    fn mark(&mut self, u: usize, ring: usize) {
        self.epoch[u] = self.current;
        self.ring_of[u] = ring;
    }

    /// Rings `0..=max_ring` around `v`, each sorted ascending. Rings past the
    /// edge of `v`'s connected component are empty.
    pub fn walk(&mut self, v: usize, max_ring: usize) -> Result<&[Vec<usize>]> {
        self.mesh.check_vertex(v)?;
        self.current = self.current.wrapping_add(1);
        if self.current == 0 {
            self.epoch.iter_mut().for_each(|e| *e = 0);
            self.current = 1;
        }
        self.rings.resize_with(max_ring + 1, Vec::new);
        self.rings.iter_mut().for_each(Vec::clear);

        self.rings[0].push(v);
        self.mark(v, 0);
        for k in 1..=max_ring {
            let mut next = std::mem::take(&mut self.rings[k]);
            let prev = std::mem::take(&mut self.rings[k - 1]);
            for &p in &prev {
                for &u in self.mesh.neighbors(p) {
                    let excluded = self.in_ring(u, k)
                        || self.in_ring(u, k - 1)
                        || (k >= 2 && self.in_ring(u, k - 2));
                    if !excluded {
                        self.mark(u, k);
                        next.push(u);
                    }
                }
            }
            self.rings[k - 1] = prev;
            next.sort_unstable();
            let empty = next.is_empty();
            self.rings[k] = next;
            if empty {
                break;
            }
        }
        Ok(&self.rings[..=max_ring])
    }
}

/// Vertices in ring `k` around `v`, sorted ascending.
pub fn ring_neighbors(mesh: &Mesh, v: usize, k: usize) -> Result<Vec<usize>> {
    let mut walker = RingWalker::new(mesh);
    Ok(walker.walk(v, k)?[k].clone())
}

/// Membership rows for one ring number, stored as compressed sparse rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingSlot {
    ring: usize,
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl RingSlot {
    pub fn ring(&self) -> usize {
        self.ring
    }

    /// Members of ring `self.ring()` around vertex `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.members[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.members.len()
    }
}

/// Sparse `slot x vertex x vertex` ring-membership structure. Entry
/// `(s, i, j)` is set when `j` lies in ring `rings[s]` around `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingAdjacency {
    vertex_count: usize,
    slots: Vec<RingSlot>,
}

impl RingAdjacency {
    pub fn build(mesh: &Mesh, rings: &[usize]) -> Result<Self> {
        let max_ring = *rings.iter().max().ok_or(Error::EmptyRings)?;
        let n = mesh.vertex_count();
        let mut slots: Vec<RingSlot> = rings
            .iter()
            .map(|&ring| RingSlot {
                ring,
                offsets: Vec::with_capacity(n + 1),
                members: Vec::new(),
            })
            .collect();
        for slot in &mut slots {
            slot.offsets.push(0);
        }
        let mut walker = RingWalker::new(mesh);
        for v in 0..n {
            let walked = walker.walk(v, max_ring)?;
            for slot in &mut slots {
                slot.members.extend_from_slice(&walked[slot.ring]);
                slot.offsets.push(slot.members.len());
            }
        }
        Ok(RingAdjacency {
            vertex_count: n,
            slots,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn rings(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.ring).collect()
    }

    pub fn slots(&self) -> &[RingSlot] {
        &self.slots
    }

    /// The first slot holding ring number `ring`.
    pub fn slot(&self, ring: usize) -> Option<&RingSlot> {
        self.slots.iter().find(|s| s.ring == ring)
    }

    pub fn contains_ring(&self, ring: usize) -> bool {
        self.slot(ring).is_some()
    }
}

pub fn ring_adjacency(mesh: &Mesh, rings: &[usize]) -> Result<RingAdjacency> {
    RingAdjacency::build(mesh, rings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            None,
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap()
    }

    /// A strip of triangles: 0-1-2-... along the bottom, a path-like graph.
    fn strip(len: usize) -> Mesh {
        let mut vertices = Vec::new();
        for i in 0..len {
            vertices.push([i as f64, 0.0, 0.0]);
            vertices.push([i as f64, 1.0, 0.0]);
        }
        let mut faces = Vec::new();
        for i in 0..len - 1 {
            let (a, b, c, d) = (2 * i, 2 * i + 2, 2 * i + 3, 2 * i + 1);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
        Mesh::new(vertices, None, faces).unwrap()
    }

    #[test]
    fn tetrahedron_rings() {
        let m = tetrahedron();
        assert_eq!(ring_neighbors(&m, 0, 0).unwrap(), vec![0]);
        assert_eq!(ring_neighbors(&m, 0, 1).unwrap(), vec![1, 2, 3]);
        assert!(ring_neighbors(&m, 0, 2).unwrap().is_empty());
        assert!(ring_neighbors(&m, 0, 5).unwrap().is_empty());
        assert!(matches!(
            ring_neighbors(&m, 4, 1),
            Err(Error::VertexOutOfRange { vertex: 4, count: 4 })
        ));
    }

    #[test]
    fn strip_rings_grow_linearly() {
        let m = strip(10);
        // vertex 0 is at the strip's left end
        assert_eq!(ring_neighbors(&m, 0, 1).unwrap(), vec![1, 2, 3]);
        assert_eq!(ring_neighbors(&m, 0, 2).unwrap(), vec![4, 5]);
        assert_eq!(ring_neighbors(&m, 0, 3).unwrap(), vec![6, 7]);
    }

    #[test]
    fn adjacency_slots() {
        let m = tetrahedron();
        let adj = ring_adjacency(&m, &[0, 1, 2]).unwrap();
        assert_eq!(adj.rings(), vec![0, 1, 2]);
        for i in 0..4 {
            assert_eq!(adj.slots()[0].row(i), &[i]);
            assert_eq!(adj.slots()[1].row(i).len(), 3);
            assert!(adj.slots()[2].row(i).is_empty());
        }
        assert!(matches!(ring_adjacency(&m, &[]), Err(Error::EmptyRings)));
    }

    #[test]
    fn non_contiguous_rings() {
        let m = strip(12);
        let adj = ring_adjacency(&m, &[0, 4, 8]).unwrap();
        assert_eq!(adj.rings(), vec![0, 4, 8]);
        assert_eq!(adj.slot(4).unwrap().row(0), ring_neighbors(&m, 0, 4).unwrap().as_slice());
        assert_eq!(adj.slot(8).unwrap().row(0), &[16, 17]);
        assert!(adj.slot(2).is_none());
    }

    #[test]
    fn disconnected_components_stop_rings() {
        let m = Mesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0, 0.0, 0.0], [6.0, 0.0, 0.0], [5.0, 1.0, 0.0]],
            None,
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        assert_eq!(ring_neighbors(&m, 0, 1).unwrap(), vec![1, 2]);
        assert!(ring_neighbors(&m, 0, 2).unwrap().is_empty());
    }
}
