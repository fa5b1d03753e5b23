//! The expanding layer.
//!
//! Maps an `n x m` feature matrix to an `R x n x m` tensor whose slot `s`
//! holds, for every vertex, the mean feature row over ring `rings[s]` around
//! it. Each slot is one multiply by the row-normalized ring membership
//! matrix, so the dense `slot x vertex x feature x vertex` product is never
//! formed. Vertices with an empty ring get a zero row in that slot.

use crate::error::{Error, Result};
use crate::mesh::RingAdjacency;
use crate::nn::Tensor;

/// `R x n x m` per-ring mean features.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedTensor {
    rings: Vec<usize>,
    vertices: usize,
    features: usize,
    data: Vec<f64>,
}

impl ExpandedTensor {
    pub fn rings(&self) -> &[usize] {
        &self.rings
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Slot `s` as a flat `n x m` row-major block.
    pub fn slot(&self, s: usize) -> &[f64] {
        let block = self.vertices * self.features;
        &self.data[s * block..(s + 1) * block]
    }

    #[inline]
    pub fn get(&self, s: usize, i: usize, c: usize) -> f64 {
        self.data[(s * self.vertices + i) * self.features + c]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            vec![self.rings.len(), self.vertices, self.features],
            self.data.clone(),
        )
        .expect("expanded tensor shape is consistent")
    }
}

/// `(n, c)` for a `[n, c]` or `[1, n, c]` shape.
pub(crate) fn vertex_rows(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [n, c] => Ok((n, c)),
        [1, n, c] => Ok((n, c)),
        _ => Err(Error::Shape(format!(
            "expected [n, c] or [1, n, c], got {shape:?}"
        ))),
    }
}

fn check_rings(adj: &RingAdjacency, n: usize, rings: &[usize]) -> Result<()> {
    if adj.vertex_count() != n {
        return Err(Error::Shape(format!(
            "feature rows ({n}) do not match adjacency vertices ({})",
            adj.vertex_count()
        )));
    }
    if rings.is_empty() {
        return Err(Error::EmptyRings);
    }
    for &ring in rings {
        if !adj.contains_ring(ring) {
            return Err(Error::RingAbsent { ring });
        }
    }
    Ok(())
}

/// Forward kernel: `x` is `n x m` row-major, output is `rings.len() x n x m`.
pub fn expand_raw(x: &[f64], n: usize, m: usize, adj: &RingAdjacency, rings: &[usize]) -> Result<Vec<f64>> {
    check_rings(adj, n, rings)?;
    if x.len() != n * m {
        return Err(Error::Shape(format!("{} values for {n} x {m} features", x.len())));
    }
    let mut out = vec![0.0; rings.len() * n * m];
    for (s, &ring) in rings.iter().enumerate() {
        let slot = adj.slot(ring).expect("checked above");
        let block = &mut out[s * n * m..(s + 1) * n * m];
        for i in 0..n {
            let members = slot.row(i);
            if members.is_empty() {
                continue;
            }
            let weight = 1.0 / members.len() as f64;
            let dst = &mut block[i * m..(i + 1) * m];
            for &j in members {
                for (d, &v) in dst.iter_mut().zip(&x[j * m..(j + 1) * m]) {
                    *d += v;
                }
            }
            for d in dst.iter_mut() {
                *d *= weight;
            }
        }
    }
    Ok(out)
}

/// Transpose of [`expand_raw`]: scatters `rings.len() x n x m` gradients back
/// onto the `n x m` input.
pub fn expand_backward_raw(
    grad_out: &[f64],
    n: usize,
    m: usize,
    adj: &RingAdjacency,
    rings: &[usize],
) -> Result<Vec<f64>> {
    check_rings(adj, n, rings)?;
    if grad_out.len() != rings.len() * n * m {
        return Err(Error::Shape(format!(
            "{} gradient values for {} x {n} x {m}",
            grad_out.len(),
            rings.len()
        )));
    }
    let mut grad_x = vec![0.0; n * m];
    for (s, &ring) in rings.iter().enumerate() {
        let slot = adj.slot(ring).expect("checked above");
        let block = &grad_out[s * n * m..(s + 1) * n * m];
        for i in 0..n {
            let members = slot.row(i);
            if members.is_empty() {
                continue;
            }
            let weight = 1.0 / members.len() as f64;
            let g = &block[i * m..(i + 1) * m];
            for &j in members {
                for (d, &v) in grad_x[j * m..(j + 1) * m].iter_mut().zip(g) {
                    *d += weight * v;
                }
            }
        }
    }
    Ok(grad_x)
}

/// Expands `x` (`[n, m]` or `[1, n, m]`) over every slot of `adj`.
pub fn expand(x: &Tensor, adj: &RingAdjacency) -> Result<ExpandedTensor> {
    expand_rings(x, adj, &adj.rings())
}

/// Expands `x` over the given ring numbers, each of which must be in `adj`.
pub fn expand_rings(x: &Tensor, adj: &RingAdjacency, rings: &[usize]) -> Result<ExpandedTensor> {
    let (n, m) = vertex_rows(x.shape())?;
    let data = expand_raw(x.data(), n, m, adj, rings)?;
    Ok(ExpandedTensor {
        rings: rings.to_vec(),
        vertices: n,
        features: m,
        data,
    })
}

/// Selects slots by ring number, in the order of `wanted`.
pub fn expand_slice(c: &ExpandedTensor, wanted: &[usize]) -> Result<ExpandedTensor> {
    if wanted.is_empty() {
        return Err(Error::EmptyRings);
    }
    let mut data = Vec::with_capacity(wanted.len() * c.vertices * c.features);
    for &ring in wanted {
        let s = c
            .rings
            .iter()
            .position(|&r| r == ring)
            .ok_or(Error::RingAbsent { ring })?;
        data.extend_from_slice(c.slot(s));
    }
    Ok(ExpandedTensor {
        rings: wanted.to_vec(),
        vertices: c.vertices,
        features: c.features,
        data,
    })
}
