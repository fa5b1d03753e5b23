//! Elementwise activations, the weighted logit loss and the ring-affine kernel
//! shared by ring convolutions and per-vertex dense layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub fn relu(t: &Tensor) -> Tensor {
    t.map(|v| v.max(0.0))
}

#[inline]
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(t: &Tensor) -> Tensor {
    t.map(sigmoid_scalar)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Softmax over the last axis.
pub fn softmax_rows(t: &Tensor) -> Result<Tensor> {
    let width = *t
        .shape()
        .last()
        .ok_or_else(|| Error::Shape("softmax needs at least one axis".into()))?;
    if width == 0 {
        return Err(Error::Shape("softmax over an empty axis".into()));
    }
    let mut out = t.clone();
    for row in out.data_mut().chunks_mut(width) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Which form of the weighted logit cross-entropy to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `-[w t log s(z) + (1 - t) log(1 - s(z))]`
    #[default]
    WeightedCe,
    /// `-[w t log s(z) + (1 - t) (1 - s(z))]`, with the log missing from the
    /// negative term. Kept only for comparison runs.
    PrintedFormula,
}

/// Mean weighted cross-entropy and its gradient with respect to each logit.
pub(crate) fn weighted_ce_with_grad(
    logits: &[f64],
    targets: &[f64],
    pos_weight: f64,
    kind: LossKind,
) -> (f64, Vec<f64>) {
    let n = logits.len().max(1) as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(targets) {
        let s = sigmoid_scalar(z);
        // -log s(z) = softplus(-z), -log(1 - s(z)) = softplus(z)
        let pos = pos_weight * t * softplus(-z);
        let pos_grad = pos_weight * t * (s - 1.0);
        let (neg, neg_grad) = match kind {
            LossKind::WeightedCe => ((1.0 - t) * softplus(z), (1.0 - t) * s),
            LossKind::PrintedFormula => (-(1.0 - t) * (1.0 - s), (1.0 - t) * s * (1.0 - s)),
        };
        total += pos + neg;
        grad.push((pos_grad + neg_grad) / n);
    }
    (total / n, grad)
}

/// Mean over vertices of `-[w t log s(z) + (1 - t) log(1 - s(z))]`.
pub fn weighted_ce_loss(logits: &[f64], targets: &[u8], pos_weight: f64) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logits for {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let targets: Vec<f64> = targets.iter().map(|&t| t as f64).collect();
    Ok(weighted_ce_with_grad(logits, &targets, pos_weight, LossKind::WeightedCe).0)
}

/// `out[i, o] = bias[o] + sum_{r, c} input[r, i, c] * kernel[r, c, o]` for
/// `input` laid out `slots x n x cin` and `kernel` laid out `slots x cin x cout`.
pub(crate) fn ring_affine(
    input: &[f64],
    slots: usize,
    n: usize,
    cin: usize,
    kernel: &[f64],
    bias: &[f64],
    cout: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; n * cout];
    for i in 0..n {
        let dst = &mut out[i * cout..(i + 1) * cout];
        dst.copy_from_slice(bias);
        for r in 0..slots {
            let src = &input[(r * n + i) * cin..(r * n + i + 1) * cin];
            for (c, &a) in src.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let k = &kernel[(r * cin + c) * cout..(r * cin + c + 1) * cout];
                for (d, &w) in dst.iter_mut().zip(k) {
                    *d += a * w;
                }
            }
        }
    }
    out
}

pub(crate) struct AffineGrads {
    pub input: Vec<f64>,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn ring_affine_backward(
    input: &[f64],
    slots: usize,
    n: usize,
    cin: usize,
    kernel: &[f64],
    cout: usize,
    grad_out: &[f64],
) -> AffineGrads {
    let mut g_in = vec![0.0; slots * n * cin];
    let mut g_k = vec![0.0; slots * cin * cout];
    let mut g_b = vec![0.0; cout];
    for i in 0..n {
        let g = &grad_out[i * cout..(i + 1) * cout];
        for (b, &v) in g_b.iter_mut().zip(g) {
            *b += v;
        }
        for r in 0..slots {
            let base = (r * n + i) * cin;
            for c in 0..cin {
                let a = input[base + c];
                let row = (r * cin + c) * cout;
                let k = &kernel[row..row + cout];
                let mut acc = 0.0;
                for (&w, &v) in k.iter().zip(g) {
                    acc += w * v;
                }
                g_in[base + c] = acc;
                if a != 0.0 {
                    for (gk, &v) in g_k[row..row + cout].iter_mut().zip(g) {
                        *gk += a * v;
                    }
                }
            }
        }
    }
    AffineGrads {
        input: g_in,
        kernel: g_k,
        bias: g_b,
    }
}
