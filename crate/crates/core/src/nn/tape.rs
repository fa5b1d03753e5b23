//! A small reverse-mode tape over [`Tensor`]s.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in reverse creation
//! order, which is a valid topological order because a node can only refer to
//! nodes created before it.

use crate::error::{Error, Result};
use crate::expansion::{expand_backward_raw, expand_raw, vertex_rows};
use crate::mesh::RingAdjacency;
use crate::nn::ops::{self, LossKind};
use crate::nn::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a> {
    Leaf,
    Expand {
        input: Var,
        adj: &'a RingAdjacency,
        rings: Vec<usize>,
    },
    ConvRing {
        input: Var,
        kernel: Var,
        bias: Var,
    },
    Dense {
        input: Var,
        weights: Var,
        bias: Var,
    },
    Relu(Var),
    LogitDiff(Var),
    WeightedCe {
        logits: Var,
        grad: Vec<f64>,
    },
    Dot {
        input: Var,
        weights: Vec<f64>,
    },
}

struct Node<'a> {
    value: Tensor,
    op: Op<'a>,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every node of the tape that
/// influences it.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like it if `v` did not influence the loss.
    pub fn take_or_zeros(&mut self, v: Var, shape: &[usize]) -> Tensor {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}

fn accumulate(slot: &mut Option<Tensor>, shape: &[usize], delta: &[f64]) {
    match slot {
        Some(t) => {
            for (a, &d) in t.data_mut().iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => {
            *slot = Some(Tensor::from_vec(shape.to_vec(), delta.to_vec()).expect("gradient shape"));
        }
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op<'a>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node<'a>> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| Error::Tape(format!("variable {} is not on this tape", v.0)))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Per-ring mean features; `input` is `[n, m]` or `[1, n, m]`, the result
    /// is `[rings.len(), n, m]`.
    pub fn expand(&mut self, input: Var, adj: &'a RingAdjacency, rings: &[usize]) -> Result<Var> {
        let x = &self.node(input)?.value;
        let (n, m) = vertex_rows(x.shape())?;
        let data = expand_raw(x.data(), n, m, adj, rings)?;
        let value = Tensor::from_vec(vec![rings.len(), n, m], data)?;
        Ok(self.push(
            value,
            Op::Expand {
                input,
                adj,
                rings: rings.to_vec(),
            },
        ))
    }

    /// Ring convolution: `input` is `[R, n, cin]`, `kernel` is
    /// `[R, 1, cin, cout]`, `bias` is `[cout]`; the result is `[1, n, cout]`.
    pub fn conv_ring(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let x = &self.node(input)?.value;
        let k = &self.node(kernel)?.value;
        let b = &self.node(bias)?.value;
        let (slots, n, cin) = match *x.shape() {
            [r, n, c] => (r, n, c),
            [n, c] => (1, n, c),
            _ => return Err(Error::Shape(format!("conv input must be [R, n, c], got {:?}", x.shape()))),
        };
        let cout = match *k.shape() {
            [r, 1, c, o] if r == slots && c == cin => o,
            _ => {
                return Err(Error::Shape(format!(
                    "conv kernel {:?} does not fit input {:?}",
                    k.shape(),
                    x.shape()
                )))
            }
        };
        if b.shape() != [cout] {
            return Err(Error::Shape(format!("conv bias {:?}, expected [{cout}]", b.shape())));
        }
        let data = ops::ring_affine(x.data(), slots, n, cin, k.data(), b.data(), cout);
        let value = Tensor::from_vec(vec![1, n, cout], data)?;
        Ok(self.push(value, Op::ConvRing { input, kernel, bias }))
    }

    /// Per-vertex affine map; `input` is `[n, cin]` or `[1, n, cin]` and the
    /// result keeps the input's rank.
    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let x = &self.node(input)?.value;
        let w = &self.node(weights)?.value;
        let b = &self.node(bias)?.value;
        let (n, cin) = vertex_rows(x.shape())?;
        let cout = match *w.shape() {
            [c, o] if c == cin => o,
            _ => {
                return Err(Error::Shape(format!(
                    "dense weights {:?} do not fit input {:?}",
                    w.shape(),
                    x.shape()
                )))
            }
        };
        if b.shape() != [cout] {
            return Err(Error::Shape(format!("dense bias {:?}, expected [{cout}]", b.shape())));
        }
        let data = ops::ring_affine(x.data(), 1, n, cin, w.data(), b.data(), cout);
        let shape = if x.shape().len() == 3 { vec![1, n, cout] } else { vec![n, cout] };
        let value = Tensor::from_vec(shape, data)?;
        Ok(self.push(value, Op::Dense { input, weights, bias }))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let value = ops::relu(&self.node(input)?.value);
        Ok(self.push(value, Op::Relu(input)))
    }

    /// Positive-class logit `channel1 - channel0` from `[n, 2]` or `[1, n, 2]`.
    pub fn logit_diff(&mut self, input: Var) -> Result<Var> {
        let x = &self.node(input)?.value;
        let (n, c) = vertex_rows(x.shape())?;
        if c != 2 {
            return Err(Error::Shape(format!("logit head needs 2 channels, got {c}")));
        }
        let data = x.data().chunks(2).map(|row| row[1] - row[0]).collect();
        let value = Tensor::from_vec(vec![n], data)?;
        Ok(self.push(value, Op::LogitDiff(input)))
    }

    /// Mean weighted logit cross-entropy against binary `targets`.
    pub fn weighted_ce(&mut self, logits: Var, targets: &[u8], pos_weight: f64, kind: LossKind) -> Result<Var> {
        let z = &self.node(logits)?.value;
        if z.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} logits for {} targets",
                z.len(),
                targets.len()
            )));
        }
        let targets: Vec<f64> = targets.iter().map(|&t| t as f64).collect();
        let (loss, grad) = ops::weighted_ce_with_grad(z.data(), &targets, pos_weight, kind);
        Ok(self.push(Tensor::scalar(loss), Op::WeightedCe { logits, grad }))
    }

    /// `sum(input * weights)` for a fixed `weights` array; handy for probing
    /// gradients of intermediate values.
    pub fn dot(&mut self, input: Var, weights: &[f64]) -> Result<Var> {
        let x = &self.node(input)?.value;
        if x.len() != weights.len() {
            return Err(Error::Shape(format!("dot of {} and {} values", x.len(), weights.len())));
        }
        let value = x.data().iter().zip(weights).map(|(a, b)| a * b).sum();
        Ok(self.push(
            Tensor::scalar(value),
            Op::Dot {
                input,
                weights: weights.to_vec(),
            },
        ))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Tape("backward called before any forward operation".into()));
        }
        let root = self.node(loss)?;
        if root.value.len() != 1 {
            return Err(Error::Tape(format!(
                "backward needs a scalar, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(root.value.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Expand { input, adj, rings } => {
                    let x = &self.nodes[input.0].value;
                    let (n, m) = vertex_rows(x.shape())?;
                    let gx = expand_backward_raw(g.data(), n, m, adj, rings)?;
                    accumulate(&mut grads[input.0], x.shape(), &gx);
                }
                Op::ConvRing { input, kernel, bias } => {
                    let x = &self.nodes[input.0].value;
                    let k = &self.nodes[kernel.0].value;
                    let (slots, n, cin) = match *x.shape() {
                        [r, n, c] => (r, n, c),
                        [n, c] => (1, n, c),
                        _ => unreachable!("validated in forward"),
                    };
                    let cout = k.shape()[3];
                    let ag = ops::ring_affine_backward(x.data(), slots, n, cin, k.data(), cout, g.data());
                    accumulate(&mut grads[input.0], x.shape(), &ag.input);
                    accumulate(&mut grads[kernel.0], k.shape(), &ag.kernel);
                    accumulate(&mut grads[bias.0], &[cout], &ag.bias);
                }
                Op::Dense { input, weights, bias } => {
                    let x = &self.nodes[input.0].value;
                    let w = &self.nodes[weights.0].value;
                    let (n, cin) = vertex_rows(x.shape())?;
                    let cout = w.shape()[1];
                    let ag = ops::ring_affine_backward(x.data(), 1, n, cin, w.data(), cout, g.data());
                    accumulate(&mut grads[input.0], x.shape(), &ag.input);
                    accumulate(&mut grads[weights.0], w.shape(), &ag.kernel);
                    accumulate(&mut grads[bias.0], &[cout], &ag.bias);
                }
                Op::Relu(input) => {
                    let x = &self.nodes[input.0].value;
                    let gx: Vec<f64> = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[input.0], x.shape(), &gx);
                }
                Op::LogitDiff(input) => {
                    let x = &self.nodes[input.0].value;
                    let gx: Vec<f64> = g.data().iter().flat_map(|&d| [-d, d]).collect();
                    accumulate(&mut grads[input.0], x.shape(), &gx);
                }
                Op::WeightedCe { logits, grad } => {
                    let z = &self.nodes[logits.0].value;
                    let scale = g.data()[0];
                    let gz: Vec<f64> = grad.iter().map(|&d| d * scale).collect();
                    accumulate(&mut grads[logits.0], z.shape(), &gz);
                }
                Op::Dot { input, weights } => {
                    let x = &self.nodes[input.0].value;
                    let scale = g.data()[0];
                    let gx: Vec<f64> = weights.iter().map(|&w| w * scale).collect();
                    accumulate(&mut grads[input.0], x.shape(), &gx);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}
