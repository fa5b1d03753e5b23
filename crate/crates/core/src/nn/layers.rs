use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::vertex_rows;
use crate::nn::{ops, Tensor};

/// He-uniform initialization: `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
fn he_uniform<R: Rng + ?Sized>(rng: &mut R, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

/// Convolution whose kernel spans the `slots` ring slots of an expanded
/// tensor and has width one along the vertex axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvRingLayer {
    /// `[slots, 1, c_in, c_out]`
    pub kernel: Tensor,
    /// `[c_out]`
    pub bias: Tensor,
}

impl ConvRingLayer {
    pub fn new(kernel: Tensor, bias: Tensor) -> Result<Self> {
        match (kernel.shape(), bias.shape()) {
            (&[_, 1, _, o], &[b]) if o == b => Ok(ConvRingLayer { kernel, bias }),
            (k, b) => Err(Error::Shape(format!(
                "conv kernel {k:?} with bias {b:?}"
            ))),
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, slots: usize, c_in: usize, c_out: usize) -> Self {
        ConvRingLayer {
            kernel: he_uniform(rng, vec![slots, 1, c_in, c_out], slots * c_in),
            bias: Tensor::zeros(vec![c_out]),
        }
    }

    pub fn slots(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[3]
    }
}

/// Affine map applied to every vertex row independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[c_in, c_out]`
    pub weights: Tensor,
    /// `[c_out]`
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        match (weights.shape(), bias.shape()) {
            (&[_, o], &[b]) if o == b => Ok(DenseLayer { weights, bias }),
            (w, b) => Err(Error::Shape(format!("dense weights {w:?} with bias {b:?}"))),
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, c_in: usize, c_out: usize) -> Self {
        DenseLayer {
            weights: he_uniform(rng, vec![c_in, c_out], c_in),
            bias: Tensor::zeros(vec![c_out]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[1]
    }
}

/// `[R, n, c_in] -> [1, n, c_out]`, no activation.
pub fn conv_ring_forward(input: &Tensor, layer: &ConvRingLayer) -> Result<Tensor> {
    let (slots, n, cin) = match *input.shape() {
        [r, n, c] => (r, n, c),
        _ => return Err(Error::Shape(format!("conv input must be [R, n, c], got {:?}", input.shape()))),
    };
    if slots != layer.slots() || cin != layer.in_channels() {
        return Err(Error::Shape(format!(
            "conv input {:?} does not fit kernel {:?}",
            input.shape(),
            layer.kernel.shape()
        )));
    }
    let cout = layer.out_channels();
    let data = ops::ring_affine(input.data(), slots, n, cin, layer.kernel.data(), layer.bias.data(), cout);
    Tensor::from_vec(vec![1, n, cout], data)
}

/// `[n, c_in] -> [n, c_out]` (or the same with a leading unit axis), no activation.
pub fn dense_forward(input: &Tensor, layer: &DenseLayer) -> Result<Tensor> {
    let (n, cin) = vertex_rows(input.shape())?;
    if cin != layer.in_channels() {
        return Err(Error::Shape(format!(
            "dense input {:?} does not fit weights {:?}",
            input.shape(),
            layer.weights.shape()
        )));
    }
    let cout = layer.out_channels();
    let data = ops::ring_affine(input.data(), 1, n, cin, layer.weights.data(), layer.bias.data(), cout);
    let shape = if input.shape().len() == 3 { vec![1, n, cout] } else { vec![n, cout] };
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel_on_slot_zero() {
        let (r, n, c) = (3, 5, 4);
        let mut kernel = Tensor::zeros(vec![r, 1, c, c]);
        for k in 0..c {
            kernel.data_mut()[k * c + k] = 1.0;
        }
        let layer = ConvRingLayer::new(kernel, Tensor::zeros(vec![c])).unwrap();
        let input = Tensor::from_vec(vec![r, n, c], (0..r * n * c).map(|v| v as f64 * 0.5 - 7.0).collect()).unwrap();
        let out = conv_ring_forward(&input, &layer).unwrap();
        assert_eq!(out.shape(), &[1, n, c]);
        assert_eq!(out.data(), &input.data()[..n * c]);
    }

    #[test]
    fn scalar_affine() {
        let layer = ConvRingLayer::new(
            Tensor::from_vec(vec![1, 1, 1, 1], vec![2.0]).unwrap(),
            Tensor::from_vec(vec![1], vec![1.0]).unwrap(),
        )
        .unwrap();
        let out = conv_ring_forward(&Tensor::from_vec(vec![1, 1, 1], vec![3.0]).unwrap(), &layer).unwrap();
        assert_eq!(out.data(), &[7.0]);

        let dense = DenseLayer::new(
            Tensor::from_vec(vec![1, 1], vec![-1.5]).unwrap(),
            Tensor::from_vec(vec![1], vec![0.5]).unwrap(),
        )
        .unwrap();
        let out = dense_forward(&Tensor::from_vec(vec![2, 1], vec![2.0, -4.0]).unwrap(), &dense).unwrap();
        assert_eq!(out.data(), &[-2.5, 6.5]);
    }

    #[test]
    fn dense_identity() {
        let mut w = Tensor::zeros(vec![3, 3]);
        for k in 0..3 {
            w.data_mut()[k * 3 + k] = 1.0;
        }
        let layer = DenseLayer::new(w, Tensor::zeros(vec![3])).unwrap();
        let x = Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, -4.0, 5.0, -6.0]).unwrap();
        assert_eq!(dense_forward(&x, &layer).unwrap(), x);
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = ConvRingLayer::init(&mut rng, 3, 4, 2);
        assert!(conv_ring_forward(&Tensor::zeros(vec![2, 5, 4]), &layer).is_err());
        let dense = DenseLayer::init(&mut rng, 4, 2);
        assert!(dense_forward(&Tensor::zeros(vec![5, 3]), &dense).is_err());
    }

    #[test]
    fn he_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = ConvRingLayer::init(&mut rng, 3, 8, 16);
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(layer.kernel.data().iter().all(|v| v.abs() < limit));
        assert!(layer.bias.data().iter().all(|&v| v == 0.0));
    }
}
