//! Network specifications, the six preset stacks, and instantiated networks.
//!
//! Every preset follows the same channel ladder, 16x2, 32x3, 64x3, 32x3,
//! 16x2, 4x2 and 2x1, and differs only in which rings each block expands
//! over. `E` replaces the last two blocks of `D` with per-vertex dense
//! layers 128, 512, 128 and 2.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSelection;
use crate::mesh::RingAdjacency;
use crate::nn::{softmax_rows, ConvRingLayer, DenseLayer, Tape, Tensor, Var};

const LADDER: [(usize, usize); 7] = [(16, 2), (32, 3), (64, 3), (32, 3), (16, 2), (4, 2), (2, 1)];
const RINGS_012: [usize; 3] = [0, 1, 2];
const RINGS_024: [usize; 3] = [0, 2, 4];
const RINGS_048: [usize; 3] = [0, 4, 8];
const D_RINGS: [[usize; 3]; 7] = [RINGS_012, RINGS_024, RINGS_048, RINGS_024, RINGS_012, RINGS_012, RINGS_012];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Expand over three rings, then a ring convolution collapsing them.
    ExpandConv,
    /// Ring convolution over the single unexpanded slot.
    ConvOnly,
    /// Per-vertex fully connected layer.
    Dense,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rings: Vec<usize>,
    pub out_channels: usize,
    #[serde(default = "one")]
    pub repeat: usize,
}

impl LayerSpec {
    pub fn expand_conv(rings: &[usize], out_channels: usize, repeat: usize) -> Self {
        LayerSpec {
            kind: LayerKind::ExpandConv,
            rings: rings.to_vec(),
            out_channels,
            repeat,
        }
    }

    pub fn conv_only(out_channels: usize, repeat: usize) -> Self {
        LayerSpec {
            kind: LayerKind::ConvOnly,
            rings: Vec::new(),
            out_channels,
            repeat,
        }
    }

    pub fn dense(out_channels: usize, repeat: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Dense,
            rings: Vec::new(),
            out_channels,
            repeat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchName {
    Baseline,
    A,
    B,
    C,
    D,
    E,
    Custom,
}

impl ArchName {
    pub const PRESETS: [ArchName; 6] = [
        ArchName::Baseline,
        ArchName::A,
        ArchName::B,
        ArchName::C,
        ArchName::D,
        ArchName::E,
    ];
}

impl fmt::Display for ArchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchName::Baseline => "baseline",
            ArchName::A => "a",
            ArchName::B => "b",
            ArchName::C => "c",
            ArchName::D => "d",
            ArchName::E => "e",
            ArchName::Custom => "custom",
        })
    }
}

impl FromStr for ArchName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(ArchName::Baseline),
            "a" => Ok(ArchName::A),
            "b" => Ok(ArchName::B),
            "c" => Ok(ArchName::C),
            "d" => Ok(ArchName::D),
            "e" => Ok(ArchName::E),
            "custom" => Ok(ArchName::Custom),
            _ => Err(Error::UnknownArchitecture(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: ArchName,
    pub input_features: usize,
    pub layers: Vec<LayerSpec>,
}

/// Preset stack `name` for `input_features` input columns.
pub fn preset(name: ArchName, input_features: usize) -> Result<NetworkSpec> {
    let layers = match name {
        ArchName::Baseline => LADDER
            .iter()
            .map(|&(c, r)| LayerSpec::conv_only(c, r))
            .collect(),
        ArchName::A | ArchName::B | ArchName::C => {
            let rings = match name {
                ArchName::A => RINGS_012,
                ArchName::B => RINGS_024,
                _ => RINGS_048,
            };
            LADDER
                .iter()
                .map(|&(c, r)| LayerSpec::expand_conv(&rings, c, r))
                .collect()
        }
        ArchName::D => LADDER
            .iter()
            .zip(D_RINGS)
            .map(|(&(c, r), rings)| LayerSpec::expand_conv(&rings, c, r))
            .collect(),
        ArchName::E => {
            let mut layers: Vec<LayerSpec> = LADDER[..5]
                .iter()
                .zip(D_RINGS)
                .map(|(&(c, r), rings)| LayerSpec::expand_conv(&rings, c, r))
                .collect();
            layers.extend([128, 512, 128, 2].map(|c| LayerSpec::dense(c, 1)));
            layers
        }
        ArchName::Custom => {
            return Err(Error::InvalidSpec(
                "custom networks have no preset; supply the layer list".into(),
            ))
        }
    };
    let spec = NetworkSpec {
        name,
        input_features,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

impl NetworkSpec {
    pub fn custom(input_features: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec {
            name: ArchName::Custom,
            input_features,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_features == 0 {
            return Err(Error::InvalidSpec("input_features must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.out_channels == 0 {
                return Err(Error::InvalidSpec(format!("layer {k} has zero output channels")));
            }
            if layer.repeat == 0 {
                return Err(Error::InvalidSpec(format!("layer {k} has zero repeat count")));
            }
            match layer.kind {
                LayerKind::ExpandConv => {
                    if layer.rings.len() != 3 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {k} expands over {} rings, expected 3",
                            layer.rings.len()
                        )));
                    }
                    let allowed = [RINGS_012, RINGS_024, RINGS_048];
                    if self.name != ArchName::Custom && !allowed.iter().any(|r| r[..] == layer.rings[..]) {
                        return Err(Error::InvalidSpec(format!(
                            "layer {k} rings {:?} are not a preset ring set",
                            layer.rings
                        )));
                    }
                }
                LayerKind::ConvOnly | LayerKind::Dense => {
                    if !layer.rings.is_empty() {
                        return Err(Error::InvalidSpec(format!("layer {k} does not expand but lists rings")));
                    }
                }
            }
        }
        let last = self.layers.last().expect("non-empty");
        if last.out_channels != 2 {
            return Err(Error::InvalidSpec(format!(
                "final layer must emit 2 channels, got {}",
                last.out_channels
            )));
        }
        Ok(())
    }

    /// Every ring number any expanding layer reads; empty for networks
    /// without expansions.
    pub fn required_rings(&self) -> BTreeSet<usize> {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::ExpandConv)
            .flat_map(|l| l.rings.iter().copied())
            .collect()
    }

    /// Number of individual layers after unrolling repeats.
    pub fn depth(&self) -> usize {
        self.layers.iter().map(|l| l.repeat).sum()
    }

    pub fn parameter_count(&self) -> usize {
        let mut c_in = self.input_features;
        let mut total = 0;
        for layer in &self.layers {
            for _ in 0..layer.repeat {
                let slots = match layer.kind {
                    LayerKind::ExpandConv => layer.rings.len(),
                    _ => 1,
                };
                total += slots * c_in * layer.out_channels + layer.out_channels;
                c_in = layer.out_channels;
            }
        }
        total
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: NetworkSpec =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("network spec serializes")
    }

    /// Reads a spec from a `.json` or TOML file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let spec: NetworkSpec = serde_json::from_str(&text)?;
            spec.validate()?;
            Ok(spec)
        } else {
            Self::from_toml_str(&text)
        }
    }
}

/// One unrolled layer with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    ExpandConv { rings: Vec<usize>, conv: ConvRingLayer },
    Conv { conv: ConvRingLayer },
    Dense { dense: DenseLayer },
}

impl Layer {
    fn out_channels(&self) -> usize {
        match self {
            Layer::ExpandConv { conv, .. } | Layer::Conv { conv } => conv.out_channels(),
            Layer::Dense { dense } => dense.out_channels(),
        }
    }
}

/// Tape handles produced by [`Network::record`].
pub struct Recorded {
    /// `[1, n, 2]` raw two-channel output.
    pub logits: Var,
    /// Parameter leaves, in [`Network::params`] order.
    pub params: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

impl Network {
    /// Builds the network with He-uniform weights and zero biases drawn from
    /// a ChaCha stream seeded by `seed`.
    pub fn instantiate(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.depth());
        let mut c_in = spec.input_features;
        for layer in &spec.layers {
            for _ in 0..layer.repeat {
                let c_out = layer.out_channels;
                layers.push(match layer.kind {
                    LayerKind::ExpandConv => Layer::ExpandConv {
                        rings: layer.rings.clone(),
                        conv: ConvRingLayer::init(&mut rng, layer.rings.len(), c_in, c_out),
                    },
                    LayerKind::ConvOnly => Layer::Conv {
                        conv: ConvRingLayer::init(&mut rng, 1, c_in, c_out),
                    },
                    LayerKind::Dense => Layer::Dense {
                        dense: DenseLayer::init(&mut rng, c_in, c_out),
                    },
                });
                c_in = c_out;
            }
        }
        Ok(Network {
            spec: spec.clone(),
            layers,
        })
    }

    /// Reassembles a network from a spec and its unrolled layers, checking
    /// that they agree.
    pub fn from_parts(spec: NetworkSpec, layers: Vec<Layer>) -> Result<Self> {
        let template = Network::instantiate(&spec, 0)?;
        if template.layers.len() != layers.len() {
            return Err(Error::InvalidSpec(format!(
                "spec unrolls to {} layers, got {}",
                template.layers.len(),
                layers.len()
            )));
        }
        let net = Network { spec, layers };
        for (k, (a, b)) in template.params().iter().zip(net.params()).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::InvalidSpec(format!(
                    "parameter {k} has shape {:?}, spec needs {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        let kinds_match = template.layers.iter().zip(&net.layers).all(|pair| match pair {
            (Layer::ExpandConv { rings: r1, .. }, Layer::ExpandConv { rings: r2, .. }) => r1 == r2,
            (Layer::Conv { .. }, Layer::Conv { .. }) | (Layer::Dense { .. }, Layer::Dense { .. }) => true,
            _ => false,
        });
        if !kinds_match {
            return Err(Error::InvalidSpec("layer kinds do not match the spec".into()));
        }
        net.spec.validate()?;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_features(&self) -> usize {
        self.spec.input_features
    }

    pub fn required_rings(&self) -> BTreeSet<usize> {
        self.spec.required_rings()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            match layer {
                Layer::ExpandConv { conv, .. } | Layer::Conv { conv } => {
                    out.push(&conv.kernel);
                    out.push(&conv.bias);
                }
                Layer::Dense { dense } => {
                    out.push(&dense.weights);
                    out.push(&dense.bias);
                }
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            match layer {
                Layer::ExpandConv { conv, .. } | Layer::Conv { conv } => {
                    out.push(&mut conv.kernel);
                    out.push(&mut conv.bias);
                }
                Layer::Dense { dense } => {
                    out.push(&mut dense.weights);
                    out.push(&mut dense.bias);
                }
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Records the forward pass on `tape`. `features` is `[n, m]` or
    /// `[1, n, m]`; `adj` must cover [`Network::required_rings`] when the
    /// network expands.
    pub fn record<'a>(&self, tape: &mut Tape<'a>, features: &Tensor, adj: Option<&'a RingAdjacency>) -> Result<Recorded> {
        let (n, m) = crate::expansion::vertex_rows(features.shape())?;
        if m != self.spec.input_features {
            return Err(Error::FeatureMismatch {
                expected: self.spec.input_features,
                found: m,
            });
        }
        let mut h = tape.leaf(features.clone().reshape(vec![1, n, m])?);
        let mut params = Vec::with_capacity(self.layers.len() * 2);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = match layer {
                Layer::ExpandConv { rings, conv } => {
                    let adj = adj.ok_or_else(|| {
                        Error::InvalidConfig("network expands rings but no adjacency was given".into())
                    })?;
                    let expanded = tape.expand(h, adj, rings)?;
                    let kernel = tape.leaf(conv.kernel.clone());
                    let bias = tape.leaf(conv.bias.clone());
                    params.extend([kernel, bias]);
                    tape.conv_ring(expanded, kernel, bias)?
                }
                Layer::Conv { conv } => {
                    let kernel = tape.leaf(conv.kernel.clone());
                    let bias = tape.leaf(conv.bias.clone());
                    params.extend([kernel, bias]);
                    tape.conv_ring(h, kernel, bias)?
                }
                Layer::Dense { dense } => {
                    let weights = tape.leaf(dense.weights.clone());
                    let bias = tape.leaf(dense.bias.clone());
                    params.extend([weights, bias]);
                    tape.dense(h, weights, bias)?
                }
            };
            if k != last {
                h = tape.relu(h)?;
            }
        }
        debug_assert_eq!(self.layers[last].out_channels(), 2);
        Ok(Recorded { logits: h, params })
    }

    /// `[n, 2]` raw outputs.
    pub fn logits(&self, features: &Tensor, adj: Option<&RingAdjacency>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let rec = self.record(&mut tape, features, adj)?;
        let out = tape.value(rec.logits).clone();
        let n = out.shape()[1];
        out.reshape(vec![n, 2])
    }

    /// `[n, 2]` softmax probabilities; column 1 is the positive class.
    pub fn probabilities(&self, features: &Tensor, adj: Option<&RingAdjacency>) -> Result<Tensor> {
        softmax_rows(&self.logits(features, adj)?)
    }

    pub fn to_checkpoint(&self, features: FeatureSelection, step: usize) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            step,
            features,
            spec: self.spec.clone(),
            layers: self.layers.clone(),
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "meshcnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: the spec, the feature selection the network was trained
/// on, and every layer's parameters. Floats are written in shortest
/// round-trip form, so save/load is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub step: usize,
    pub features: FeatureSelection,
    pub spec: NetworkSpec,
    pub layers: Vec<Layer>,
}

impl Checkpoint {
    pub fn network(&self) -> Result<Network> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.features.width() != self.spec.input_features {
            return Err(Error::Checkpoint(format!(
                "feature selection {} has {} columns but the network takes {}",
                self.features,
                self.features.width(),
                self.spec.input_features
            )));
        }
        Network::from_parts(self.spec.clone(), self.layers.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_a_layers() {
        let spec = preset(ArchName::A, 5).unwrap();
        assert_eq!(spec.depth(), 16);
        for l in &spec.layers {
            assert_eq!(l.kind, LayerKind::ExpandConv);
            assert_eq!(l.rings, vec![0, 1, 2]);
        }
        let ladder: Vec<_> = spec.layers.iter().map(|l| (l.out_channels, l.repeat)).collect();
        assert_eq!(ladder, LADDER.to_vec());
    }

    #[test]
    fn preset_baseline_has_no_expansions() {
        let spec = preset(ArchName::Baseline, 5).unwrap();
        assert_eq!(spec.depth(), 16);
        assert!(spec.layers.iter().all(|l| l.kind == LayerKind::ConvOnly));
        assert!(spec.required_rings().is_empty());
    }

    #[test]
    fn preset_d_and_e() {
        let d = preset(ArchName::D, 5).unwrap();
        let rings: Vec<_> = d.layers.iter().map(|l| l.rings.clone()).collect();
        assert_eq!(
            rings,
            vec![vec![0, 1, 2], vec![0, 2, 4], vec![0, 4, 8], vec![0, 2, 4], vec![0, 1, 2], vec![0, 1, 2], vec![0, 1, 2]]
        );
        assert_eq!(d.required_rings().into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 4, 8]);

        let e = preset(ArchName::E, 5).unwrap();
        assert_eq!(e.layers[..5], d.layers[..5]);
        let tail: Vec<_> = e.layers[5..].iter().map(|l| (l.kind, l.out_channels)).collect();
        assert_eq!(
            tail,
            vec![(LayerKind::Dense, 128), (LayerKind::Dense, 512), (LayerKind::Dense, 128), (LayerKind::Dense, 2)]
        );
        assert!(preset(ArchName::Custom, 5).is_err());
        assert!("f".parse::<ArchName>().is_err());
        assert_eq!("D".parse::<ArchName>().unwrap(), ArchName::D);
    }

    #[test]
    fn first_kernel_shape() {
        let net = Network::instantiate(&preset(ArchName::D, 5).unwrap(), 0).unwrap();
        assert_eq!(net.params()[0].shape(), &[3, 1, 5, 16]);
        assert_eq!(net.parameter_count(), net.spec().parameter_count());
    }

    #[test]
    fn invalid_specs() {
        let zero = NetworkSpec::custom(5, vec![LayerSpec::expand_conv(&[0, 1, 2], 0, 1), LayerSpec::conv_only(2, 1)]);
        assert!(matches!(zero, Err(Error::InvalidSpec(_))));
        let not_two = NetworkSpec::custom(5, vec![LayerSpec::conv_only(3, 1)]);
        assert!(not_two.is_err());
        let two_rings = NetworkSpec::custom(5, vec![LayerSpec::expand_conv(&[0, 1], 2, 1)]);
        assert!(two_rings.is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let spec = preset(ArchName::E, 8).unwrap();
        let a = Network::instantiate(&spec, 42).unwrap();
        let b = Network::instantiate(&spec, 42).unwrap();
        let c = Network::instantiate(&spec, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = preset(ArchName::E, 5).unwrap();
        let text = spec.to_toml_string();
        assert_eq!(NetworkSpec::from_toml_str(&text).unwrap(), spec);
    }
}
