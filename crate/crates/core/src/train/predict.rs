use std::path::Path;

use crate::arch::Network;
use crate::error::{Error, Result};
use crate::features::FeatureSelection;
use crate::mesh::{save_obj, Color, Mesh, VertexLabels};
use crate::nn::sigmoid_scalar;
use crate::train::dataset::Sample;
use crate::train::fit::positive_logits;

pub const POSITIVE_COLOR: Color = [1.0, 0.0, 0.0];
pub const NEGATIVE_COLOR: Color = [0.7, 0.7, 0.7];

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: VertexLabels,
    /// Softmax probability of the positive class per vertex.
    pub probabilities: Vec<f64>,
}

/// Labels every vertex of `mesh` by the larger softmax channel.
pub fn predict(net: &Network, mesh: &Mesh, sel: FeatureSelection) -> Result<Prediction> {
    if sel.width() != net.input_features() {
        return Err(Error::FeatureMismatch {
            expected: net.input_features(),
            found: sel.width(),
        });
    }
    let rings: Vec<usize> = net.required_rings().into_iter().collect();
    let placeholder = VertexLabels::new(vec![0; mesh.vertex_count()])?;
    let sample = Sample::from_mesh("predict", mesh, placeholder, sel, &rings)?;
    let z = positive_logits(net, &sample)?;
    // Two-channel softmax of (a, b) gives sigmoid(b - a) for the second channel.
    let probabilities = z.iter().map(|&v| sigmoid_scalar(v)).collect();
    let labels = VertexLabels::new(z.iter().map(|&v| (v > 0.0) as u8).collect())?;
    Ok(Prediction { labels, probabilities })
}

#[derive(Debug, Clone, Copy)]
pub enum ColorSource<'a> {
    /// Red for label 1, gray otherwise.
    Labels(&'a VertexLabels),
    /// Linear blend from gray at `p = 0` to red at `p = 1`.
    Probabilities(&'a [f64]),
}

/// Gray-to-red blend for a probability, clamped to `[0, 1]`.
pub fn probability_color(p: f64) -> Color {
    let p = p.clamp(0.0, 1.0);
    std::array::from_fn(|c| NEGATIVE_COLOR[c] + p * (POSITIVE_COLOR[c] - NEGATIVE_COLOR[c]))
}

/// Copy of `mesh` with vertex colors taken from `source`.
pub fn colored_mesh(mesh: &Mesh, source: ColorSource<'_>) -> Result<Mesh> {
    let colors: Vec<Color> = match source {
        ColorSource::Labels(labels) => labels
            .as_slice()
            .iter()
            .map(|&l| if l == 1 { POSITIVE_COLOR } else { NEGATIVE_COLOR })
            .collect(),
        ColorSource::Probabilities(p) => p.iter().map(|&p| probability_color(p)).collect(),
    };
    mesh.with_colors(Some(colors))
}

/// Writes `mesh` as a colored OBJ. Label colors survive
/// `load_obj` + `labels_from_colors` unchanged.
pub fn export_colored_mesh(mesh: &Mesh, source: ColorSource<'_>, path: impl AsRef<Path>) -> Result<()> {
    save_obj(&colored_mesh(mesh, source)?, path)
}
