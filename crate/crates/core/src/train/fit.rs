use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::nn::{ops, sgd_step, LossKind, SgdSchedule, Tape, Tensor};
use crate::train::dataset::{Dataset, Sample};
use crate::train::metrics::{ConfusionCounts, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub schedule: SgdSchedule,
    /// Validate after every this many steps.
    pub eval_every: usize,
    pub loss: LossKind,
    /// Seeds both parameter initialization and the epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: SgdSchedule::default(),
            eval_every: 500,
            loss: LossKind::WeightedCe,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be positive".into()));
        }
        Ok(())
    }
}

/// Metrics recorded at one validation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    /// Counts and mean loss over the training steps since the previous record.
    pub train: MetricsReport,
    pub val: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct BestModel {
    pub step: usize,
    pub metrics: MetricsReport,
    pub network: Network,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EvalRecord>,
    /// Highest validation accuracy seen; earliest wins ties.
    pub best: Option<BestModel>,
    /// Loss of every training step.
    pub losses: Vec<f64>,
}

/// Gradient-descent training, one mesh per step; see [`train_with`].
pub fn train(train_set: &Dataset, val_set: &Dataset, spec: &NetworkSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(train_set, val_set, spec, config, |_, _| Ok(()))
}

/// Runs `config.schedule.total_steps` steps. Meshes are visited in a fresh
/// seeded permutation each epoch. After every `eval_every` steps, and after
/// the last step, the validation split is evaluated and `on_eval` is called
/// with the record and the current network.
pub fn train_with(
    train_set: &Dataset,
    val_set: &Dataset,
    spec: &NetworkSpec,
    config: &TrainConfig,
    mut on_eval: impl FnMut(&EvalRecord, &Network) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit {
            split: train_set.split().to_string(),
        });
    }
    let width = train_set.selection().width();
    if width != spec.input_features {
        return Err(Error::FeatureMismatch {
            expected: spec.input_features,
            found: width,
        });
    }
    let needed = spec.required_rings();
    for s in train_set.samples().iter().chain(val_set.samples()) {
        check_rings(s, &needed)?;
    }

    let mut net = Network::instantiate(spec, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let inputs: Vec<Tensor> = train_set.samples().iter().map(Sample::feature_tensor).collect();
    let schedule = &config.schedule;
    let total = schedule.total_steps;

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut history = Vec::new();
    let mut best: Option<BestModel> = None;
    let mut losses = Vec::with_capacity(total);
    let mut window_counts = ConfusionCounts::default();
    let (mut window_loss, mut window_vertices) = (0.0, 0usize);

    for step in 0..total {
        if cursor == order.len() {
            order = (0..train_set.len()).collect();
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = order[cursor];
        cursor += 1;
        let sample = &train_set.samples()[idx];
        let targets = sample.labels.as_slice();

        let mut tape = Tape::new();
        let rec = net.record(&mut tape, &inputs[idx], sample.adjacency.as_ref())?;
        let z = tape.logit_diff(rec.logits)?;
        let loss = tape.weighted_ce(z, targets, schedule.pos_weight, config.loss)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                mesh: sample.id.clone(),
            });
        }
        let predicted: Vec<u8> = tape.value(z).data().iter().map(|&v| (v > 0.0) as u8).collect();
        window_counts += ConfusionCounts::from_labels(&predicted, targets);
        window_loss += value * targets.len() as f64;
        window_vertices += targets.len();
        losses.push(value);

        let mut grads = tape.backward(loss)?;
        let shapes: Vec<Vec<usize>> = net.params().iter().map(|p| p.shape().to_vec()).collect();
        let grads: Vec<Tensor> = rec
            .params
            .iter()
            .zip(&shapes)
            .map(|(&v, shape)| grads.take_or_zeros(v, shape))
            .collect();
        drop(tape);
        sgd_step(&mut net.params_mut(), &grads, schedule, step)?;

        let done = step + 1;
        if done % config.eval_every == 0 || done == total {
            let train_metrics = MetricsReport::from_counts(window_counts, done)
                .with_loss(window_loss / window_vertices.max(1) as f64);
            let mut val = evaluate(&net, val_set, schedule.pos_weight)?;
            val.step = done;
            let record = EvalRecord {
                step: done,
                train: train_metrics,
                val,
            };
            log::info!(
                "step {done}: train loss {:.4}, val acc {:.4} prec {:.4} rec {:.4}",
                train_metrics.loss.unwrap_or(f64::NAN),
                val.accuracy,
                val.precision,
                val.recall
            );
            if best.as_ref().is_none_or(|b| val.accuracy > b.metrics.accuracy) {
                best = Some(BestModel {
                    step: done,
                    metrics: val,
                    network: net.clone(),
                });
            }
            on_eval(&record, &net)?;
            history.push(record);
            window_counts = ConfusionCounts::default();
            window_loss = 0.0;
            window_vertices = 0;
        }
    }

    Ok(TrainOutcome {
        network: net,
        history,
        best,
        losses,
    })
}

fn check_rings(sample: &Sample, needed: &std::collections::BTreeSet<usize>) -> Result<()> {
    if needed.is_empty() {
        return Ok(());
    }
    let adj = sample.adjacency.as_ref().ok_or_else(|| {
        Error::InvalidConfig(format!("mesh {} has no ring adjacency but the network expands", sample.id))
    })?;
    match needed.iter().find(|&&r| !adj.contains_ring(r)) {
        Some(&ring) => Err(Error::RingAbsent { ring }),
        None => Ok(()),
    }
}

/// Positive-class logit per vertex.
pub(crate) fn positive_logits(net: &Network, sample: &Sample) -> Result<Vec<f64>> {
    let logits = net.logits(&sample.feature_tensor(), sample.adjacency.as_ref())?;
    Ok(logits.data().chunks(2).map(|row| row[1] - row[0]).collect())
}

/// Pooled confusion counts over every vertex of `data`, predicting positive
/// when the positive softmax channel wins. The loss column is the
/// vertex-weighted mean of the weighted cross-entropy. Meshes are processed
/// in parallel; the network is only read.
pub fn evaluate(net: &Network, data: &Dataset, pos_weight: f64) -> Result<MetricsReport> {
    let needed = net.required_rings();
    let per_mesh = data
        .samples()
        .par_iter()
        .map(|s| {
            check_rings(s, &needed)?;
            let z = positive_logits(net, s)?;
            let predicted: Vec<u8> = z.iter().map(|&v| (v > 0.0) as u8).collect();
            let counts = ConfusionCounts::from_labels(&predicted, s.labels.as_slice());
            let loss = ops::weighted_ce_loss(&z, s.labels.as_slice(), pos_weight)?;
            Ok((counts, loss * z.len() as f64, z.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = ConfusionCounts::default();
    let (mut loss, mut vertices) = (0.0, 0usize);
    for (c, l, n) in per_mesh {
        counts += c;
        loss += l;
        vertices += n;
    }
    Ok(MetricsReport::from_counts(counts, 0).with_loss(loss / vertices.max(1) as f64))
}
