use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auprc, Auprc};
use super::train::batches;
use super::{ExperimentError, Result};
use crate::datagen::LabeledDataset;
use crate::diffcore::Tape;
use crate::encoder::{AdamConfig, AdamState, EncoderParams, LinearClassifierParams};
use crate::seeding::{derive_seed, rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub accuracy: f64,
    pub auprc: Auprc,
}

fn softmax_rows(logits: &[f32], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
        let exps: Vec<f64> = row.iter().map(|&v| f64::from(v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / total));
    }
    out
}

/// Trains a linear classifier on fixed `[N, H]` representations and scores
/// it on the test representations.
#[allow(clippy::too_many_arguments)]
pub fn linear_probe(
    train_reps: &[f32],
    train_labels: &[usize],
    test_reps: &[f32],
    test_labels: &[usize],
    dim: usize,
    classes: usize,
    config: &ProbeConfig,
    seed: u64,
) -> Result<ProbeMetrics> {
    if dim == 0 || train_reps.len() != train_labels.len() * dim || test_reps.len() != test_labels.len() * dim {
        return Err(ExperimentError::Metric("representation arrays do not match the label counts".into()));
    }
    if test_labels.is_empty() || config.batch_size == 0 {
        return Err(ExperimentError::Metric("empty test split or zero probe batch size".into()));
    }
    let mut present = vec![false; classes];
    for &l in train_labels {
        *present.get_mut(l).ok_or_else(|| ExperimentError::Metric(format!("label {l} outside {classes} classes")))? = true;
    }
    if let Some(c) = present.iter().position(|p| !p) {
        return Err(ExperimentError::ClassMissing(c));
    }

    let mut classifier = LinearClassifierParams::init(dim, classes, derive_seed(seed, &[stream::PROBE]))?;
    let mut adam = AdamState::new(config.optimizer, &classifier.tensors);
    let n = train_labels.len();
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(seed, &[stream::PROBE, epoch as u64]));
        for batch in batches(&order, config.batch_size) {
            let mut reps = Vec::with_capacity(batch.len() * dim);
            for &i in batch {
                reps.extend_from_slice(&train_reps[i * dim..(i + 1) * dim]);
            }
            let mut tape: Tape<f32> = Tape::new();
            let leaves = classifier.bind(&mut tape)?;
            let r = tape.leaf(&[batch.len(), dim], reps)?;
            let logits = classifier.forward(&mut tape, &leaves, r)?;
            let ce = tape.cross_entropy(logits, batch.iter().map(|&i| train_labels[i]).collect())?;
            let loss = tape.mean(ce)?;
            tape.backward(loss)?;
            let grads: Vec<Vec<f32>> = leaves.iter().map(|&l| tape.grad(l).to_vec()).collect();
            adam.step(&mut classifier.tensors, &grads)?;
        }
    }

    let logits = classifier.classify(test_reps, test_labels.len())?;
    let scores = softmax_rows(&logits, classes);
    Ok(ProbeMetrics { accuracy: accuracy(&scores, test_labels, classes)?, auprc: auprc(&scores, test_labels, classes)? })
}

/// Linear evaluation of a frozen encoder: the encoder is only read.
pub fn linear_evaluation(
    params: &EncoderParams,
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &ProbeConfig,
    seed: u64,
) -> Result<ProbeMetrics> {
    if train.num_classes != test.num_classes {
        return Err(ExperimentError::Metric("train and test splits disagree on the class count".into()));
    }
    let train_reps = params.encode_all(&train.values, 256)?;
    let test_reps = params.encode_all(&test.values, 256)?;
    linear_probe(
        &train_reps,
        &train.labels,
        &test_reps,
        &test.labels,
        params.config.repr_dim(),
        train.num_classes,
        config,
        seed,
    )
}
