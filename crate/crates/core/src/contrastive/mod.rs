//! Views, the cosine score and the per-pair InfoNCE objective.
//!
//! Negatives for anchor `i` are the other `B - 1` v-views of the mini-batch;
//! the positive term sits inside the softmax denominator, so the per-pair
//! loss is a row-wise cross entropy over `s(r_i^u, r_j^v) / t` with the
//! diagonal as target.

mod augment;

pub use augment::{augment, AugmentationConfig, PositivePair};
pub(crate) use augment::{population_std, random_segments};

use thiserror::Error;

use crate::diffcore::{DiffError, Element, NodeId, Tape};

#[derive(Debug, Error)]
pub enum ContrastiveError {
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("InfoNCE needs at least 2 pairs per batch, got {0}")]
    BatchTooSmall(usize),
    #[error("score undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid augmentation config: {0}")]
    InvalidAugmentation(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

pub type Result<T> = std::result::Result<T, ContrastiveError>;

pub const DEFAULT_TEMPERATURE: f64 = 0.2;

/// Cosine similarity.
pub fn score(ru: &[f64], rv: &[f64]) -> Result<f64> {
    if ru.len() != rv.len() {
        return Err(ContrastiveError::Shape(format!("{} vs {}", ru.len(), rv.len())));
    }
    let nu = ru.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nv = rv.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(ContrastiveError::ZeroNorm);
    }
    let dot: f64 = ru.iter().zip(rv).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn check_batch(batch: usize, temperature: f64) -> Result<()> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(ContrastiveError::Temperature(temperature));
    }
    if batch < 2 {
        return Err(ContrastiveError::BatchTooSmall(batch));
    }
    Ok(())
}

/// Nodes produced by [`infonce_graph`].
#[derive(Debug, Clone, Copy)]
pub struct InfoNceNodes {
    /// Per-pair losses, shape `[B]`.
    pub losses: NodeId,
    pub normalized_u: NodeId,
    pub normalized_v: NodeId,
}

/// Records the per-pair InfoNCE loss for `[B, H]` representation nodes.
pub fn infonce_graph<T: Element>(tape: &mut Tape<T>, reps_u: NodeId, reps_v: NodeId, temperature: f64) -> Result<InfoNceNodes> {
    let (su, sv) = (tape.shape(reps_u).to_vec(), tape.shape(reps_v).to_vec());
    if su.len() != 2 || su != sv {
        return Err(ContrastiveError::Shape(format!("{su:?} vs {sv:?}")));
    }
    check_batch(su[0], temperature)?;
    let nu = tape.l2_normalize_rows(reps_u)?;
    let nv = tape.l2_normalize_rows(reps_v)?;
    let scores = tape.matmul_t(nu, nv)?;
    let logits = tape.scale(scores, 1.0 / temperature)?;
    let losses = tape.cross_entropy(logits, (0..su[0]).collect())?;
    Ok(InfoNceNodes { losses, normalized_u: nu, normalized_v: nv })
}

/// Per-pair losses with the normalized representations they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatchResult {
    pub losses: Vec<f64>,
    pub normalized_u: Vec<f64>,
    pub normalized_v: Vec<f64>,
    pub temperature: f64,
}

/// Evaluates the per-pair InfoNCE losses of flat `[B, H]` representations.
pub fn infonce_per_pair(reps_u: &[f64], reps_v: &[f64], dim: usize, temperature: f64) -> Result<ContrastiveBatchResult> {
    if dim == 0 || reps_u.len() != reps_v.len() || !reps_u.len().is_multiple_of(dim) {
        return Err(ContrastiveError::Shape(format!("{} / {} values with H = {dim}", reps_u.len(), reps_v.len())));
    }
    let batch = reps_u.len() / dim;
    check_batch(batch, temperature)?;
    let mut tape: Tape<f64> = Tape::new();
    let u = tape.leaf(&[batch, dim], reps_u.to_vec())?;
    let v = tape.leaf(&[batch, dim], reps_v.to_vec())?;
    let nodes = infonce_graph(&mut tape, u, v, temperature)?;
    Ok(ContrastiveBatchResult {
        losses: tape.data(nodes.losses).to_vec(),
        normalized_u: tape.data(nodes.normalized_u).to_vec(),
        normalized_v: tape.data(nodes.normalized_v).to_vec(),
        temperature,
    })
}

/// Closed-form `-dL_i / dr_i^u = (r_i^v - sum_j p_j r_j^v) / t`, treating
/// the (already normalized) representations as free variables, with
/// `p = softmax_j(r_i^u . r_j^v / t)` over every v-view in the batch.
pub fn infonce_grad_oracle(reps_u: &[f64], reps_v: &[f64], dim: usize, temperature: f64, index: usize) -> Result<Vec<f64>> {
    if dim == 0 || reps_u.len() != reps_v.len() || !reps_u.len().is_multiple_of(dim) {
        return Err(ContrastiveError::Shape(format!("{} / {} values with H = {dim}", reps_u.len(), reps_v.len())));
    }
    let batch = reps_u.len() / dim;
    check_batch(batch, temperature)?;
    if index >= batch {
        return Err(ContrastiveError::Shape(format!("index {index} outside batch of {batch}")));
    }
    let anchor = &reps_u[index * dim..(index + 1) * dim];
    let logits: Vec<f64> = reps_v
        .chunks_exact(dim)
        .map(|rv| anchor.iter().zip(rv).map(|(a, b)| a * b).sum::<f64>() / temperature)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut out: Vec<f64> = reps_v[index * dim..(index + 1) * dim].to_vec();
    for (rv, w) in reps_v.chunks_exact(dim).zip(&weights) {
        let p = w / total;
        out.iter_mut().zip(rv).for_each(|(o, r)| *o -= p * r);
    }
    out.iter_mut().for_each(|o| *o /= temperature);
    Ok(out)
}
