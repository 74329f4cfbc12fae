//! Three-block convolutional encoder, linear classifier and Adam.
//!
//! Each block is `conv1d -> relu -> max_pool1d`; the last block is followed
//! by a global mean pool over time and a linear projection to the
//! representation dimension.

mod adam;
mod checkpoint;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{DiffError, Element, NodeId, Tape};
use crate::seeding::{rng_for, stream};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub out_channels: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl BlockConfig {
    pub fn new(out_channels: usize, kernel_size: usize, pool_size: usize) -> Self {
        Self { out_channels, kernel_size, pool_size, stride: 1 }
    }
}

/// Layer sizes independent of the data shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderArch {
    pub blocks: [BlockConfig; 3],
    pub repr_dim: usize,
}

impl Default for EncoderArch {
    fn default() -> Self {
        Self {
            blocks: [BlockConfig::new(32, 8, 2), BlockConfig::new(64, 5, 2), BlockConfig::new(128, 3, 2)],
            repr_dim: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub length: usize,
    pub arch: EncoderArch,
}

impl EncoderConfig {
    pub fn new(in_channels: usize, length: usize, arch: EncoderArch) -> Result<Self> {
        let config = Self { in_channels, length, arch };
        config.validate()?;
        Ok(config)
    }

    pub fn repr_dim(&self) -> usize {
        self.arch.repr_dim
    }

    /// Sequence length after each block.
    pub fn block_lengths(&self) -> Result<[usize; 3]> {
        let mut len = self.length;
        let mut out = [0; 3];
        for (i, b) in self.arch.blocks.iter().enumerate() {
            if len < b.kernel_size {
                return Err(EncoderError::InvalidConfig(format!(
                    "block {i}: length {len} shorter than kernel {}",
                    b.kernel_size
                )));
            }
            len = ((len - b.kernel_size) / b.stride + 1) / b.pool_size;
            if len == 0 {
                return Err(EncoderError::InvalidConfig(format!("block {i}: pooled length is 0")));
            }
            out[i] = len;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.length == 0 || self.arch.repr_dim == 0 {
            return Err(EncoderError::InvalidConfig("dimensions must be positive".into()));
        }
        for (i, b) in self.arch.blocks.iter().enumerate() {
            if b.out_channels == 0 || b.kernel_size == 0 || b.pool_size == 0 || b.stride == 0 {
                return Err(EncoderError::InvalidConfig(format!("block {i}: sizes must be positive")));
            }
        }
        self.block_lengths().map(|_| ())
    }

    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::with_capacity(8);
        let mut channels = self.in_channels;
        for (i, b) in self.arch.blocks.iter().enumerate() {
            shapes.push((format!("block{i}.conv.weight"), vec![b.out_channels, channels, b.kernel_size]));
            shapes.push((format!("block{i}.conv.bias"), vec![b.out_channels]));
            channels = b.out_channels;
        }
        shapes.push(("proj.weight".into(), vec![channels, self.arch.repr_dim]));
        shapes.push(("proj.bias".into(), vec![self.arch.repr_dim]));
        shapes
    }
}

/// A named parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ParamTensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape, data: vec![0.0; n] }
    }

    fn fan_in(&self) -> usize {
        // weights: everything but the output axis; biases share the weight's fan-in
        match self.shape.as_slice() {
            [_, c, k] => c * k,
            [i, _] => *i,
            _ => 1,
        }
    }
}

fn init_uniform(tensors: &mut [ParamTensor], seed: u64, tag: u64) {
    let mut fan_in = 1;
    for (i, t) in tensors.iter_mut().enumerate() {
        if t.shape.len() > 1 {
            fan_in = t.fan_in();
        }
        let bound = (1.0 / fan_in as f64).sqrt() as f32;
        let mut rng = rng_for(seed, &[stream::INIT, tag, i as u64]);
        t.data.iter_mut().for_each(|v| *v = rng.random_range(-bound..=bound));
    }
}

fn bind<T: Element>(tape: &mut Tape<T>, tensors: &[ParamTensor]) -> Result<Vec<NodeId>> {
    tensors
        .iter()
        .map(|t| tape.leaf_f32(&t.shape, &t.data).map_err(EncoderError::from))
        .collect()
}

/// Learnable encoder parameters in a fixed order:
/// three `(conv weight, conv bias)` pairs then the projection weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub tensors: Vec<ParamTensor>,
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        init_uniform(&mut params.tensors, seed, 0);
        Ok(params)
    }

    pub fn zeros(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config.param_shapes().into_iter().map(|(n, s)| ParamTensor::zeros(n, s)).collect();
        Ok(Self { config: config.clone(), tensors })
    }

    /// Rebuilds parameters from named arrays, checking every shape.
    pub fn from_tensors(config: &EncoderConfig, tensors: Vec<ParamTensor>) -> Result<Self> {
        config.validate()?;
        let expected = config.param_shapes();
        if expected.len() != tensors.len() {
            return Err(EncoderError::Checkpoint(format!(
                "expected {} arrays, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&tensors) {
            if name != &t.name || shape != &t.shape {
                return Err(EncoderError::Checkpoint(format!(
                    "array `{}` {:?} does not match expected `{name}` {shape:?}",
                    t.name, t.shape
                )));
            }
        }
        Ok(Self { config: config.clone(), tensors })
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Records the parameters as leaves on `tape`.
    pub fn bind<T: Element>(&self, tape: &mut Tape<T>) -> Result<Vec<NodeId>> {
        bind(tape, &self.tensors)
    }

    /// Records `G(x)` for a `[B, C, K]` batch node; returns `[B, H]`.
    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, leaves: &[NodeId], batch: NodeId) -> Result<NodeId> {
        let shape = tape.shape(batch);
        if shape.len() != 3 || shape[1] != self.config.in_channels || shape[2] != self.config.length {
            return Err(EncoderError::Shape(format!(
                "batch {:?} does not match [B, {}, {}]",
                shape, self.config.in_channels, self.config.length
            )));
        }
        let mut h = batch;
        for (i, b) in self.config.arch.blocks.iter().enumerate() {
            h = tape.conv1d(h, leaves[2 * i], Some(leaves[2 * i + 1]), b.stride)?;
            h = tape.relu(h)?;
            h = tape.max_pool1d(h, b.pool_size)?;
        }
        let pooled = tape.global_mean_pool(h)?;
        let projected = tape.matmul(pooled, leaves[6])?;
        Ok(tape.add(projected, leaves[7])?)
    }

    /// Forward pass on a flat `[B, C, K]` batch without keeping the graph.
    pub fn encode(&self, batch: &[f32], batch_size: usize) -> Result<Vec<f32>> {
        let (c, k) = (self.config.in_channels, self.config.length);
        if batch.len() != batch_size * c * k || batch_size == 0 {
            return Err(EncoderError::Shape(format!(
                "batch of {} values is not [{batch_size}, {c}, {k}]",
                batch.len()
            )));
        }
        let mut tape: Tape<f32> = Tape::new();
        let leaves = self.bind(&mut tape)?;
        let x = tape.leaf(&[batch_size, c, k], batch.to_vec())?;
        let r = self.forward(&mut tape, &leaves, x)?;
        Ok(tape.data(r).to_vec())
    }

    /// Encodes an arbitrary number of instances in chunks.
    pub fn encode_all(&self, values: &[f32], chunk: usize) -> Result<Vec<f32>> {
        let per = self.config.in_channels * self.config.length;
        let mut out = Vec::with_capacity(values.len() / per * self.config.repr_dim());
        for part in values.chunks(chunk.max(1) * per) {
            out.extend(self.encode(part, part.len() / per)?);
        }
        Ok(out)
    }
}

/// `F(r) = r W + b` with `W: [H, classes]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifierParams {
    pub repr_dim: usize,
    pub num_classes: usize,
    pub tensors: Vec<ParamTensor>,
}

impl LinearClassifierParams {
    pub fn init(repr_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(repr_dim, num_classes)?;
        init_uniform(&mut params.tensors, seed, 1);
        Ok(params)
    }

    pub fn zeros(repr_dim: usize, num_classes: usize) -> Result<Self> {
        if repr_dim == 0 || num_classes == 0 {
            return Err(EncoderError::InvalidConfig("classifier dimensions must be positive".into()));
        }
        Ok(Self {
            repr_dim,
            num_classes,
            tensors: vec![
                ParamTensor::zeros("classifier.weight", vec![repr_dim, num_classes]),
                ParamTensor::zeros("classifier.bias", vec![num_classes]),
            ],
        })
    }

    pub fn weight_mut(&mut self) -> &mut [f32] {
        &mut self.tensors[0].data
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.tensors[1].data
    }

    pub fn bind<T: Element>(&self, tape: &mut Tape<T>) -> Result<Vec<NodeId>> {
        bind(tape, &self.tensors)
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, leaves: &[NodeId], reps: NodeId) -> Result<NodeId> {
        let shape = tape.shape(reps);
        if shape.len() != 2 || shape[1] != self.repr_dim {
            return Err(EncoderError::Shape(format!("representations {shape:?} are not [B, {}]", self.repr_dim)));
        }
        let z = tape.matmul(reps, leaves[0])?;
        Ok(tape.add(z, leaves[1])?)
    }

    /// Logits for a flat `[B, H]` array.
    pub fn classify(&self, reps: &[f32], batch_size: usize) -> Result<Vec<f32>> {
        if reps.len() != batch_size * self.repr_dim || batch_size == 0 {
            return Err(EncoderError::Shape(format!(
                "{} values are not [{batch_size}, {}]",
                reps.len(),
                self.repr_dim
            )));
        }
        let mut tape: Tape<f32> = Tape::new();
        let leaves = self.bind(&mut tape)?;
        let r = tape.leaf(&[batch_size, self.repr_dim], reps.to_vec())?;
        let z = self.forward(&mut tape, &leaves, r)?;
        Ok(tape.data(z).to_vec())
    }
}

#[cfg(test)]
mod tests;
