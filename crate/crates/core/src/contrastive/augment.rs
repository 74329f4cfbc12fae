//! Random view generation: jitter, per-channel scaling, segment permutation.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ContrastiveError, Result};
use crate::seeding::{rng_for, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    /// Gaussian jitter std as a fraction of the instance's std.
    pub jitter_sigma: f64,
    /// Std of the per-channel multiplicative factor around 1.
    pub scaling_sigma: f64,
    pub permutation_max_segments: usize,
    pub jitter: bool,
    pub scaling: bool,
    pub permutation: bool,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            jitter_sigma: 0.05,
            scaling_sigma: 0.1,
            permutation_max_segments: 5,
            jitter: true,
            scaling: true,
            permutation: true,
        }
    }
}

impl AugmentationConfig {
    /// Every op disabled: both views equal the input.
    pub fn identity() -> Self {
        Self { jitter: false, scaling: false, permutation: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma >= 0.0) || !(self.scaling_sigma >= 0.0) || self.permutation_max_segments == 0 {
            return Err(ContrastiveError::InvalidAugmentation(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Two views of instance `index`, each `C x K` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivePair {
    pub index: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

pub(crate) fn population_std(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    (x.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Splits `0..len` into `segments` random contiguous pieces.
pub(crate) fn random_segments(rng: &mut Rng, len: usize, segments: usize) -> Vec<(usize, usize)> {
    let segments = segments.clamp(1, len.max(1));
    let mut cuts: Vec<usize> = (1..len).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(segments - 1).collect();
    cuts.sort_unstable();
    let mut bounds = Vec::with_capacity(segments);
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(len)) {
        bounds.push((start, c));
        start = c;
    }
    bounds
}

fn one_view(x: &[f32], channels: usize, config: &AugmentationConfig, rng: &mut Rng) -> Vec<f32> {
    let mut view = x.to_vec();
    let len = x.len() / channels;
    if config.jitter && config.jitter_sigma > 0.0 {
        let sigma = config.jitter_sigma * population_std(x);
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("positive sigma");
            view.iter_mut().for_each(|v| *v += noise.sample(rng) as f32);
        }
    }
    if config.scaling && config.scaling_sigma > 0.0 {
        let factor = Normal::new(1.0, config.scaling_sigma).expect("positive sigma");
        for row in view.chunks_exact_mut(len) {
            let f = factor.sample(rng) as f32;
            row.iter_mut().for_each(|v| *v *= f);
        }
    }
    if config.permutation && config.permutation_max_segments > 1 && len > 1 {
        let n = rng.random_range(1..=config.permutation_max_segments);
        if n > 1 {
            let mut segments = random_segments(rng, len, n);
            segments.shuffle(rng);
            let source = view.clone();
            for (src_row, dst_row) in source.chunks_exact(len).zip(view.chunks_exact_mut(len)) {
                let mut pos = 0;
                for &(a, b) in &segments {
                    dst_row[pos..pos + (b - a)].copy_from_slice(&src_row[a..b]);
                    pos += b - a;
                }
            }
        }
    }
    view
}

/// Draws a positive pair `(u, v) = tau(x)`; ops apply in the order
/// jitter, scaling, permutation, each view from its own stream.
pub fn augment(
    index: usize,
    x: &[f32],
    channels: usize,
    config: &AugmentationConfig,
    seed: u64,
) -> Result<PositivePair> {
    config.validate()?;
    if channels == 0 || x.is_empty() || !x.len().is_multiple_of(channels) {
        return Err(ContrastiveError::Shape(format!("{} values for {channels} channels", x.len())));
    }
    let mut u_rng = rng_for(seed, &[stream::AUGMENT, 0]);
    let mut v_rng = rng_for(seed, &[stream::AUGMENT, 1]);
    Ok(PositivePair {
        index,
        u: one_view(x, channels, config, &mut u_rng),
        v: one_view(x, channels, config, &mut v_rng),
    })
}
