//! View corruptions for faulty pairs.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{DataError, FaultKind, Result};
use crate::contrastive::random_segments;
use crate::seeding::{rng_for, stream, Rng};

/// Phase-randomized, frequency-shuffled surrogate of each channel.
///
/// Magnitudes of the interior bins (excluding DC and Nyquist) are permuted
/// so that the strongest one moves, and every interior bin gets a fresh
/// random phase. Parseval keeps the total power unchanged.
pub fn make_faulty_view(x: &[f32], channels: usize, seed: u64) -> Vec<f32> {
    assert!(channels > 0 && x.len().is_multiple_of(channels), "{} values for {channels} channels", x.len());
    let len = x.len() / channels;
    let mut rng = rng_for(seed, &[stream::FAULTY_VIEW]);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let ifft = planner.plan_fft_inverse(len);
    // bins 1..=last have a distinct mirror bin len - k
    let last = (len - 1) / 2;
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(len) {
        if last < 2 {
            out.extend_from_slice(row);
            continue;
        }
        let mut spec: Vec<Complex<f64>> = row.iter().map(|&v| Complex::new(f64::from(v), 0.0)).collect();
        fft.process(&mut spec);
        let mags: Vec<f64> = spec[1..=last].iter().map(|c| c.norm()).collect();
        let mut perm: Vec<usize> = (0..last).collect();
        perm.shuffle(&mut rng);
        let peak = (0..last).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap_or(0);
        // perm[k] is the source of bin k; make sure the peak lands elsewhere
        if let Some(pos) = perm.iter().position(|&s| s == peak) {
            if pos == peak {
                let other = (peak + 1 + rng.random_range(0..last - 1)) % last;
                perm.swap(pos, other);
            }
        }
        for k in 1..=last {
            let phase = 2.0 * PI * rng.random::<f64>();
            let c = Complex::from_polar(mags[perm[k - 1]], phase);
            spec[k] = c;
            spec[len - k] = c.conj();
        }
        ifft.process(&mut spec);
        out.extend(spec.iter().map(|c| (c.re / len as f64) as f32));
    }
    out
}

/// Segment-wise strong scaling applied to faulty views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewCorruption {
    pub scale_min: f64,
    pub scale_max: f64,
    pub segments: usize,
}

impl Default for ViewCorruption {
    fn default() -> Self {
        Self { scale_min: 0.1, scale_max: 3.0, segments: 5 }
    }
}

impl ViewCorruption {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) || self.segments == 0 {
            return Err(DataError::InvalidInjection(format!("bad view corruption {self:?}")));
        }
        Ok(())
    }
}

fn overscale_with(x: &[f32], channels: usize, params: &ViewCorruption, rng: &mut Rng) -> Vec<f32> {
    let len = x.len() / channels;
    let segments = random_segments(rng, len, params.segments);
    let mut out = x.to_vec();
    for row in out.chunks_exact_mut(len) {
        for &(a, b) in &segments {
            let f = rng.random_range(params.scale_min..=params.scale_max) as f32;
            row[a..b].iter_mut().for_each(|v| *v *= f);
        }
    }
    out
}

/// Splits each channel into the same random segments and scales every
/// (channel, segment) by an independent `U[scale_min, scale_max]` factor.
pub fn overscale_view(x: &[f32], channels: usize, params: &ViewCorruption, seed: u64) -> Vec<f32> {
    assert!(channels > 0 && x.len().is_multiple_of(channels), "{} values for {channels} channels", x.len());
    overscale_with(x, channels, params, &mut rng_for(seed, &[stream::FAULTY_VIEW, 1]))
}

pub fn corrupt_view(kind: FaultKind, x: &[f32], channels: usize, params: &ViewCorruption, seed: u64) -> Vec<f32> {
    match kind {
        FaultKind::Surrogate => make_faulty_view(x, channels, seed),
        FaultKind::Overscale => overscale_view(x, channels, params, seed),
    }
}
