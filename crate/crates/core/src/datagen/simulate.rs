use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{power, DataError, FaultKind, LabeledDataset, PairType, Result, Split};
use crate::seeding::{rng_for, stream};

/// Sum of sinusoids; frequencies are in cycles per series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRecipe {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl ClassRecipe {
    /// Two-tone mixtures over a shared frequency grid: classes differ in
    /// which tones they combine, not in having private tones.
    pub fn default_set(num_classes: usize) -> Vec<ClassRecipe> {
        (0..num_classes)
            .map(|c| {
                let group = (c / 4) as f64;
                ClassRecipe {
                    frequencies: vec![
                        3.0 + 2.0 * (c % 2) as f64 + 4.0 * group,
                        8.0 + 3.0 * ((c / 2) % 2) as f64 + 6.0 * group,
                    ],
                    amplitudes: vec![1.0, 0.7],
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    pub instances: usize,
    pub channels: usize,
    pub length: usize,
    pub num_classes: usize,
    /// Empty means [`ClassRecipe::default_set`].
    pub recipes: Vec<ClassRecipe>,
    /// Phases are drawn from `U[0, 2 pi * phase_jitter)`.
    pub phase_jitter: f64,
    /// Each tone's amplitude is scaled by `U[1 - a, 1 + a]`.
    pub amplitude_jitter: f64,
    /// Each tone's frequency is scaled by `U[1 - f, 1 + f]`.
    pub frequency_jitter: f64,
    pub clean_snr: f64,
    pub noisy_snr: f64,
    pub fraction_noisy: f64,
    pub fraction_faulty: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            instances: 2000,
            channels: 1,
            length: 128,
            num_classes: 4,
            recipes: Vec::new(),
            phase_jitter: 1.0,
            amplitude_jitter: 0.3,
            frequency_jitter: 0.1,
            clean_snr: 4.0,
            noisy_snr: 0.25,
            fraction_noisy: 0.05,
            fraction_faulty: 0.05,
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn recipes(&self) -> Vec<ClassRecipe> {
        if self.recipes.is_empty() {
            ClassRecipe::default_set(self.num_classes)
        } else {
            self.recipes.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DataError::InvalidSpec(m.to_string()));
        if self.instances == 0 || self.channels == 0 || self.length < 4 || self.num_classes == 0 {
            return bad("instances, channels and classes must be positive and length >= 4");
        }
        if !(self.clean_snr > 0.0 && self.noisy_snr > 0.0) || !self.clean_snr.is_finite() || !self.noisy_snr.is_finite() {
            return bad("SNR values must be positive and finite");
        }
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.fraction_noisy) || !frac_ok(self.fraction_faulty) || self.fraction_noisy + self.fraction_faulty > 1.0 {
            return bad("fractions must lie in [0, 1] and sum to at most 1");
        }
        for (name, v) in [("phase", self.phase_jitter), ("amplitude", self.amplitude_jitter), ("frequency", self.frequency_jitter)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DataError::InvalidSpec(format!("{name} jitter must lie in [0, 1]")));
            }
        }
        let recipes = self.recipes();
        if recipes.len() != self.num_classes {
            return Err(DataError::InvalidSpec(format!("{} recipes for {} classes", recipes.len(), self.num_classes)));
        }
        for r in &recipes {
            if r.frequencies.is_empty() || r.frequencies.len() != r.amplitudes.len() {
                return bad("each recipe needs matching, non-empty frequency and amplitude lists");
            }
            if r.frequencies.iter().chain(&r.amplitudes).any(|v| !v.is_finite() || *v <= 0.0) {
                return bad("recipe frequencies and amplitudes must be positive");
            }
        }
        Ok(())
    }
}

/// A simulated dataset with the noise-free signal of every instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedParts {
    pub dataset: LabeledDataset,
    pub signal: Vec<f32>,
}

pub fn generate_simulated(spec: &SimSpec) -> Result<LabeledDataset> {
    Ok(generate_with_components(spec)?.dataset)
}

/// Labels cycle through the classes (balanced to within one); pair types are
/// assigned to a random subset. Each instance draws from its own stream, and
/// its additive Gaussian noise is rescaled so that signal power over noise
/// power is exactly the target SNR.
pub fn generate_with_components(spec: &SimSpec) -> Result<SimulatedParts> {
    spec.validate()?;
    let n = spec.instances;
    let n_noisy = (spec.fraction_noisy * n as f64).round() as usize;
    let n_faulty = ((spec.fraction_faulty * n as f64).round() as usize).min(n - n_noisy);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(spec.seed, &[stream::SIMULATE, u64::MAX]));
    let mut pair_types = vec![PairType::Normal; n];
    for &i in &order[..n_noisy] {
        pair_types[i] = PairType::Noisy;
    }
    for &i in &order[n_noisy..n_noisy + n_faulty] {
        pair_types[i] = PairType::Faulty(FaultKind::Surrogate);
    }

    let recipes = spec.recipes();
    let size = spec.channels * spec.length;
    let mut values = Vec::with_capacity(n * size);
    let mut signal = Vec::with_capacity(n * size);
    let labels: Vec<usize> = (0..n).map(|i| i % spec.num_classes).collect();
    for i in 0..n {
        let mut rng = rng_for(spec.seed, &[stream::SIMULATE, i as u64]);
        let recipe = &recipes[labels[i]];
        let mut z = vec![0.0f64; size];
        for row in z.chunks_exact_mut(spec.length) {
            for (&f, &a) in recipe.frequencies.iter().zip(&recipe.amplitudes) {
                let f = f * (1.0 + spec.frequency_jitter * rng.random_range(-1.0..=1.0));
                let a = a * (1.0 + spec.amplitude_jitter * rng.random_range(-1.0..=1.0));
                let phase = 2.0 * PI * spec.phase_jitter * rng.random::<f64>();
                for (t, v) in row.iter_mut().enumerate() {
                    *v += a * (2.0 * PI * f * t as f64 / spec.length as f64 + phase).sin();
                }
            }
        }
        let snr = if pair_types[i] == PairType::Noisy { spec.noisy_snr } else { spec.clean_snr };
        let xi: Vec<f64> = (0..size).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p_signal = z.iter().map(|v| v * v).sum::<f64>() / size as f64;
        let p_noise = xi.iter().map(|v| v * v).sum::<f64>() / size as f64;
        let gain = (p_signal / (snr * p_noise)).sqrt();
        values.extend(z.iter().zip(&xi).map(|(s, e)| (s + gain * e) as f32));
        signal.extend(z.iter().map(|&s| s as f32));
    }
    let dataset = LabeledDataset {
        channels: spec.channels,
        length: spec.length,
        num_classes: spec.num_classes,
        values,
        labels,
        pair_types,
        split: Split::All,
    };
    debug_assert!(power(&signal) > 0.0);
    Ok(SimulatedParts { dataset, signal })
}
