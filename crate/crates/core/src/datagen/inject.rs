use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{std_of, DataError, FaultKind, LabeledDataset, PairType, Result, ViewCorruption};
use crate::seeding::{rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjectionSpec {
    pub fraction_noisy: f64,
    pub fraction_faulty: f64,
    /// Noise std as a multiple of the instance's std.
    pub noise_strength: f64,
    pub scaling: ViewCorruption,
    pub seed: u64,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        Self { fraction_noisy: 0.0, fraction_faulty: 0.0, noise_strength: 5.0, scaling: ViewCorruption::default(), seed: 0 }
    }
}

impl InjectionSpec {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.fraction_noisy) || !frac_ok(self.fraction_faulty) || self.fraction_noisy + self.fraction_faulty > 1.0 {
            return Err(DataError::InvalidInjection("fractions must lie in [0, 1] and sum to at most 1".into()));
        }
        if !(self.noise_strength >= 0.0 && self.noise_strength.is_finite()) {
            return Err(DataError::InvalidInjection(format!("noise strength {}", self.noise_strength)));
        }
        self.scaling.validate()
    }
}

/// Corrupts disjoint random subsets of the currently normal instances.
///
/// `round(fraction * N)` instances get strong additive Gaussian noise and
/// become noisy; another disjoint set is tagged for over-scaled views.
/// Everything else is left bit-for-bit unchanged.
pub fn inject_bad_pairs(ds: &LabeledDataset, spec: &InjectionSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let n = ds.len();
    let n_noisy = (spec.fraction_noisy * n as f64).round() as usize;
    let n_faulty = (spec.fraction_faulty * n as f64).round() as usize;
    let mut candidates: Vec<usize> = (0..n).filter(|&i| ds.pair_types[i] == PairType::Normal).collect();
    if n_noisy + n_faulty > candidates.len() {
        return Err(DataError::NotEnoughInstances { requested: n_noisy + n_faulty, available: candidates.len() });
    }
    candidates.shuffle(&mut rng_for(spec.seed, &[stream::INJECT]));
    let mut out = ds.clone();
    let size = ds.instance_size();
    for &i in &candidates[..n_noisy] {
        let sigma = spec.noise_strength * std_of(ds.instance(i));
        let row = &mut out.values[i * size..(i + 1) * size];
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("positive sigma");
            let mut rng = rng_for(spec.seed, &[stream::INJECT, i as u64]);
            row.iter_mut().for_each(|v| *v += noise.sample(&mut rng) as f32);
        }
        out.pair_types[i] = PairType::Noisy;
    }
    for &i in &candidates[n_noisy..n_noisy + n_faulty] {
        out.pair_types[i] = PairType::Faulty(FaultKind::Overscale);
    }
    Ok(out)
}
