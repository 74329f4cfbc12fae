use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{GlobalStats, MiningError, Result};

/// Smallest weight ever returned; keeps weights inside `(0, 1]`.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Maps a flagged pair's current loss to a suppression weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFunction {
    /// Normal density `N(mu_e, sigma_e^2)` at the loss, clamped at 1.
    #[default]
    GaussianPdf,
    /// Unnormalized Gaussian `exp(-(L - mu)^2 / (2 sigma^2))`.
    GaussianKernel,
    /// Effectively drops flagged pairs.
    ConstantZero,
}

impl WeightFunction {
    pub fn estimate(self, loss: f64, stats: &GlobalStats) -> Result<f64> {
        let gaussian = |normalize: bool| -> Result<f64> {
            if stats.sigma <= 0.0 {
                return Err(MiningError::DegenerateSigma(stats.epoch));
            }
            let z = (loss - stats.mu) / stats.sigma;
            let kernel = (-0.5 * z * z).exp();
            Ok(if normalize { kernel / (stats.sigma * (2.0 * PI).sqrt()) } else { kernel })
        };
        let raw = match self {
            WeightFunction::GaussianPdf => gaussian(true)?,
            WeightFunction::GaussianKernel => gaussian(false)?,
            WeightFunction::ConstantZero => WEIGHT_FLOOR,
        };
        Ok(raw.clamp(WEIGHT_FLOOR, 1.0))
    }
}

pub fn estimate_weight(function: WeightFunction, loss: f64, stats: &GlobalStats) -> Result<f64> {
    function.estimate(loss, stats)
}
