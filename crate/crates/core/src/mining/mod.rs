//! Bad-pair mining: the per-pair loss memory, epoch statistics, thresholds,
//! flagging and loss re-weighting.
//!
//! At epoch `e` every pair is judged by its mean loss over epochs `1..e`
//! against `mu_e - beta_np * sigma_e` (noisy) and `mu_e + beta_fp * sigma_e`
//! (faulty). Flagged pairs have their current loss scaled by a weight in
//! `(0, 1]`. Flags are recomputed from scratch every epoch and only the
//! pair's own loss term is weighted.

mod memory;
mod trajectory;
mod weight;

pub use memory::MemoryTable;
pub use trajectory::{read_trajectory, write_trajectory, TrajectoryRow, TRAJECTORY_HEADER};
pub use weight::{estimate_weight, WeightFunction, WEIGHT_FLOOR};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("cell (pair {pair}, epoch {epoch}) outside table of {pairs} pairs x {epochs} epochs (epochs are 1-based)")]
    OutOfRange { pair: usize, epoch: usize, pairs: usize, epochs: usize },
    #[error("loss for pair {pair} at epoch {epoch} already recorded")]
    DoubleWrite { pair: usize, epoch: usize },
    #[error("epoch {got} written while epoch {expected} is in progress")]
    EpochOrder { expected: usize, got: usize },
    #[error("loss for pair {pair} at epoch {epoch} must be finite and >= 0, got {loss}")]
    InvalidLoss { pair: usize, epoch: usize, loss: f64 },
    #[error("no loss history before epoch {0}")]
    NoHistory(usize),
    #[error("history of pair {pair} before epoch {epoch} is incomplete")]
    IncompleteHistory { pair: usize, epoch: usize },
    #[error("sigma is 0 at epoch {0}; skip weighting for this epoch")]
    DegenerateSigma(usize),
    #[error("beta must be finite and >= 0, got {0}")]
    InvalidBeta(f64),
    #[error("unknown flag {0:?}")]
    UnknownFlag(String),
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MiningError>;

/// Population statistics of the historical means at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalStats {
    pub epoch: usize,
    pub means: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
}

impl GlobalStats {
    pub fn from_means(epoch: usize, means: Vec<f64>) -> Self {
        let n = means.len() as f64;
        let mu = means.iter().sum::<f64>() / n;
        let sigma = (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / n).sqrt();
        Self { epoch, means, mu, sigma }
    }
}

/// `None` disables a threshold: it then never fires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub beta_np: Option<f64>,
    pub beta_fp: Option<f64>,
    pub t_np: f64,
    pub t_fp: f64,
}

impl Thresholds {
    pub fn new(stats: &GlobalStats, beta_np: Option<f64>, beta_fp: Option<f64>) -> Result<Self> {
        Self::from_moments(stats.mu, stats.sigma, beta_np, beta_fp)
    }

    pub fn from_moments(mu: f64, sigma: f64, beta_np: Option<f64>, beta_fp: Option<f64>) -> Result<Self> {
        for b in [beta_np, beta_fp].into_iter().flatten() {
            if !b.is_finite() || b < 0.0 {
                return Err(MiningError::InvalidBeta(b));
            }
        }
        Ok(Self {
            beta_np,
            beta_fp,
            t_np: beta_np.map_or(f64::NEG_INFINITY, |b| mu - b * sigma),
            t_fp: beta_fp.map_or(f64::INFINITY, |b| mu + b * sigma),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairFlag {
    Normal,
    Noisy,
    Faulty,
}

impl PairFlag {
    pub fn name(self) -> &'static str {
        match self {
            PairFlag::Normal => "normal",
            PairFlag::Noisy => "noisy",
            PairFlag::Faulty => "faulty",
        }
    }
}

impl fmt::Display for PairFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PairFlag {
    type Err = MiningError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(PairFlag::Normal),
            "noisy" => Ok(PairFlag::Noisy),
            "faulty" => Ok(PairFlag::Faulty),
            other => Err(MiningError::UnknownFlag(other.to_string())),
        }
    }
}

/// Noisy if `m <= t_np`, faulty if `m >= t_fp`; noisy wins when both hold.
pub fn classify_pair(m: f64, th: &Thresholds) -> PairFlag {
    if m <= th.t_np {
        PairFlag::Noisy
    } else if m >= th.t_fp {
        PairFlag::Faulty
    } else {
        PairFlag::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub index: usize,
    pub epoch: usize,
    pub flag: PairFlag,
    pub weight: f64,
}

impl PairVerdict {
    pub fn normal(index: usize, epoch: usize) -> Self {
        Self { index, epoch, flag: PairFlag::Normal, weight: 1.0 }
    }
}

pub fn reweight_loss(loss: f64, verdict: &PairVerdict) -> f64 {
    match verdict.flag {
        PairFlag::Normal => loss,
        _ => verdict.weight * loss,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbpmConfig {
    pub warmup_epochs: usize,
    pub beta_np: Option<f64>,
    pub beta_fp: Option<f64>,
    pub weight_function: WeightFunction,
}

impl Default for DbpmConfig {
    fn default() -> Self {
        Self { warmup_epochs: 5, beta_np: Some(1.0), beta_fp: Some(3.0), weight_function: WeightFunction::GaussianPdf }
    }
}

/// Judging rules for one epoch, fixed before any of its losses arrive.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    epoch: usize,
    active: Option<(GlobalStats, Thresholds)>,
    weight_function: WeightFunction,
}

impl EpochPlan {
    /// Reads only epochs `< epoch`, so it may be built before epoch `epoch`
    /// is recorded. Inactive during warm-up and when `sigma_e = 0`.
    pub fn new(table: &MemoryTable, epoch: usize, config: &DbpmConfig) -> Result<Self> {
        if epoch == 0 || epoch > table.max_epochs() {
            return Err(MiningError::OutOfRange { pair: 0, epoch, pairs: table.pairs(), epochs: table.max_epochs() });
        }
        let mut active = None;
        if epoch > config.warmup_epochs && epoch > 1 {
            let stats = table.global_stats(epoch)?;
            if stats.sigma > 0.0 {
                let th = Thresholds::new(&stats, config.beta_np, config.beta_fp)?;
                active = Some((stats, th));
            }
        }
        Ok(Self { epoch, active, weight_function: config.weight_function })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_active(&self) -> bool {
        self.active.is_some()
    }

    pub fn stats(&self) -> Option<&GlobalStats> {
        self.active.as_ref().map(|(s, _)| s)
    }

    pub fn thresholds(&self) -> Option<&Thresholds> {
        self.active.as_ref().map(|(_, t)| t)
    }

    /// Verdict for pair `index` given its loss at this epoch.
    pub fn judge(&self, index: usize, loss: f64) -> Result<PairVerdict> {
        let Some((stats, th)) = &self.active else {
            return Ok(PairVerdict::normal(index, self.epoch));
        };
        let m = *stats
            .means
            .get(index)
            .ok_or_else(|| MiningError::Shape(format!("pair {index} outside {} pairs", stats.means.len())))?;
        let flag = classify_pair(m, th);
        let weight = match flag {
            PairFlag::Normal => 1.0,
            _ => self.weight_function.estimate(loss, stats)?,
        };
        Ok(PairVerdict { index, epoch: self.epoch, flag, weight })
    }
}

/// Records every pair's epoch-`e` loss, then judges and re-weights them.
pub fn dbpm_epoch_step(
    table: &mut MemoryTable,
    epoch: usize,
    config: &DbpmConfig,
    losses: &[f64],
) -> Result<(Vec<f64>, Vec<PairVerdict>)> {
    if losses.len() != table.pairs() {
        return Err(MiningError::Shape(format!("{} losses for {} pairs", losses.len(), table.pairs())));
    }
    for (i, &l) in losses.iter().enumerate() {
        table.record_loss(i, epoch, l)?;
    }
    let plan = EpochPlan::new(table, epoch, config)?;
    let verdicts = losses.iter().enumerate().map(|(i, &l)| plan.judge(i, l)).collect::<Result<Vec<_>>>()?;
    let weighted = losses.iter().zip(&verdicts).map(|(&l, v)| reweight_loss(l, v)).collect();
    Ok((weighted, verdicts))
}
