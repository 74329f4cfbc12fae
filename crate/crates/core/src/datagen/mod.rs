//! Synthetic data with planted pair-type ground truth, bad-pair injection
//! and dataset files.
//!
//! Noisy pairs are stored corrupted: the noise belongs to the instance, so
//! both views inherit it. Faulty pairs are stored clean and only tagged; the
//! training loop corrupts their v-view each time it is drawn through
//! [`corrupt_view`].

mod faulty;
mod inject;
mod io;
mod simulate;

pub use faulty::{corrupt_view, make_faulty_view, overscale_view, ViewCorruption};
pub use inject::{inject_bad_pairs, InjectionSpec};
pub use io::{import_csv, load_dataset, read_dataset, save_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use simulate::{generate_simulated, generate_with_components, ClassRecipe, SimSpec, SimulatedParts};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::seq::SliceRandom;

use crate::seeding::{rng_for, stream};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error("invalid injection spec: {0}")]
    InvalidInjection(String),
    #[error("cannot inject {requested} bad pairs: only {available} normal instances")]
    NotEnoughInstances { requested: usize, available: usize },
    #[error("dataset file: {0}")]
    Format(String),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// v-view replaced by a spectral surrogate.
    Surrogate,
    /// v-view scaled segment-wise by strong random factors.
    Overscale,
}

/// Ground-truth pair type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairType {
    Normal,
    Noisy,
    Faulty(FaultKind),
}

impl PairType {
    pub fn code(self) -> u8 {
        match self {
            PairType::Normal => 0,
            PairType::Noisy => 1,
            PairType::Faulty(FaultKind::Surrogate) => 2,
            PairType::Faulty(FaultKind::Overscale) => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => PairType::Normal,
            1 => PairType::Noisy,
            2 => PairType::Faulty(FaultKind::Surrogate),
            3 => PairType::Faulty(FaultKind::Overscale),
            _ => return None,
        })
    }

    pub fn is_faulty(self) -> bool {
        matches!(self, PairType::Faulty(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Not yet split (freshly generated or loaded).
    All,
    Train,
    Val,
    Test,
}

/// `N x C x K` values with class labels and pair types.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub channels: usize,
    pub length: usize,
    pub num_classes: usize,
    pub values: Vec<f32>,
    pub labels: Vec<usize>,
    pub pair_types: Vec<PairType>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn instance_size(&self) -> usize {
        self.channels * self.length
    }

    pub fn instance(&self, i: usize) -> &[f32] {
        let s = self.instance_size();
        &self.values[i * s..(i + 1) * s]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let size = self.channels.checked_mul(self.length).and_then(|s| s.checked_mul(n));
        if self.channels == 0 || self.length == 0 || self.num_classes == 0 {
            return Err(DataError::Inconsistent("channels, length and classes must be positive".into()));
        }
        if size != Some(self.values.len()) || self.pair_types.len() != n {
            return Err(DataError::Inconsistent(format!(
                "{} values, {} labels, {} pair types for C = {}, K = {}",
                self.values.len(),
                n,
                self.pair_types.len(),
                self.channels,
                self.length
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(DataError::Inconsistent(format!("label {l} outside {} classes", self.num_classes)));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Inconsistent("non-finite value".into()));
        }
        Ok(())
    }

    /// Instances at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], split: Split) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.instance_size());
        for &i in indices {
            values.extend_from_slice(self.instance(i));
        }
        Self {
            channels: self.channels,
            length: self.length,
            num_classes: self.num_classes,
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            pair_types: indices.iter().map(|&i| self.pair_types[i]).collect(),
            split,
        }
    }

    pub fn count(&self, kind: impl Fn(PairType) -> bool) -> usize {
        self.pair_types.iter().filter(|&&p| kind(p)).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

/// Shuffled 64 / 16 / 20 train / validation / test partition.
pub fn split_dataset(ds: &LabeledDataset, seed: u64) -> Result<DatasetSplits> {
    let n = ds.len();
    if n < 3 {
        return Err(DataError::Inconsistent(format!("cannot split {n} instances three ways")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[stream::SPLIT]));
    let n_train = (n * 16 / 25).max(1);
    let n_val = (n * 4 / 25).max(1);
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok(DatasetSplits {
        train: ds.subset(train, Split::Train),
        val: ds.subset(val, Split::Val),
        test: ds.subset(test, Split::Test),
    })
}

/// Population standard deviation.
pub(crate) fn std_of(x: &[f32]) -> f64 {
    crate::contrastive::population_std(x)
}

/// Mean square.
pub fn power(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>() / x.len() as f64
}
