use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{identification_metrics, IdentificationMetrics, Summary};
use super::probe::{linear_evaluation, ProbeConfig, ProbeMetrics};
use super::train::{train_contrastive, TrainOutcome};
use super::{DataSource, ExperimentConfig, Result};
use crate::datagen::{generate_simulated, inject_bad_pairs, load_dataset, split_dataset, LabeledDataset, PairType};
use crate::encoder::write_checkpoint;
use crate::mining::write_trajectory;

pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

/// Splits shared by every seed of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    /// Training split before injection; the linear probe trains on it.
    pub train_clean: LabeledDataset,
    /// Training split used for pre-training.
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub has_ground_truth: bool,
}

pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparedData> {
    let (full, simulated) = match &config.data {
        DataSource::Simulate(spec) => (generate_simulated(spec)?, true),
        DataSource::File(path) => (load_dataset(path)?, false),
    };
    let planted = full.pair_types.iter().any(|&p| p != PairType::Normal);
    let splits = split_dataset(&full, config.split_seed)?;
    let train = match &config.injection {
        Some(spec) => inject_bad_pairs(&splits.train, spec)?,
        None => splits.train.clone(),
    };
    Ok(PreparedData {
        train_clean: splits.train,
        train,
        test: splits.test,
        has_ground_truth: simulated || planted || config.injection.is_some(),
    })
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub outcome: TrainOutcome,
    pub probe: ProbeMetrics,
    pub identification: Option<IdentificationMetrics>,
}

pub fn run_seed(config: &ExperimentConfig, data: &PreparedData, seed: u64) -> Result<SeedRun> {
    let outcome = train_contrastive(config, &data.train, seed)?;
    let probe_config = ProbeConfig { epochs: config.probe_epochs, batch_size: config.batch_size, optimizer: config.probe_optimizer };
    let probe = linear_evaluation(&outcome.params, &data.train_clean, &data.test, &probe_config, seed)?;
    let identification = if data.has_ground_truth {
        let last = outcome.verdicts.last().expect("at least one epoch");
        Some(identification_metrics(last, Some(&data.train.pair_types))?)
    } else {
        None
    };
    log::info!("seed {seed}: accuracy {:.4}, AUPRC {:.4}", probe.accuracy, probe.auprc.macro_average);
    Ok(SeedRun { seed, outcome, probe, identification })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    pub auprc: f64,
    pub auprc_per_class: Vec<Option<f64>>,
    pub auprc_excluded_classes: Vec<usize>,
    pub final_epoch_loss: f64,
    pub identification: Option<IdentificationMetrics>,
}

impl SeedResult {
    pub fn from_run(run: &SeedRun) -> Self {
        Self {
            seed: run.seed,
            accuracy: run.probe.accuracy,
            auprc: run.probe.auprc.macro_average,
            auprc_per_class: run.probe.auprc.per_class.clone(),
            auprc_excluded_classes: run.probe.auprc.excluded_classes.clone(),
            final_epoch_loss: *run.outcome.epoch_losses.last().expect("at least one epoch"),
            identification: run.identification,
        }
    }
}

/// One JSON document per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// The fully resolved configuration, overrides included.
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedResult>,
    pub accuracy: Summary,
    pub auprc: Summary,
    /// The only field that differs between identical runs.
    pub wall_clock_seconds: f64,
}

impl RunReport {
    pub fn from_results(config: &ExperimentConfig, seeds: Vec<SeedResult>, wall_clock_seconds: f64) -> Self {
        let acc: Vec<f64> = seeds.iter().map(|s| s.accuracy).collect();
        let auprc: Vec<f64> = seeds.iter().map(|s| s.auprc).collect();
        Self { config: config.clone(), accuracy: Summary::of(&acc), auprc: Summary::of(&auprc), seeds, wall_clock_seconds }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub fn seed_dir(output: &Path, seed: u64) -> PathBuf {
    output.join(format!("seed-{seed}"))
}

/// Writes `checkpoint.bin` and `trajectory.csv` under `seed-<seed>/`.
pub fn write_seed_outputs(output: &Path, run: &SeedRun) -> Result<PathBuf> {
    let dir = seed_dir(output, run.seed);
    fs::create_dir_all(&dir)?;
    write_checkpoint(BufWriter::new(File::create(dir.join(CHECKPOINT_FILE))?), &run.outcome.params.tensors)?;
    write_trajectory(BufWriter::new(File::create(dir.join(TRAJECTORY_FILE))?), &run.outcome.table, &run.outcome.verdicts)?;
    Ok(dir)
}

/// Runs every seed; with `write_outputs`, fills `config.output_dir` with
/// per-seed artifacts and `report.json`.
pub fn run_experiment(config: &ExperimentConfig, write_outputs: bool) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let data = prepare_data(config)?;
    let mut results = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let run = run_seed(config, &data, seed)?;
        if write_outputs {
            write_seed_outputs(&config.output_dir, &run)?;
        }
        results.push(SeedResult::from_run(&run));
    }
    let report = RunReport::from_results(config, results, start.elapsed().as_secs_f64());
    if write_outputs {
        fs::create_dir_all(&config.output_dir)?;
        report.write(&config.output_dir.join(REPORT_FILE))?;
    }
    Ok(report)
}
