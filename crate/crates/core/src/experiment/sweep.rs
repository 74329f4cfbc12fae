use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::Summary;
use super::report::{prepare_data, run_seed};
use super::{ExperimentConfig, Method, Result};
use crate::datagen::InjectionSpec;

pub const ROBUSTNESS_HEADER: &str = "fraction,method,seed,accuracy,auprc";
pub const SENSITIVITY_HEADER: &str = "beta_np,beta_fp,mean_accuracy,std_accuracy";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub fraction: f64,
    pub method: Method,
    pub seed: u64,
    pub accuracy: f64,
    pub auprc: f64,
}

/// For each fraction `f`, injects `f` noisy plus `f` faulty pairs into the
/// training split and runs every seed with both methods.
pub fn robustness_sweep(config: &ExperimentConfig, fractions: &[f64]) -> Result<Vec<RobustnessRow>> {
    let mut rows = Vec::new();
    for &fraction in fractions {
        let mut cfg = config.clone();
        let base = config.injection.unwrap_or_default();
        cfg.injection = Some(InjectionSpec { fraction_noisy: fraction, fraction_faulty: fraction, ..base });
        cfg.validate()?;
        let data = prepare_data(&cfg)?;
        for method in [Method::Baseline, Method::Dbpm] {
            cfg.method = method;
            for &seed in &cfg.seeds {
                let run = run_seed(&cfg, &data, seed)?;
                rows.push(RobustnessRow {
                    fraction,
                    method,
                    seed,
                    accuracy: run.probe.accuracy,
                    auprc: run.probe.auprc.macro_average,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub fraction: f64,
    pub method: Method,
    pub accuracy: Summary,
    pub auprc: Summary,
}

/// Per-(fraction, method) aggregates in first-seen order.
pub fn summarize_robustness(rows: &[RobustnessRow]) -> Vec<RobustnessSummary> {
    let mut keys: Vec<(f64, Method)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(f, m)| f == r.fraction && m == r.method) {
            keys.push((r.fraction, r.method));
        }
    }
    keys.into_iter()
        .map(|(fraction, method)| {
            let sel: Vec<&RobustnessRow> = rows.iter().filter(|r| r.fraction == fraction && r.method == method).collect();
            let acc: Vec<f64> = sel.iter().map(|r| r.accuracy).collect();
            let auprc: Vec<f64> = sel.iter().map(|r| r.auprc).collect();
            RobustnessSummary { fraction, method, accuracy: Summary::of(&acc), auprc: Summary::of(&auprc) }
        })
        .collect()
}

pub fn write_robustness_csv<W: Write>(out: W, rows: &[RobustnessRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROBUSTNESS_HEADER.split(','))?;
    for r in rows {
        w.write_record([r.fraction.to_string(), r.method.name().to_string(), r.seed.to_string(), r.accuracy.to_string(), r.auprc.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub beta_np: Option<f64>,
    pub beta_fp: Option<f64>,
    pub accuracies: Vec<f64>,
    pub accuracy: Summary,
}

/// Mining runs over the full `beta_np x beta_fp` grid; `None` disables a
/// threshold. Rows follow `beta_np`, columns `beta_fp`.
pub fn sensitivity_sweep(config: &ExperimentConfig, beta_np: &[Option<f64>], beta_fp: &[Option<f64>]) -> Result<Vec<SensitivityCell>> {
    let data = prepare_data(config)?;
    let mut cells = Vec::with_capacity(beta_np.len() * beta_fp.len());
    for &np in beta_np {
        for &fp in beta_fp {
            let cfg = ExperimentConfig { method: Method::Dbpm, beta_np: np, beta_fp: fp, ..config.clone() };
            cfg.validate()?;
            let accuracies = cfg.seeds.iter().map(|&s| Ok(run_seed(&cfg, &data, s)?.probe.accuracy)).collect::<Result<Vec<_>>>()?;
            cells.push(SensitivityCell { beta_np: np, beta_fp: fp, accuracy: Summary::of(&accuracies), accuracies });
        }
    }
    Ok(cells)
}

fn beta_label(b: Option<f64>) -> String {
    b.map_or_else(|| "none".to_string(), |v| v.to_string())
}

pub fn write_sensitivity_csv<W: Write>(out: W, cells: &[SensitivityCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SENSITIVITY_HEADER.split(','))?;
    for c in cells {
        w.write_record([beta_label(c.beta_np), beta_label(c.beta_fp), c.accuracy.mean.to_string(), c.accuracy.std.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
