//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 on usage errors, 2 when the work itself fails.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::datagen::{save_dataset, SimSpec};
use crate::encoder::{read_checkpoint, EncoderConfig, EncoderParams};
use crate::experiment::{
    apply_override, linear_evaluation, prepare_data, robustness_sweep, run_experiment, sensitivity_sweep,
    summarize_robustness, write_robustness_csv, write_sensitivity_csv, ExperimentConfig, ExperimentError, ProbeConfig,
    RunReport, seed_dir, REPORT_FILE, TRAJECTORY_FILE,
};
use crate::mining::{read_trajectory, PairFlag};

pub const ROBUSTNESS_FILE: &str = "robustness.csv";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";
pub const SUMMARY_HEADER: &str =
    "run,method,beta_np,beta_fp,fraction_noisy,fraction_faulty,seeds,accuracy_mean,accuracy_std,auprc_mean,auprc_std";
pub const PLOT_HEADER: &str = "run,seed,epoch,mean_loss,noisy_flags,faulty_flags,mean_weight";

#[derive(Debug, Parser)]
#[command(name = "dbpm", version, about = "Contrastive pre-training with dynamic bad pair mining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON config file; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted `key=value` override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a simulated dataset and write it in the binary format.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train every seed, probe it and write checkpoints, trajectories and report.json.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear evaluation of a saved encoder checkpoint.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed for the probe; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Baseline vs mining under growing bad pair injection.
    SweepRobustness {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Per-type injection fractions, e.g. `0,0.1,0.2`.
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2")]
        fractions: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy over a grid of threshold multipliers; `none` disables one.
    SweepBeta {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,none")]
        beta_np: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,none")]
        beta_fp: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run directories into a summary CSV and a per-epoch plot-data CSV.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "summary.csv")]
        summary: PathBuf,
        #[arg(long, default_value = "plot_data.csv")]
        plot_data: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(ExperimentError),
}

impl<E: Into<ExperimentError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{}", e.render());
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `dbpm --help` for usage.");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_value(cfg: &ConfigArgs) -> Result<Value, Failure> {
    let mut value = match &cfg.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for s in &cfg.set {
        apply_override(&mut value, s).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(value)
}

fn experiment_config(cfg: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let config: ExperimentConfig = serde_json::from_value(load_value(cfg)?).map_err(|e| Failure::Usage(e.to_string()))?;
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn parse_betas(raw: &[String]) -> Result<Vec<Option<f64>>, Failure> {
    raw.iter()
        .map(|s| match s.trim() {
            t if t.eq_ignore_ascii_case("none") => Ok(None),
            t => t.parse().map(Some).map_err(|_| Failure::Usage(format!("bad beta value {t:?}"))),
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { cfg, out } => {
            let spec: SimSpec = serde_json::from_value(load_value(&cfg)?).map_err(|e| Failure::Usage(e.to_string()))?;
            let ds = crate::datagen::generate_simulated(&spec)?;
            save_dataset(&out, &ds)?;
            println!("wrote {} instances to {}", ds.len(), out.display());
        }
        Command::Train { cfg, out } => {
            let mut config = experiment_config(&cfg)?;
            if let Some(out) = out {
                config.output_dir = out;
            }
            let report = run_experiment(&config, true)?;
            println!(
                "accuracy {:.4} ± {:.4}, AUPRC {:.4} ± {:.4}; report at {}",
                report.accuracy.mean,
                report.accuracy.std,
                report.auprc.mean,
                report.auprc.std,
                config.output_dir.join(REPORT_FILE).display()
            );
        }
        Command::Eval { cfg, checkpoint, seed } => {
            let config = experiment_config(&cfg)?;
            let data = prepare_data(&config)?;
            let enc = EncoderConfig::new(data.train.channels, data.train.length, config.encoder)?;
            let tensors = read_checkpoint(BufReader::new(File::open(&checkpoint)?))?;
            let params = EncoderParams::from_tensors(&enc, tensors)?;
            let probe = ProbeConfig { epochs: config.probe_epochs, batch_size: config.batch_size, optimizer: config.probe_optimizer };
            let seed = seed.unwrap_or(config.seeds[0]);
            let metrics = linear_evaluation(&params, &data.train_clean, &data.test, &probe, seed)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::SweepRobustness { cfg, fractions, out } => {
            let config = experiment_config(&cfg)?;
            let rows = robustness_sweep(&config, &fractions).map_err(|e| match e {
                ExperimentError::InvalidConfig(m) => Failure::Usage(m),
                e => Failure::Runtime(e),
            })?;
            let path = out.unwrap_or_else(|| config.output_dir.join(ROBUSTNESS_FILE));
            write_robustness_csv(create(&path)?, &rows)?;
            for s in summarize_robustness(&rows) {
                println!("{:>5} {:<8} accuracy {:.4} ± {:.4}", s.fraction, s.method.name(), s.accuracy.mean, s.accuracy.std);
            }
        }
        Command::SweepBeta { cfg, beta_np, beta_fp, out } => {
            let config = experiment_config(&cfg)?;
            let (np, fp) = (parse_betas(&beta_np)?, parse_betas(&beta_fp)?);
            let cells = sensitivity_sweep(&config, &np, &fp).map_err(|e| match e {
                ExperimentError::InvalidConfig(m) => Failure::Usage(m),
                e => Failure::Runtime(e),
            })?;
            let path = out.unwrap_or_else(|| config.output_dir.join(SENSITIVITY_FILE));
            write_sensitivity_csv(create(&path)?, &cells)?;
            println!("wrote {} cells to {}", cells.len(), path.display());
        }
        Command::Report { runs, summary, plot_data } => aggregate(&runs, &summary, &plot_data)?,
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn aggregate(runs: &[PathBuf], summary: &Path, plot_data: &Path) -> Result<(), Failure> {
    let reports = runs.iter().map(|dir| RunReport::read(&dir.join(REPORT_FILE))).collect::<Result<Vec<_>, _>>()?;
    let mut sw = csv::Writer::from_writer(create(summary)?);
    let mut pw = csv::Writer::from_writer(create(plot_data)?);
    sw.write_record(SUMMARY_HEADER.split(','))?;
    pw.write_record(PLOT_HEADER.split(','))?;
    for (dir, report) in runs.iter().zip(&reports) {
        let c = &report.config;
        let (fn_, ff) = c.injection.map_or((0.0, 0.0), |i| (i.fraction_noisy, i.fraction_faulty));
        let name = dir.display().to_string();
        sw.write_record([
            name.clone(),
            c.method.name().to_string(),
            opt(c.beta_np),
            opt(c.beta_fp),
            fn_.to_string(),
            ff.to_string(),
            report.seeds.len().to_string(),
            report.accuracy.mean.to_string(),
            report.accuracy.std.to_string(),
            report.auprc.mean.to_string(),
            report.auprc.std.to_string(),
        ])?;
        for s in &report.seeds {
            let path = seed_dir(dir, s.seed).join(TRAJECTORY_FILE);
            if !path.exists() {
                log::warn!("{} missing, no plot data for seed {}", path.display(), s.seed);
                continue;
            }
            // epoch -> (loss sum, noisy, faulty, weight sum, count)
            let mut epochs: BTreeMap<usize, (f64, usize, usize, f64, usize)> = BTreeMap::new();
            for row in read_trajectory(BufReader::new(File::open(&path)?))? {
                let e = epochs.entry(row.epoch).or_default();
                e.0 += row.loss;
                e.1 += usize::from(row.flag == PairFlag::Noisy);
                e.2 += usize::from(row.flag == PairFlag::Faulty);
                e.3 += row.weight;
                e.4 += 1;
            }
            for (epoch, (loss, noisy, faulty, weight, n)) in epochs {
                pw.write_record([
                    name.clone(),
                    s.seed.to_string(),
                    epoch.to_string(),
                    (loss / n as f64).to_string(),
                    noisy.to_string(),
                    faulty.to_string(),
                    (weight / n as f64).to_string(),
                ])?;
            }
        }
    }
    sw.flush()?;
    pw.flush()?;
    println!("wrote {} and {}", summary.display(), plot_data.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["dbpm"]), 1);
        assert_eq!(run(["dbpm", "frobnicate"]), 1);
        assert_eq!(run(["dbpm", "train", "--bogus"]), 1);
        assert_eq!(run(["dbpm", "train", "--set", "nonsense=3"]), 1);
        assert_eq!(run(["dbpm", "sweep-beta", "--beta-np", "x"]), 1);
        assert_eq!(run(["dbpm", "--help"]), 0);
    }

    #[test]
    fn runtime_errors_exit_two() {
        assert_eq!(run(["dbpm", "train", "--set", "data.file=/nonexistent/data.dbpm"]), 2);
        assert_eq!(run(["dbpm", "report", "/nonexistent/run"]), 2);
    }

    #[test]
    fn betas_parse_none() {
        let raw: Vec<String> = ["1", "none", "2.5"].iter().map(|s| s.to_string()).collect();
        assert_eq!(parse_betas(&raw).unwrap(), vec![Some(1.0), None, Some(2.5)]);
    }
}
