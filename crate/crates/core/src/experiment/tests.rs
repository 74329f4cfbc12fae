use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::datagen::{PairType, SimSpec};
use crate::encoder::{BlockConfig, EncoderArch};
use crate::mining::{PairFlag, PairVerdict};
use crate::seeding::rng_for;

fn tiny_config(instances: usize, epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        data: DataSource::Simulate(SimSpec { instances, length: 32, ..SimSpec::default() }),
        encoder: EncoderArch {
            blocks: [BlockConfig::new(4, 3, 2), BlockConfig::new(8, 3, 2), BlockConfig::new(8, 2, 1)],
            repr_dim: 16,
        },
        max_epochs: epochs,
        probe_epochs: 3,
        batch_size: 16,
        seeds: vec![0, 1],
        ..ExperimentConfig::default()
    }
}

/// Step-sum over explicit thresholds: every distinct score, highest first,
/// predicts positive for all items scoring at least that much.
fn brute_force_ap(scores: &[f64], positive: &[bool]) -> f64 {
    let total = positive.iter().filter(|&&p| p).count() as f64;
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for t in thresholds {
        let predicted: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = predicted.iter().filter(|&&i| positive[i]).count() as f64;
        let recall = tp / total;
        area += (recall - prev_recall) * tp / predicted.len() as f64;
        prev_recall = recall;
    }
    area
}

#[test]
fn batches_merge_a_trailing_singleton() {
    let order: Vec<usize> = (0..9).collect();
    let b = batches(&order, 4);
    assert_eq!(b, vec![&order[..4], &order[4..]]);
    assert_eq!(batches(&order, 3).len(), 3);
    assert_eq!(batches(&order[..1], 4), vec![&order[..1]]);
}

#[test]
fn average_precision_examples() {
    assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]), Some(1.0));
    for m in [2usize, 5, 10] {
        let scores: Vec<f64> = (0..m).map(|i| (m - i) as f64).collect();
        let mut positive = vec![false; m];
        positive[m - 1] = true;
        let ap = average_precision(&scores, &positive).unwrap();
        assert!((ap - 1.0 / m as f64).abs() < 1e-12);
    }
    let positive = [true, false, false, true, false];
    assert!((average_precision(&[0.5; 5], &positive).unwrap() - 0.4).abs() < 1e-12);
    assert_eq!(average_precision(&[0.1, 0.2], &[true, true]), None);
}

#[test]
fn auprc_excludes_degenerate_classes() {
    // class 2 never occurs
    let scores = [0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.6, 0.3, 0.1];
    let out = auprc(&scores, &[0, 1, 0], 3).unwrap();
    assert_eq!(out.excluded_classes, vec![2]);
    assert_eq!(out.per_class[2], None);
    assert_eq!(out.macro_average, 1.0);
    assert!(auprc(&scores, &[0, 0, 0], 3).is_err());
    assert_eq!(accuracy(&scores, &[0, 1, 0], 3).unwrap(), 1.0);
    assert_eq!(argmax_rows(&[0.5, 0.5, 0.1, 0.2], 2), vec![0, 1]);
}

#[test]
fn identification_examples() {
    let truth = [PairType::Normal, PairType::Noisy, PairType::Faulty(crate::datagen::FaultKind::Overscale), PairType::Normal];
    let flags = [PairFlag::Normal, PairFlag::Noisy, PairFlag::Faulty, PairFlag::Normal];
    let verdicts: Vec<PairVerdict> = flags
        .iter()
        .enumerate()
        .map(|(i, &flag)| PairVerdict { index: i, epoch: 3, flag, weight: if flag == PairFlag::Normal { 1.0 } else { 0.5 } })
        .collect();
    let m = identification_metrics(&verdicts, Some(&truth)).unwrap();
    assert_eq!((m.noisy.precision, m.noisy.recall), (Some(1.0), Some(1.0)));
    assert_eq!((m.faulty.precision, m.faulty.recall), (Some(1.0), Some(1.0)));

    let none: Vec<PairVerdict> = (0..4).map(|i| PairVerdict::normal(i, 3)).collect();
    let m = identification_metrics(&none, Some(&truth)).unwrap();
    assert_eq!((m.noisy.precision, m.noisy.recall), (None, Some(0.0)));
    assert!(matches!(identification_metrics(&none, None), Err(ExperimentError::NoGroundTruth)));
    let json = serde_json::to_string(&m).unwrap();
    assert!(json.contains("\"precision\":null"));
}

#[test]
fn permuted_flags_give_prevalence_precision() {
    let n = 1000;
    let truth: Vec<PairType> = (0..n).map(|i| if i % 10 == 0 { PairType::Noisy } else { PairType::Normal }).collect();
    let mut total = 0.0;
    for seed in 0..20 {
        let mut shuffled = truth.clone();
        shuffled.shuffle(&mut rng_for(seed, &[99]));
        let verdicts: Vec<PairVerdict> = shuffled
            .iter()
            .enumerate()
            .map(|(i, &t)| PairVerdict {
                index: i,
                epoch: 2,
                flag: if t == PairType::Noisy { PairFlag::Noisy } else { PairFlag::Normal },
                weight: if t == PairType::Noisy { 0.5 } else { 1.0 },
            })
            .collect();
        total += identification_metrics(&verdicts, Some(&truth)).unwrap().noisy.precision.unwrap();
    }
    assert!((total / 20.0 - 0.1).abs() < 0.02, "{}", total / 20.0);
}

#[test]
fn summary_and_rank_auc() {
    let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(s.mean, 2.5);
    assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(Summary::of(&[0.7]).std, 0.0);
    assert_eq!(rank_auc(&[3.0, 4.0], &[1.0, 2.0]), Some(1.0));
    assert_eq!(rank_auc(&[1.0], &[1.0]), Some(0.5));
    assert_eq!(rank_auc(&[1.0, 2.0], &[3.0]), Some(0.0));
    assert_eq!(rank_auc(&[], &[3.0]), None);
}

fn probe_config(epochs: usize) -> ProbeConfig {
    ProbeConfig { epochs, batch_size: 32, optimizer: crate::encoder::AdamConfig::with_learning_rate(1e-2) }
}

#[test]
fn one_hot_representations_are_perfectly_separable() {
    let labels: Vec<usize> = (0..120).map(|i| i % 3).collect();
    let reps: Vec<f32> = labels.iter().flat_map(|&l| (0..3).map(move |c| if c == l { 1.0 } else { 0.0 })).collect();
    let m = linear_probe(&reps, &labels, &reps, &labels, 3, 3, &probe_config(40), 0).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert_eq!(m.auprc.macro_average, 1.0);
    let again = linear_probe(&reps, &labels, &reps, &labels, 3, 3, &probe_config(40), 0).unwrap();
    assert_eq!(m, again);
}

#[test]
fn random_labels_give_chance_accuracy() {
    let dim = 8;
    let mut accs = Vec::new();
    for seed in 0..5 {
        let mut rng = rng_for(seed, &[7]);
        let mut draw = |n: usize| -> (Vec<f32>, Vec<usize>) {
            let reps = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            labels.shuffle(&mut rng);
            (reps, labels)
        };
        let (tr, trl) = draw(400);
        let (te, tel) = draw(1000);
        accs.push(linear_probe(&tr, &trl, &te, &tel, dim, 2, &probe_config(20), seed).unwrap().accuracy);
    }
    let mean = accs.iter().sum::<f64>() / 5.0;
    assert!((mean - 0.5).abs() < 0.05, "{accs:?}");
}

#[test]
fn probe_requires_every_class_in_training() {
    let reps = vec![0.0f32; 8];
    let err = linear_probe(&reps, &[0, 0, 0, 0], &reps, &[0, 1, 0, 1], 2, 2, &probe_config(1), 0).unwrap_err();
    assert!(matches!(err, ExperimentError::ClassMissing(1)));
}

#[test]
fn config_overrides() {
    let json = r#"{"beta_fp": 2.0, "max_epochs": 7}"#;
    let sets = vec!["beta_fp=2.5".to_string(), "beta_np=none".into(), "data.simulate.instances=300".into(), "method=baseline".into()];
    let c = ExperimentConfig::from_json_with_overrides(Some(json), &sets).unwrap();
    assert_eq!((c.beta_fp, c.beta_np, c.max_epochs, c.method), (Some(2.5), None, 7, Method::Baseline));
    match &c.data {
        DataSource::Simulate(s) => assert_eq!((s.instances, s.length), (300, 128)),
        other => panic!("{other:?}"),
    }
    let round: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(round, c);

    for bad in ["nonsense=1", "beta_fp", "batch_size=1", "seeds=[]", "data.simulate.bogus=1", "temperature=0"] {
        assert!(ExperimentConfig::from_json_with_overrides(None, &[bad.to_string()]).is_err(), "{bad}");
    }
    assert!(ExperimentConfig::from_json_with_overrides(Some("{"), &[]).is_err());
}

#[test]
fn smoke_run_fills_the_table() {
    let config = tiny_config(100, 2);
    let data = prepare_data(&config).unwrap();
    assert_eq!(data.train.len(), 64);
    let out = train_contrastive(&config, &data.train, 0).unwrap();
    assert_eq!(out.table.completed_epochs(), 2);
    for i in 0..64 {
        for e in 1..=2 {
            assert!(out.table.get(i, e).unwrap().is_some());
        }
    }
    assert_eq!(out.verdicts.len(), 2);
    assert!(out.verdicts.iter().all(|v| v.len() == 64));
}

#[test]
fn long_warmup_reproduces_the_baseline_bit_for_bit() {
    let mut config = tiny_config(100, 2);
    config.warmup_epochs = 2;
    let data = prepare_data(&config).unwrap();
    let trace = |method| {
        let cfg = ExperimentConfig { method, ..config.clone() };
        let mut steps = Vec::new();
        let out = train_contrastive_with(&cfg, &data.train, 3, |_, _, p| {
            steps.push(p.tensors.iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect::<Vec<_>>())
        })
        .unwrap();
        (steps, out.epoch_losses)
    };
    let (a, la) = trace(Method::Baseline);
    let (b, lb) = trace(Method::Dbpm);
    assert_eq!(a.len(), 8);
    assert_eq!(a, b);
    assert_eq!(la, lb);
}

#[test]
fn first_epoch_loss_is_near_log_batch() {
    let config = ExperimentConfig {
        data: DataSource::Simulate(SimSpec { instances: 100, ..SimSpec::default() }),
        max_epochs: 1,
        batch_size: 64,
        ..ExperimentConfig::default()
    };
    let data = prepare_data(&config).unwrap();
    let out = train_contrastive(&config, &data.train, 0).unwrap();
    let ln_b = 64f64.ln();
    assert!((out.epoch_losses[0] / ln_b - 1.0).abs() < 0.15, "{} vs {ln_b}", out.epoch_losses[0]);
}

#[test]
fn runs_are_deterministic() {
    let mut config = tiny_config(100, 3);
    config.warmup_epochs = 1;
    let a = run_experiment(&config, false).unwrap();
    let b = run_experiment(&config, false).unwrap();
    assert_eq!(a.seeds, b.seeds);
    assert_eq!(a.accuracy, b.accuracy);
    assert_eq!(a.seeds.len(), 2);
    let mean = (a.seeds[0].accuracy + a.seeds[1].accuracy) / 2.0;
    assert_eq!(a.accuracy.mean, mean);
    assert!(a.seeds.iter().all(|s| (0.0..=1.0).contains(&s.accuracy) && s.identification.is_some()));
}

#[test]
fn sweeps_have_the_expected_shape() {
    let mut config = tiny_config(60, 2);
    config.seeds = vec![0];
    let rows = robustness_sweep(&config, &[0.0, 0.1, 0.2]).unwrap();
    assert_eq!(rows.len(), 6);
    let summary = summarize_robustness(&rows);
    assert_eq!(summary.len(), 6);
    let mut buf = Vec::new();
    write_robustness_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(ROBUSTNESS_HEADER));
    assert!(text.contains("0.1,dbpm,0,"));

    let betas = [Some(1.0), None];
    let cells = sensitivity_sweep(&config, &betas, &betas).unwrap();
    assert_eq!(cells.len(), 4);
    let baseline = run_experiment(&ExperimentConfig { method: Method::Baseline, ..config.clone() }, false).unwrap();
    assert_eq!(cells[3].accuracy.mean, baseline.accuracy.mean);
    let mut buf = Vec::new();
    write_sensitivity_csv(&mut buf, &cells).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(SENSITIVITY_HEADER));
    assert!(text.contains("\nnone,none,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn average_precision_matches_threshold_enumeration(
        raw in prop::collection::vec((0u8..6, any::<bool>()), 2..40),
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s)).collect();
        let positive: Vec<bool> = raw.iter().map(|(_, p)| *p).collect();
        let pos = positive.iter().filter(|&&p| p).count();
        prop_assume!(pos > 0 && pos < positive.len());
        let ap = average_precision(&scores, &positive).unwrap();
        prop_assert!((ap - brute_force_ap(&scores, &positive)).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
    }

    #[test]
    fn rank_auc_matches_pair_counting(high in prop::collection::vec(0u8..8, 1..20), low in prop::collection::vec(0u8..8, 1..20)) {
        let h: Vec<f64> = high.iter().map(|&v| f64::from(v)).collect();
        let l: Vec<f64> = low.iter().map(|&v| f64::from(v)).collect();
        let mut wins = 0.0;
        for a in &h { for b in &l { wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 }; } }
        prop_assert!((rank_auc(&h, &l).unwrap() - wins / (h.len() * l.len()) as f64).abs() < 1e-12);
    }
}
