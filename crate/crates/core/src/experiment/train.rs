use super::{ExperimentConfig, ExperimentError, Method, Result};
use crate::contrastive::{augment, infonce_graph};
use crate::datagen::{corrupt_view, LabeledDataset, PairType};
use crate::diffcore::Tape;
use crate::encoder::{AdamState, EncoderConfig, EncoderParams};
use crate::mining::{EpochPlan, MemoryTable, PairFlag, PairVerdict};
use crate::seeding::{derive_seed, rng_for, stream};

use rand::seq::SliceRandom;

/// Everything a pre-training run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub table: MemoryTable,
    /// `verdicts[e - 1][i]`: pair `i` at epoch `e`.
    pub verdicts: Vec<Vec<PairVerdict>>,
    /// Mean unweighted per-pair loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Consecutive batches of `order`; a trailing batch of one joins the previous one.
pub fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().expect("non-empty") = &order[start..];
    }
    out
}

pub fn train_contrastive(config: &ExperimentConfig, train: &LabeledDataset, seed: u64) -> Result<TrainOutcome> {
    train_contrastive_with(config, train, seed, |_, _, _| {})
}

/// Pre-trains an encoder on `train`, calling `on_step(epoch, batch, params)`
/// after every optimizer step.
///
/// Per batch: draw two augmented views of every instance (corrupting the
/// v-view of faulty pairs), encode both, take per-pair InfoNCE losses, log
/// them in the memory table, weight them when mining is active, average and
/// take one Adam step. Pair identity is the dataset index.
pub fn train_contrastive_with(
    config: &ExperimentConfig,
    train: &LabeledDataset,
    seed: u64,
    mut on_step: impl FnMut(usize, usize, &EncoderParams),
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = train.len();
    if n < 2 {
        return Err(ExperimentError::InvalidConfig(format!("training split has {n} instances; InfoNCE needs 2")));
    }
    let (c, k) = (train.channels, train.length);
    let encoder = EncoderConfig::new(c, k, config.encoder.clone())?;
    let mut params = EncoderParams::init(&encoder, seed)?;
    let mut adam = AdamState::new(config.optimizer, &params.tensors);
    let mut table = MemoryTable::new(n, config.max_epochs)?;
    let dbpm = config.dbpm();
    let corruption = config.corruption();
    let mut verdicts = Vec::with_capacity(config.max_epochs);
    let mut epoch_losses = Vec::with_capacity(config.max_epochs);

    for epoch in 1..=config.max_epochs {
        let plan = match config.method {
            Method::Dbpm => Some(EpochPlan::new(&table, epoch, &dbpm)?),
            Method::Baseline => None,
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(seed, &[stream::SHUFFLE, epoch as u64]));
        let mut epoch_verdicts = vec![PairVerdict::normal(0, epoch); n];
        let mut loss_total = 0.0;

        for (b, batch) in batches(&order, config.batch_size).into_iter().enumerate() {
            let size = batch.len();
            let mut xu = Vec::with_capacity(size * c * k);
            let mut xv = Vec::with_capacity(size * c * k);
            for &i in batch {
                let view_seed = derive_seed(seed, &[stream::AUGMENT, epoch as u64, i as u64]);
                let pair = augment(i, train.instance(i), c, &config.augmentation, view_seed)?;
                xu.extend_from_slice(&pair.u);
                match train.pair_types[i] {
                    PairType::Faulty(kind) => {
                        let fault_seed = derive_seed(seed, &[stream::FAULTY_VIEW, epoch as u64, i as u64]);
                        xv.extend(corrupt_view(kind, &pair.v, c, &corruption, fault_seed));
                    }
                    _ => xv.extend_from_slice(&pair.v),
                }
            }

            let mut tape: Tape<f32> = Tape::new();
            let leaves = params.bind(&mut tape)?;
            let u = tape.leaf(&[size, c, k], xu)?;
            let v = tape.leaf(&[size, c, k], xv)?;
            let ru = params.forward(&mut tape, &leaves, u)?;
            let rv = params.forward(&mut tape, &leaves, v)?;
            let nodes = infonce_graph(&mut tape, ru, rv, config.temperature)?;
            let losses: Vec<f64> = tape.data(nodes.losses).iter().map(|&l| f64::from(l)).collect();
            if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
                return Err(ExperimentError::NonFiniteLoss { epoch, batch: b, value: *bad });
            }

            let mut weights = Vec::with_capacity(size);
            for (&i, &loss) in batch.iter().zip(&losses) {
                table.record_loss(i, epoch, loss)?;
                let verdict = match &plan {
                    Some(p) => p.judge(i, loss)?,
                    None => PairVerdict::normal(i, epoch),
                };
                weights.push(if verdict.flag == PairFlag::Normal { 1.0 } else { verdict.weight as f32 });
                epoch_verdicts[i] = verdict;
                loss_total += loss;
            }

            let w = tape.leaf(&[size], weights)?;
            let weighted = tape.mul(nodes.losses, w)?;
            let batch_loss = tape.mean(weighted)?;
            if !tape.data(batch_loss)[0].is_finite() {
                return Err(ExperimentError::NonFiniteLoss { epoch, batch: b, value: f64::from(tape.data(batch_loss)[0]) });
            }
            tape.backward(batch_loss)?;
            let grads: Vec<Vec<f32>> = leaves.iter().map(|&l| tape.grad(l).to_vec()).collect();
            adam.step(&mut params.tensors, &grads).map_err(|e| ExperimentError::Training {
                epoch,
                batch: b,
                source: Box::new(e.into()),
            })?;
            on_step(epoch, b, &params);
        }

        let mean_loss = loss_total / n as f64;
        let noisy = epoch_verdicts.iter().filter(|v| v.flag == PairFlag::Noisy).count();
        let faulty = epoch_verdicts.iter().filter(|v| v.flag == PairFlag::Faulty).count();
        log::info!("seed {seed} epoch {epoch}: mean loss {mean_loss:.4}, flagged noisy {noisy}, faulty {faulty}");
        epoch_losses.push(mean_loss);
        verdicts.push(epoch_verdicts);
    }
    Ok(TrainOutcome { params, table, verdicts, epoch_losses })
}
