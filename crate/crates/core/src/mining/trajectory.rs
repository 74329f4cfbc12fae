//! Per-pair trajectory CSV: one row per (pair, epoch).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{MemoryTable, MiningError, PairFlag, PairVerdict, Result};

pub const TRAJECTORY_HEADER: &str = "pair_id,epoch,loss,mean_hist_loss,flag,weight";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub pair_id: usize,
    pub epoch: usize,
    pub loss: f64,
    /// Empty at epoch 1.
    pub mean_hist_loss: Option<f64>,
    pub flag: PairFlag,
    pub weight: f64,
}

/// Writes every completed epoch of `table`, ordered by pair then epoch.
///
/// `verdicts[e - 1][i]` is pair `i`'s verdict at epoch `e`; epochs without
/// verdicts are written as normal with weight 1.
pub fn write_trajectory<W: Write>(out: W, table: &MemoryTable, verdicts: &[Vec<PairVerdict>]) -> Result<()> {
    let epochs = table.completed_epochs();
    let mut writer = csv::Writer::from_writer(out);
    for i in 0..table.pairs() {
        for e in 1..=epochs {
            let loss = table.get(i, e)?.expect("completed epochs are fully written");
            let verdict = match verdicts.get(e - 1) {
                Some(row) => *row
                    .get(i)
                    .ok_or_else(|| MiningError::Shape(format!("epoch {e} has {} verdicts for {} pairs", row.len(), table.pairs())))?,
                None => PairVerdict::normal(i, e),
            };
            let mean_hist_loss = if e > 1 { Some(table.historical_mean(i, e)?) } else { None };
            writer.serialize(TrajectoryRow { pair_id: i, epoch: e, loss, mean_hist_loss, flag: verdict.flag, weight: verdict.weight })?;
        }
    }
    if table.pairs() > 0 && epochs == 0 {
        writer.write_record(TRAJECTORY_HEADER.split(','))?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != TRAJECTORY_HEADER {
        return Err(MiningError::Shape(format!("unexpected trajectory header {header:?}")));
    }
    Ok(reader.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}
