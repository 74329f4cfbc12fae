use super::{GlobalStats, MiningError, Result};

/// `N x E` table of per-pair contrastive losses, filled one epoch at a time.
///
/// Epochs are 1-based. Cells are written exactly once and only for the
/// epoch currently in progress; the epoch advances once all `N` pairs of it
/// have been recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryTable {
    pairs: usize,
    max_epochs: usize,
    // pair-major: pair i's history is contiguous
    cells: Vec<Option<f64>>,
    current_epoch: usize,
    written_in_current: usize,
}

impl MemoryTable {
    pub fn new(pairs: usize, max_epochs: usize) -> Result<Self> {
        if pairs == 0 || max_epochs == 0 {
            return Err(MiningError::Shape(format!("table must be non-empty, got {pairs} x {max_epochs}")));
        }
        Ok(Self {
            pairs,
            max_epochs,
            cells: vec![None; pairs * max_epochs],
            current_epoch: 1,
            written_in_current: 0,
        })
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn max_epochs(&self) -> usize {
        self.max_epochs
    }

    /// Epoch currently being written; `max_epochs + 1` once the table is full.
    pub fn current_epoch(&self) -> usize {
        self.current_epoch
    }

    pub fn completed_epochs(&self) -> usize {
        self.current_epoch - 1
    }

    fn check(&self, pair: usize, epoch: usize) -> Result<usize> {
        if pair >= self.pairs || epoch == 0 || epoch > self.max_epochs {
            return Err(MiningError::OutOfRange { pair, epoch, pairs: self.pairs, epochs: self.max_epochs });
        }
        Ok(pair * self.max_epochs + epoch - 1)
    }

    pub fn record_loss(&mut self, pair: usize, epoch: usize, loss: f64) -> Result<()> {
        let idx = self.check(pair, epoch)?;
        if !loss.is_finite() || loss < 0.0 {
            return Err(MiningError::InvalidLoss { pair, epoch, loss });
        }
        if self.cells[idx].is_some() {
            return Err(MiningError::DoubleWrite { pair, epoch });
        }
        if epoch != self.current_epoch {
            return Err(MiningError::EpochOrder { expected: self.current_epoch, got: epoch });
        }
        self.cells[idx] = Some(loss);
        self.written_in_current += 1;
        if self.written_in_current == self.pairs {
            self.current_epoch += 1;
            self.written_in_current = 0;
        }
        Ok(())
    }

    pub fn get(&self, pair: usize, epoch: usize) -> Result<Option<f64>> {
        Ok(self.cells[self.check(pair, epoch)?])
    }

    /// Losses recorded for `pair`, oldest first.
    pub fn history(&self, pair: usize) -> Result<Vec<f64>> {
        self.check(pair, 1)?;
        Ok(self.cells[pair * self.max_epochs..(pair + 1) * self.max_epochs].iter().map_while(|c| *c).collect())
    }

    /// Mean loss of `pair` over epochs `1..epoch` (strictly before `epoch`).
    ///
    /// `epoch` may be `max_epochs + 1` to summarize a finished run.
    pub fn historical_mean(&self, pair: usize, epoch: usize) -> Result<f64> {
        if epoch <= 1 {
            return Err(MiningError::NoHistory(epoch));
        }
        if pair >= self.pairs || epoch > self.max_epochs + 1 {
            return Err(MiningError::OutOfRange { pair, epoch, pairs: self.pairs, epochs: self.max_epochs });
        }
        let row = &self.cells[pair * self.max_epochs..][..epoch - 1];
        let mut total = 0.0;
        for cell in row {
            total += cell.ok_or(MiningError::IncompleteHistory { pair, epoch })?;
        }
        Ok(total / (epoch - 1) as f64)
    }

    /// Mean and population standard deviation of all historical means at `epoch`.
    pub fn global_stats(&self, epoch: usize) -> Result<GlobalStats> {
        let means = (0..self.pairs).map(|i| self.historical_mean(i, epoch)).collect::<Result<Vec<_>>>()?;
        Ok(GlobalStats::from_means(epoch, means))
    }
}
