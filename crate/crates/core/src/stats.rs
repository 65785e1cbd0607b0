//! Per (file, cell) demand statistics, stored sparsely by visited cell.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::context::PartitionCell;
use crate::error::{Error, Result};
use crate::types::{FileId, ServiceType};
use crate::weights::WeightConfig;

/// Observation counter and sample-mean demand for one (file, cell) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandStats {
    pub count: u64,
    pub mean: f64,
}

impl DemandStats {
    #[inline]
    pub fn observe(&mut self, demand: f64) {
        let n = self.count as f64;
        self.mean = (self.mean * n + demand) / (n + 1.0);
        self.count += 1;
    }

    /// Folds `n` observations summing to `sum` in one step. Equal to `n`
    /// calls of [`observe`](Self::observe) up to floating-point rounding.
    #[inline]
    pub fn observe_batch(&mut self, n: u64, sum: f64) {
        if n == 0 {
            return;
        }
        let total = self.count + n;
        self.mean = (self.mean * self.count as f64 + sum) / total as f64;
        self.count = total;
    }
}

/// Dense index of a visited cell inside a [`StatsStore`].
pub type CellSlot = usize;

/// Sparse learning state: only cells some user has been observed in are
/// materialized, each as a dense row over the library.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsStore {
    library_size: usize,
    r_max: f64,
    slots: HashMap<PartitionCell, CellSlot>,
    rows: Vec<Vec<DemandStats>>,
}

impl StatsStore {
    pub fn new(library_size: usize, r_max: f64) -> Self {
        Self {
            library_size,
            r_max,
            slots: HashMap::new(),
            rows: Vec::new(),
        }
    }

    pub fn library_size(&self) -> usize {
        self.library_size
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn visited_cells(&self) -> usize {
        self.rows.len()
    }

    pub fn materialized_entries(&self) -> usize {
        self.rows.len() * self.library_size
    }

    pub fn slot_of(&self, cell: &PartitionCell) -> Option<CellSlot> {
        self.slots.get(cell).copied()
    }

    pub fn get(&self, f: FileId, cell: &PartitionCell) -> DemandStats {
        self.slot_of(cell)
            .map(|s| self.rows[s][f.index()])
            .unwrap_or_default()
    }

    /// Row of statistics for a visited cell.
    pub fn row(&self, slot: CellSlot) -> &[DemandStats] {
        &self.rows[slot]
    }

    pub(crate) fn row_mut(&mut self, slot: CellSlot) -> &mut [DemandStats] {
        &mut self.rows[slot]
    }

    pub(crate) fn materialize(&mut self, cell: &PartitionCell) -> CellSlot {
        if let Some(&s) = self.slots.get(cell) {
            return s;
        }
        let s = self.rows.len();
        self.rows
            .push(vec![DemandStats::default(); self.library_size]);
        self.slots.insert(cell.clone(), s);
        s
    }

    pub(crate) fn check_file(&self, f: FileId) -> Result<()> {
        if f.index() < self.library_size {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{f} outside library of {} files",
                self.library_size
            )))
        }
    }

    pub(crate) fn check_demand(&self, demand: f64) -> Result<()> {
        if demand.is_finite() && (0.0..=self.r_max).contains(&demand) {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "observed demand {demand} outside [0, {}]",
                self.r_max
            )))
        }
    }

    /// Records one observed demand for `f` by a user in `cell`.
    pub fn update(&mut self, f: FileId, cell: &PartitionCell, observed_demand: f64) -> Result<()> {
        self.check_file(f)?;
        self.check_demand(observed_demand)?;
        let s = self.materialize(cell);
        self.rows[s][f.index()].observe(observed_demand);
        Ok(())
    }

    /// `w_f * sum_i v_{s_i} * mean(f, p_i)`; cells never visited contribute 0.
    pub fn weighted_score(
        &self,
        f: FileId,
        cells: &[PartitionCell],
        services: &[ServiceType],
        weights: &WeightConfig,
    ) -> Result<f64> {
        if cells.len() != services.len() {
            return Err(Error::InvalidInput(format!(
                "{} cells but {} service types",
                cells.len(),
                services.len()
            )));
        }
        self.check_file(f)?;
        let sum: f64 = cells
            .iter()
            .zip(services)
            .map(|(p, &s)| weights.service(s) * self.get(f, p).mean)
            .sum();
        Ok(weights.file(f) * sum)
    }
}
