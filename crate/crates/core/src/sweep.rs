//! Grid of training runs over negative sample size, correction mode and seed.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport, EvalSplit, Partition};
use crate::model::{ItemCatalog, Scalar};
use crate::rank::Correction;
use crate::train::{train, Monitor, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: TrainConfig,
    pub ms: Vec<usize>,
    pub corrections: Vec<Correction>,
    pub seeds: Vec<u64>,
    /// NDCG cutoffs reported in addition to the fixed metrics.
    pub ndcg_cutoffs: Vec<usize>,
    pub partitions: Vec<Partition>,
    /// Cells trained concurrently.
    pub jobs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub run: usize,
    pub m: usize,
    pub correction: Correction,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run: usize,
    pub m: usize,
    pub correction: Correction,
    pub seed: u64,
    pub partition: Partition,
    pub metric: String,
    pub cutoff: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<(Cell, String)>,
}

impl SweepConfig {
    /// Cross product in `m`, then correction, then seed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &m in &self.ms {
            for &correction in &self.corrections {
                for &seed in &self.seeds {
                    out.push(Cell { run: out.len(), m, correction, seed });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.ms.is_empty() || self.corrections.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one m, correction and seed".into()));
        }
        if self.partitions.is_empty() {
            return Err(Error::Config("sweep needs at least one partition".into()));
        }
        if self.ndcg_cutoffs.contains(&0) {
            return Err(Error::Config("NDCG cutoffs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn cell_config(&self, cell: &Cell) -> TrainConfig {
        TrainConfig {
            m: cell.m,
            correction: cell.correction,
            seed: cell.seed,
            ..self.base.clone()
        }
    }
}

fn rows_for(cell: &Cell, partition: Partition, report: &EvalReport) -> Vec<SweepRow> {
    let row = |metric: &str, cutoff: usize, value: f64| SweepRow {
        run: cell.run,
        m: cell.m,
        correction: cell.correction,
        seed: cell.seed,
        partition,
        metric: metric.to_string(),
        cutoff,
        value,
    };
    let mut rows = vec![
        row("recall", 20, report.recall20),
        row("recall", 50, report.recall50),
        row("ndcg", 100, report.ndcg100),
    ];
    rows.extend(report.ndcg_at.iter().map(|&(k, v)| row("ndcg", k, v)));
    rows
}

/// Trains and evaluates one cell.
pub fn run_cell<F: Scalar>(
    config: &SweepConfig,
    cell: &Cell,
    split: &EvalSplit,
    catalog: &ItemCatalog,
) -> Result<Vec<SweepRow>> {
    let cfg = config.cell_config(cell);
    let (model, _) = train::<F>(&split.train, catalog, &cfg, Monitor::with_split(split))?;
    let mut rows = Vec::new();
    for &partition in &config.partitions {
        let report = evaluate(&model, split, partition, &config.ndcg_cutoffs)?;
        rows.extend(rows_for(cell, partition, &report));
    }
    Ok(rows)
}

/// Runs every cell, up to `jobs` at a time. A failed cell is logged and
/// recorded; the others still run. Rows come back in cell order.
pub fn run_sweep<F: Scalar>(
    config: &SweepConfig,
    split: &EvalSplit,
    catalog: &ItemCatalog,
) -> Result<SweepOutcome> {
    config.validate()?;
    let cells = config.cells();
    let run = || -> Vec<Result<Vec<SweepRow>>> {
        cells
            .par_iter()
            .map(|cell| {
                log::info!(
                    "sweep run {}: m={} correction={} seed={}",
                    cell.run,
                    cell.m,
                    cell.correction.as_str(),
                    cell.seed
                );
                run_cell::<F>(config, cell, split, catalog)
            })
            .collect()
    };
    let results = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
        .install(run);

    let mut outcome = SweepOutcome::default();
    for (cell, result) in cells.iter().zip(results) {
        match result {
            Ok(rows) => outcome.rows.extend(rows),
            Err(e) => {
                log::error!("sweep run {} failed: {e}", cell.run);
                outcome.failures.push((*cell, e.to_string()));
            }
        }
    }
    Ok(outcome)
}

/// Tidy CSV: `run,m,correction,seed,partition,metric,cutoff,value`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::io("sweep csv", e.into());
    w.write_record(["run", "m", "correction", "seed", "partition", "metric", "cutoff", "value"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.run.to_string(),
            r.m.to_string(),
            r.correction.as_str().to_string(),
            r.seed.to_string(),
            r.partition.as_str().to_string(),
            r.metric.clone(),
            r.cutoff.to_string(),
            format!("{}", r.value),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("sweep csv", e))?;
    Ok(())
}
