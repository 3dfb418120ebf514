use serde::{Deserialize, Serialize};

use super::manifest::{SizeManifest, SizeRecord};
use super::throughput::{Environment, TimingStats};
use crate::error::{Error, Result};
use crate::pack::PackingLayout;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Pad every batch to its own maximum height and width.
    #[serde(rename = "LMBR")]
    Lmbr,
    #[serde(rename = "PACKING")]
    Packing,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Lmbr => "LMBR",
            Strategy::Packing => "PACKING",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LMBR" => Ok(Strategy::Lmbr),
            "PACKING" => Ok(Strategy::Packing),
            _ => Err(Error::Argument(format!("unknown strategy {s:?}"))),
        }
    }
}

/// Pixel accounting for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub examples: usize,
    pub valid_pixels: usize,
    /// Pixels the batch occupies before skewing (valid + padding + separators).
    pub total_pixels: usize,
    /// Extra cells the input-skewing trick adds on top of `total_pixels`.
    pub skew_pixels: usize,
}

impl BatchStats {
    pub fn padded_pixels(&self) -> usize {
        self.total_pixels - self.valid_pixels
    }

    pub fn padded_fraction(&self) -> f64 {
        self.padded_pixels() as f64 / self.total_pixels as f64
    }
}

fn batch_stats_of(batch: &[SizeRecord], strategy: Strategy) -> BatchStats {
    let valid: usize = batch.iter().map(SizeRecord::area).sum();
    match strategy {
        Strategy::Lmbr => {
            let h = batch.iter().map(|r| r.height).max().unwrap_or(0);
            let w = batch.iter().map(|r| r.width).max().unwrap_or(0);
            BatchStats {
                examples: batch.len(),
                valid_pixels: valid,
                total_pixels: batch.len() * h * w,
                skew_pixels: batch.len() * h * h.saturating_sub(1),
            }
        }
        Strategy::Packing => {
            let sizes: Vec<_> = batch.iter().map(|r| (r.height, r.width)).collect();
            let layout = PackingLayout::plan(&sizes).expect("manifest sizes are positive");
            let h = layout.total_height;
            BatchStats {
                examples: batch.len(),
                valid_pixels: valid,
                total_pixels: layout.packed_area(),
                skew_pixels: h * (h - 1),
            }
        }
    }
}

/// Per-batch statistics with batches formed in manifest order.
pub fn batch_stats(m: &SizeManifest, batch_size: usize, strategy: Strategy) -> Result<Vec<BatchStats>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    Ok(m.records()
        .chunks(batch_size)
        .map(|b| batch_stats_of(b, strategy))
        .collect())
}

/// Memory cost model for one batch:
/// `fixed_overhead + valid · bytes_per_valid_pixel + padded · bytes_per_padded_pixel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub bytes_per_valid_pixel: f64,
    pub bytes_per_padded_pixel: f64,
    pub fixed_overhead_bytes: u64,
    pub budget_bytes: u64,
}

impl MemoryModel {
    pub fn validate(&self) -> Result<()> {
        let finite = self.bytes_per_valid_pixel.is_finite() && self.bytes_per_padded_pixel.is_finite();
        if !finite || self.bytes_per_valid_pixel <= 0.0 || self.bytes_per_padded_pixel < 0.0 || self.budget_bytes == 0 {
            return Err(Error::Argument(
                "memory model needs positive valid cost and budget, non-negative padded cost".into(),
            ));
        }
        Ok(())
    }

    pub fn batch_cost(&self, stats: &BatchStats) -> f64 {
        self.fixed_overhead_bytes as f64
            + stats.valid_pixels as f64 * self.bytes_per_valid_pixel
            + stats.padded_pixels() as f64 * self.bytes_per_padded_pixel
    }

    pub fn fits(&self, stats: &BatchStats) -> bool {
        self.batch_cost(stats) <= self.budget_bytes as f64
    }
}

/// One benchmark result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub num_batches: usize,
    pub num_examples: usize,
    pub valid_pixels: usize,
    pub total_pixels: usize,
    pub padded_pixels: usize,
    /// Padding share before skewing; separators count as padding.
    pub padded_fraction: f64,
    /// Share of skewed cells that exist only because of the skew.
    pub skew_overhead_fraction: f64,
    /// Worst single-batch padding share.
    pub max_batch_padded_fraction: f64,
    pub peak_batch_memory_bytes: Option<f64>,
    pub wall_time_per_batch: Option<TimingStats>,
    pub examples_per_second: Option<f64>,
    pub environment: Option<Environment>,
}

/// Aggregated padding statistics over all batches of `m`.
pub fn padding_stats(m: &SizeManifest, batch_size: usize, strategy: Strategy) -> Result<BenchReport> {
    let batches = batch_stats(m, batch_size, strategy)?;
    let valid: usize = batches.iter().map(|b| b.valid_pixels).sum();
    let total: usize = batches.iter().map(|b| b.total_pixels).sum();
    let skew: usize = batches.iter().map(|b| b.skew_pixels).sum();
    Ok(BenchReport {
        strategy,
        batch_size,
        num_batches: batches.len(),
        num_examples: m.len(),
        valid_pixels: valid,
        total_pixels: total,
        padded_pixels: total - valid,
        padded_fraction: (total - valid) as f64 / total as f64,
        skew_overhead_fraction: skew as f64 / (total + skew) as f64,
        max_batch_padded_fraction: batches.iter().map(BatchStats::padded_fraction).fold(0.0, f64::max),
        peak_batch_memory_bytes: None,
        wall_time_per_batch: None,
        examples_per_second: None,
        environment: None,
    })
}

/// Largest batch size `b` such that every batch of size `b` (manifest order)
/// fits the budget, scanning `b` upward from 1 and stopping at the first
/// size that does not fit.
pub fn max_batch_under_budget(m: &SizeManifest, mem: &MemoryModel, strategy: Strategy) -> Result<usize> {
    mem.validate()?;
    for r in m.records() {
        let alone = batch_stats_of(std::slice::from_ref(r), strategy);
        if !mem.fits(&alone) {
            return Err(Error::Capacity(format!(
                "example {} ({}x{}) alone needs {:.0} bytes, budget is {}",
                r.id,
                r.height,
                r.width,
                mem.batch_cost(&alone),
                mem.budget_bytes
            )));
        }
    }
    for b in 2..=m.len() {
        let all_fit = m
            .records()
            .chunks(b)
            .all(|batch| mem.fits(&batch_stats_of(batch, strategy)));
        if !all_fit {
            return Ok(b - 1);
        }
    }
    Ok(m.len())
}

/// Largest single-batch cost at batch size `b`.
pub fn peak_batch_cost(m: &SizeManifest, mem: &MemoryModel, b: usize, strategy: Strategy) -> Result<f64> {
    Ok(batch_stats(m, b, strategy)?
        .iter()
        .map(|s| mem.batch_cost(s))
        .fold(0.0, f64::max))
}
