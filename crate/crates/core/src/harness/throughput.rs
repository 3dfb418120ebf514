use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::SizeManifest;
use super::padding::{max_batch_under_budget, padding_stats, peak_batch_cost, BenchReport, MemoryModel, Strategy};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::network::{network_forward, LogitSequence, NetworkConfig, NetworkParams};

/// Wall-clock seconds per batch across repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub repetitions: usize,
    pub min_seconds: f64,
    pub median_seconds: f64,
    pub max_seconds: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Argument("no timing samples".into()));
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        Ok(Self {
            repetitions: n,
            min_seconds: s[0],
            median_seconds: median,
            max_seconds: s[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub worker_threads: usize,
    pub parallel: bool,
    pub debug_build: bool,
    pub crate_version: String,
}

impl Environment {
    pub fn capture(parallel: bool) -> Self {
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            worker_threads: if parallel { rayon::current_num_threads() } else { 1 },
            parallel,
            debug_build: cfg!(debug_assertions),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThroughputOptions {
    pub repetitions: usize,
    pub seed: u64,
    /// Run batches concurrently. Timings then measure parallel throughput.
    pub parallel: bool,
}

impl Default for ThroughputOptions {
    fn default() -> Self {
        Self {
            repetitions: 3,
            seed: 0,
            parallel: false,
        }
    }
}

/// One single-channel image per manifest record, pixel values uniform in `[0, 1)`.
pub fn synth_images(m: &SizeManifest, seed: u64) -> Result<Vec<ImageGrid>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    m.records()
        .iter()
        .map(|r| ImageGrid::from_fn(r.height, r.width, 1, |_, _, _| rng.random::<f32>()))
        .collect()
}

/// Runs one batch the way `strategy` would feed it to the network.
///
/// LMBR zero-pads every example to the batch maximum first, so the packed
/// grid degenerates to a stack of equally sized tensors.
pub fn forward_with_strategy(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    batch: &[ImageGrid],
    strategy: Strategy,
) -> Result<Vec<LogitSequence>> {
    match strategy {
        Strategy::Packing => network_forward(cfg, params, batch),
        Strategy::Lmbr => {
            let h = batch.iter().map(ImageGrid::height).max().unwrap_or(0);
            let w = batch.iter().map(ImageGrid::width).max().unwrap_or(0);
            let padded = batch.iter().map(|g| g.pad_to(h, w)).collect::<Result<Vec<_>>>()?;
            network_forward(cfg, params, &padded)
        }
    }
}

/// Times one pass over `m` per strategy, each at its largest batch size under `mem`.
pub fn throughput_bench(
    cfg: &NetworkConfig,
    m: &SizeManifest,
    strategies: &[Strategy],
    mem: &MemoryModel,
    opts: ThroughputOptions,
) -> Result<Vec<BenchReport>> {
    if strategies.is_empty() {
        return Ok(Vec::new());
    }
    if opts.repetitions == 0 {
        return Err(Error::Argument("repetitions must be at least 1".into()));
    }
    for r in m.records() {
        cfg.stage_sizes(r.height, r.width).map_err(|e| match e {
            Error::StageUnderflow { stage, detail } => Error::StageUnderflow {
                stage,
                detail: format!("example {}: {detail}", r.id),
            },
            other => other,
        })?;
    }
    let params = NetworkParams::random(cfg, opts.seed, 0.1)?;
    let images = synth_images(m, opts.seed)?;
    let env = Environment::capture(opts.parallel);

    let mut reports = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let b = max_batch_under_budget(m, mem, strategy)?;
        let batches: Vec<&[ImageGrid]> = images.chunks(b).collect();
        let mut per_batch = Vec::with_capacity(opts.repetitions);
        let mut per_pass = Vec::with_capacity(opts.repetitions);
        for _ in 0..opts.repetitions {
            let start = Instant::now();
            if opts.parallel {
                batches
                    .par_iter()
                    .try_for_each(|batch| forward_with_strategy(cfg, &params, batch, strategy).map(drop))?;
            } else {
                for batch in &batches {
                    forward_with_strategy(cfg, &params, batch, strategy)?;
                }
            }
            let secs = start.elapsed().as_secs_f64();
            per_pass.push(secs);
            per_batch.push(secs / batches.len() as f64);
        }
        let pass = TimingStats::from_samples(&per_pass)?;
        let mut report = padding_stats(m, b, strategy)?;
        report.peak_batch_memory_bytes = Some(peak_batch_cost(m, mem, b, strategy)?);
        report.wall_time_per_batch = Some(TimingStats::from_samples(&per_batch)?);
        report.examples_per_second = Some(m.len() as f64 / pass.median_seconds.max(f64::MIN_POSITIVE));
        report.environment = Some(env.clone());
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SizeRecord;

    #[test]
    fn timing_aggregation() {
        let t = TimingStats::from_samples(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((t.min_seconds, t.median_seconds, t.max_seconds), (1.0, 2.0, 3.0));
        assert_eq!(t.repetitions, 3);
        assert_eq!(TimingStats::from_samples(&[1.0, 4.0]).unwrap().median_seconds, 2.5);
        assert!(TimingStats::from_samples(&[]).is_err());
    }

    fn tiny() -> (NetworkConfig, SizeManifest, MemoryModel) {
        let cfg = NetworkConfig {
            hidden_sizes: vec![2, 3, 4],
            strides: vec![(2, 2), (1, 2)],
            conv_channels: vec![2, 3],
            alphabet: ["_", "a", "b"].iter().map(|s| s.to_string()).collect(),
            ..NetworkConfig::default()
        };
        let sizes = [(4, 9), (6, 5), (4, 12), (2, 8), (6, 4)];
        let m = SizeManifest::new(
            sizes
                .iter()
                .enumerate()
                .map(|(i, &(height, width))| SizeRecord {
                    id: format!("x{i}"),
                    height,
                    width,
                })
                .collect(),
        )
        .unwrap();
        let mem = MemoryModel {
            bytes_per_valid_pixel: 1.0,
            bytes_per_padded_pixel: 1.0,
            fixed_overhead_bytes: 0,
            budget_bytes: 120,
        };
        (cfg, m, mem)
    }

    #[test]
    fn undersized_examples_fail_before_timing() {
        let (cfg, _, mem) = tiny();
        let m = SizeManifest::new(vec![SizeRecord {
            id: "thin".into(),
            height: 1,
            width: 9,
        }])
        .unwrap();
        let err = throughput_bench(&cfg, &m, &[Strategy::Packing], &mem, ThroughputOptions::default()).unwrap_err();
        assert!(
            matches!(err, Error::StageUnderflow { ref stage, .. } if stage == "conv1"),
            "{err}"
        );
    }

    #[test]
    fn empty_strategy_list_gives_empty_report() {
        let (cfg, m, mem) = tiny();
        assert!(throughput_bench(&cfg, &m, &[], &mem, ThroughputOptions::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn reports_carry_timing_and_environment() {
        let (cfg, m, mem) = tiny();
        for parallel in [false, true] {
            let opts = ThroughputOptions {
                repetitions: 3,
                seed: 4,
                parallel,
            };
            let reports = throughput_bench(&cfg, &m, &[Strategy::Lmbr, Strategy::Packing], &mem, opts).unwrap();
            assert_eq!(reports.len(), 2);
            for r in &reports {
                let t = r.wall_time_per_batch.unwrap();
                assert_eq!(t.repetitions, 3);
                assert!(t.min_seconds <= t.median_seconds && t.median_seconds <= t.max_seconds);
                assert!(r.examples_per_second.unwrap() > 0.0);
                assert!(r.peak_batch_memory_bytes.unwrap() <= 120.0);
                assert_eq!(r.environment.as_ref().unwrap().parallel, parallel);
            }
        }
    }

    #[test]
    fn lmbr_and_packing_agree_on_equal_sizes() {
        let (cfg, _, _) = tiny();
        let params = NetworkParams::random(&cfg, 9, 0.3).unwrap();
        let m = SizeManifest::new(
            (0..3)
                .map(|i| SizeRecord {
                    id: i.to_string(),
                    height: 4,
                    width: 8,
                })
                .collect(),
        )
        .unwrap();
        let imgs = synth_images(&m, 1).unwrap();
        let a = forward_with_strategy(&cfg, &params, &imgs, Strategy::Lmbr).unwrap();
        let b = forward_with_strategy(&cfg, &params, &imgs, Strategy::Packing).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.max_abs_diff(y), Some(0.0));
        }
    }
}
