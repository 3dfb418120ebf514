//! Padding-waste, batch-capacity and throughput analysis of example-packing
//! against per-batch padding (LMBR: pad every batch to its own maximum
//! height and width).

mod manifest;
mod padding;
mod stability;
mod throughput;

pub use manifest::{load_manifest, synth_manifest, HeightDist, SizeManifest, SizeRecord, SynthSpec, WidthDist};
pub use padding::{
    batch_stats, max_batch_under_budget, padding_stats, peak_batch_cost, BatchStats, BenchReport, MemoryModel,
    Strategy, REPORT_SCHEMA_VERSION,
};
pub use stability::{stability_csv, stability_report, TraceRow};
pub use throughput::{
    forward_with_strategy, synth_images, throughput_bench, Environment, ThroughputOptions, TimingStats,
};
