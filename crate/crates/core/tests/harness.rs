use gridpack::harness::{
    batch_stats, load_manifest, max_batch_under_budget, padding_stats, synth_manifest, throughput_bench, HeightDist,
    MemoryModel, SizeManifest, SizeRecord, Strategy, SynthSpec, ThroughputOptions,
};
use gridpack::{pack_examples, CellKind, Error, ImageGrid, NetworkConfig};

fn unit_model(budget: u64) -> MemoryModel {
    MemoryModel {
        bytes_per_valid_pixel: 1.0,
        bytes_per_padded_pixel: 1.0,
        fixed_overhead_bytes: 0,
        budget_bytes: budget,
    }
}

fn manifest(sizes: &[(usize, usize)]) -> SizeManifest {
    SizeManifest::new(
        sizes
            .iter()
            .enumerate()
            .map(|(i, &(height, width))| SizeRecord {
                id: format!("r{i}"),
                height,
                width,
            })
            .collect(),
    )
    .unwrap()
}

/// Counts padding by materialising every batch: LMBR as zero-padded
/// tensors, packing as the real packed mask.
fn brute_force_padding(m: &SizeManifest, b: usize, strategy: Strategy) -> (usize, usize) {
    let mut padded = 0;
    let mut total = 0;
    for batch in m.records().chunks(b) {
        let ones: Vec<ImageGrid> = batch
            .iter()
            .map(|r| ImageGrid::new(r.height, r.width, 1, 1.0).unwrap())
            .collect();
        match strategy {
            Strategy::Lmbr => {
                let h = batch.iter().map(|r| r.height).max().unwrap();
                let w = batch.iter().map(|r| r.width).max().unwrap();
                for g in &ones {
                    let p = g.pad_to(h, w).unwrap();
                    padded += p.data().iter().filter(|&&v| v == 0.0).count();
                    total += p.area();
                }
            }
            Strategy::Packing => {
                let packed = pack_examples(&ones).unwrap();
                let bits = packed.mask.bits();
                padded += bits.iter().filter(|&&v| v == 0).count();
                total += bits.len();
                assert_eq!(
                    packed.grid.data().iter().filter(|&&v| v == 0.0).count(),
                    padded_in(bits)
                );
            }
        }
    }
    (padded, total)
}

fn padded_in(bits: &[u8]) -> usize {
    bits.iter().filter(|&&v| v == 0).count()
}

#[test]
fn manifest_csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sizes.csv");
    std::fs::write(&path, "id,height,width\na,3,10\nb,5,7\nc,1,1\n").unwrap();
    let m = load_manifest(&path).unwrap();
    assert_eq!(m.len(), 3);
    assert_eq!(m.sizes(), vec![(3, 10), (5, 7), (1, 1)]);

    std::fs::write(&path, "id,height,width\na,3,10\nb,0,7\n").unwrap();
    match load_manifest(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn word_preset_stays_in_range_and_is_deterministic() {
    let spec = SynthSpec::word_like();
    let m = synth_manifest(1000, &spec, 9).unwrap();
    let HeightDist::Buckets { heights } = &spec.heights;
    assert!(m.records().iter().all(|r| r.width > 0 && heights.contains(&r.height)));
    assert_eq!(m, synth_manifest(1000, &spec, 9).unwrap());
    assert_ne!(m, synth_manifest(1000, &spec, 10).unwrap());
}

#[test]
fn padding_matches_brute_force_pixel_count() {
    for (spec, b) in [
        (SynthSpec::word_like(), 20),
        (SynthSpec::line_like(), 8),
        (SynthSpec::word_like(), 7),
    ] {
        let m = synth_manifest(120, &spec.scaled_down(4), 3).unwrap();
        for s in [Strategy::Lmbr, Strategy::Packing] {
            let r = padding_stats(&m, b, s).unwrap();
            assert_eq!(
                (r.padded_pixels, r.total_pixels),
                brute_force_padding(&m, b, s),
                "{s:?} b={b}"
            );
        }
    }
}

#[test]
fn word_preset_padding_near_reference_and_packing_wins_every_batch() {
    let m = synth_manifest(1000, &SynthSpec::word_like(), 0).unwrap();
    let lmbr = padding_stats(&m, 20, Strategy::Lmbr).unwrap();
    assert!((0.65..=0.9).contains(&lmbr.padded_fraction), "{}", lmbr.padded_fraction);
    let l = batch_stats(&m, 20, Strategy::Lmbr).unwrap();
    let p = batch_stats(&m, 20, Strategy::Packing).unwrap();
    assert!(l.iter().zip(&p).all(|(l, p)| p.padded_fraction() < l.padded_fraction()));
}

#[test]
fn uniform_sizes_give_equal_capacity_when_padding_is_free() {
    let m = manifest(&[(4, 9); 30]);
    let mem = MemoryModel {
        bytes_per_padded_pixel: 0.0,
        ..unit_model(36 * 7)
    };
    let bl = max_batch_under_budget(&m, &mem, Strategy::Lmbr).unwrap();
    let bp = max_batch_under_budget(&m, &mem, Strategy::Packing).unwrap();
    assert_eq!((bl, bp), (7, 7));
}

#[test]
fn uniform_sizes_pay_for_separators_when_padding_costs() {
    // identical examples cannot share a row, so packing adds one separator row each
    let m = manifest(&[(4, 9); 30]);
    let bl = max_batch_under_budget(&m, &unit_model(36 * 7), Strategy::Lmbr).unwrap();
    let bp = max_batch_under_budget(&m, &unit_model(36 * 7), Strategy::Packing).unwrap();
    assert_eq!(bl, 7);
    assert_eq!(bp, 5);
}

#[test]
fn budget_equal_to_largest_example_gives_one() {
    let m = synth_manifest(50, &SynthSpec::word_like(), 1).unwrap();
    let largest = m.records().iter().map(SizeRecord::area).max().unwrap() as u64;
    for s in [Strategy::Lmbr, Strategy::Packing] {
        assert_eq!(max_batch_under_budget(&m, &unit_model(largest), s).unwrap(), 1);
    }
    assert!(matches!(
        max_batch_under_budget(&m, &unit_model(largest - 1), Strategy::Packing),
        Err(Error::Capacity(_))
    ));
}

#[test]
fn reports_are_deterministic() {
    let m = synth_manifest(200, &SynthSpec::line_like(), 4).unwrap();
    for s in [Strategy::Lmbr, Strategy::Packing] {
        assert_eq!(padding_stats(&m, 8, s).unwrap(), padding_stats(&m, 8, s).unwrap());
    }
}

#[test]
fn packing_throughput_is_at_least_lmbr() {
    let cfg = NetworkConfig {
        hidden_sizes: vec![2, 6, 12],
        strides: vec![(2, 2), (2, 2)],
        conv_channels: vec![4, 8],
        cell_kind: CellKind::LeakyLp,
        ..NetworkConfig::default()
    };
    let m = synth_manifest(40, &SynthSpec::word_like().scaled_down(4), 2).unwrap();
    let peak = batch_stats(&m, 8, Strategy::Lmbr)
        .unwrap()
        .iter()
        .map(|s| unit_model(1).batch_cost(s))
        .fold(0.0, f64::max);
    let opts = ThroughputOptions {
        repetitions: 3,
        seed: 1,
        parallel: false,
    };
    let r = throughput_bench(
        &cfg,
        &m,
        &[Strategy::Lmbr, Strategy::Packing],
        &unit_model(peak as u64),
        opts,
    )
    .unwrap();
    let (l, p) = (r[0].examples_per_second.unwrap(), r[1].examples_per_second.unwrap());
    println!(
        "LMBR b={} {l:.1} ex/s, PACKING b={} {p:.1} ex/s",
        r[0].batch_size, r[1].batch_size
    );
    assert!(p >= l, "packing {p:.2} ex/s < lmbr {l:.2} ex/s");
}
