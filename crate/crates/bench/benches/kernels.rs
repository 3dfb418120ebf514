use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gridpack::{
    chunked_block_conv, network_forward, pack_and_skew, pack_examples, scan, skew, unskew, CellKind, CellParams,
    ConvParams, ImageGrid, NetworkConfig, NetworkParams, SkewedView,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn examples(n: usize, channels: usize, seed: u64) -> Vec<ImageGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let h = [8, 12, 16][rng.random_range(0..3)];
            let w = rng.random_range(8..64);
            ImageGrid::from_fn(h, w, channels, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
        })
        .collect()
}

fn bench_pack(c: &mut Criterion) {
    let mut g = c.benchmark_group("pack");
    for n in [16, 64] {
        let xs = examples(n, 1, 1);
        g.bench_with_input(BenchmarkId::new("pack_examples", n), &xs, |b, xs| {
            b.iter(|| pack_examples(black_box(xs)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("pack_and_skew", n), &xs, |b, xs| {
            b.iter(|| pack_and_skew(black_box(xs)).unwrap())
        });
    }
    g.finish();
}

fn bench_skew(c: &mut Criterion) {
    let grid = ImageGrid::from_fn(32, 256, 8, |r, c, k| (r + c + k) as f32).unwrap();
    let skewed = skew(&grid);
    c.bench_function("skew/32x256x8", |b| b.iter(|| skew(black_box(&grid))));
    c.bench_function("unskew/32x256x8", |b| b.iter(|| unskew(black_box(&skewed)).unwrap()));
}

fn bench_scan(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = ImageGrid::from_fn(24, 96, 4, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
    let skewed = skew(&grid);
    let mut g = c.benchmark_group("scan");
    for (kind, name) in [(CellKind::Plain, "plain"), (CellKind::LeakyLp, "leaky_lp")] {
        let p = CellParams::random(kind, 4, 16, 0.2, &mut rng).unwrap();
        g.bench_function(BenchmarkId::new("materialised", name), |b| {
            b.iter(|| scan(&p, black_box(&skewed)).unwrap())
        });
        g.bench_function(BenchmarkId::new("lazy", name), |b| {
            b.iter(|| scan(&p, &SkewedView::new(black_box(&grid))).unwrap())
        });
    }
    g.finish();
}

fn bench_chunked_conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs = examples(32, 8, 4);
    let p = ConvParams::random(8, 16, (2, 2), (4, 4), 0.2, &mut rng).unwrap();
    c.bench_function("chunked_block_conv/32x8ch", |b| {
        b.iter(|| chunked_block_conv(&p, black_box(&xs)).unwrap())
    });
}

fn bench_network(c: &mut Criterion) {
    let cfg = NetworkConfig {
        hidden_sizes: vec![2, 6, 12],
        strides: vec![(2, 2), (2, 2)],
        conv_channels: vec![4, 8],
        cell_kind: CellKind::LeakyLp,
        ..NetworkConfig::default()
    };
    let params = NetworkParams::random(&cfg, 5, 0.1).unwrap();
    let xs = examples(16, 1, 6);
    c.bench_function("network_forward/16", |b| {
        b.iter(|| network_forward(&cfg, &params, black_box(&xs)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_pack, bench_skew, bench_scan, bench_chunked_conv, bench_network
}
criterion_main!(benches);
