//! Criterion benchmarks for the packing, skewing, scan and convolution kernels live in `benches/`.
