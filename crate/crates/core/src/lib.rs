//! Example-packing of variable-size 2-D inputs for multi-directional MDLSTM
//! networks, with the input-skewing trick, masked Leaky LP cells, grouped and
//! block-strided convolutions, and a padding/capacity benchmark harness.

pub mod cell;
pub mod conv;
pub mod ctc;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod model;
pub mod network;
pub mod pack;
pub mod skew;
pub mod split;

pub use cell::{
    leakylp_scan, mdlstm_4dir, mdlstm_scan, memory_trace, scan, scan_four_directions, scan_states, stability_trace,
    CellKind, CellParams, Direction, Gate, GateWeights, ScanOutput, NUM_GATES,
};
pub use conv::{
    block_strided_conv, chunk_tensor_list, chunked_block_conv, dechunk, grouped_pointwise_conv,
    replicate_inputs_for_groups, ChunkLayout, ChunkRecord, ConvParams,
};
pub use ctc::{greedy_ctc_decode, BLANK};
pub use error::{Error, Result};
pub use grid::{ImageGrid, MaskGrid};
pub use network::{network_forward, sequence_length, LogitSequence, NetworkConfig, NetworkParams};
pub use pack::{
    pack_and_skew, pack_examples, unpack_activations, ExampleRect, PackedBatch, PackedRow, PackingLayout, Placement,
};
pub use skew::{skew, skew_masked, unskew, SkewedGrid, SkewedView, Wavefront};
pub use split::{split_balanced, split_loads};

pub use num_rational::Ratio;
