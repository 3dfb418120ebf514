//! Binary parameter containers.
//!
//! All integers are `u32` and all reals `f32`, little-endian.
//!
//! Cell record:
//!
//! ```text
//! "MDLC" version hidden_size input_channels cell_kind(0 plain, 1 leaky_lp)
//! W_g W_i W_f1 W_f2 W_o          input_channels × hidden_size each
//! U1_g U1_i U1_f1 U1_f2 U1_o     hidden_size × hidden_size each (left predecessor)
//! U2_g U2_i U2_f1 U2_f2 U2_o     hidden_size × hidden_size each (top predecessor)
//! V1 V2                          hidden_size × hidden_size each
//! b_g b_i b_f1 b_f2 b_o          hidden_size each
//! ```
//!
//! Convolution record:
//!
//! ```text
//! "CONV" version in out kernel_h kernel_w stride_h stride_w groups_in groups_out
//! weights                        out × in/groups_in × kernel_h × kernel_w
//! bias                           out
//! ```
//!
//! Model file: `"GPMODEL\0" version record_count` followed by the twelve
//! recurrent cells (stage-major, direction order right-down, left-down,
//! right-up, left-up), the two convolutions and the projection.
//!
//! Each container has a JSON sidecar naming every block with its byte
//! offset and shape.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell::{CellKind, CellParams, Gate, GateWeights, NUM_GATES};
use crate::conv::ConvParams;
use crate::error::{Error, Result};
use crate::network::{NetworkParams, CONV_STAGES, DIRECTIONS, RECURRENT_STAGES};

pub const FORMAT_VERSION: u32 = 1;
const CELL_MAGIC: &[u8; 4] = b"MDLC";
const CONV_MAGIC: &[u8; 4] = b"CONV";
const MODEL_MAGIC: &[u8; 8] = b"GPMODEL\0";
const DIRECTION_NAMES: [&str; DIRECTIONS] = ["right_down", "left_down", "right_up", "left_up"];

/// One named matrix inside a binary record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSidecar {
    pub name: String,
    pub kind: String,
    pub offset: usize,
    pub length: usize,
    pub header: Vec<(String, u32)>,
    pub blocks: Vec<BlockInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub format_version: u32,
    pub records: Vec<RecordSidecar>,
}

struct Writer {
    buf: Vec<u8>,
    blocks: Vec<BlockInfo>,
}

impl Writer {
    fn new() -> Self {
        Self {
            buf: Vec::new(),
            blocks: Vec::new(),
        }
    }

    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn block(&mut self, name: &str, rows: usize, cols: usize, values: &[f32]) {
        debug_assert_eq!(values.len(), rows * cols);
        self.blocks.push(BlockInfo {
            name: name.to_string(),
            offset: self.buf.len(),
            rows,
            cols,
        });
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8]) -> Result<()> {
        let got = self.take(want.len())?;
        if got != want {
            return Err(Error::Format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(want),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn version(&mut self) -> Result<()> {
        let v = self.u32()?;
        if v != FORMAT_VERSION as usize {
            return Err(Error::Format(format!("unsupported format version {v}")));
        }
        Ok(())
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }
}

fn write_cell(w: &mut Writer, p: &CellParams) {
    let (c, h) = (p.input_channels, p.hidden_size);
    w.buf.extend_from_slice(CELL_MAGIC);
    w.u32(FORMAT_VERSION as usize);
    w.u32(h);
    w.u32(c);
    w.u32(p.kind.tag() as usize);
    for g in Gate::ALL {
        w.block(&format!("W_{}", g.name()), c, h, &p.gate(g).input);
    }
    for g in Gate::ALL {
        w.block(&format!("U1_{}", g.name()), h, h, &p.gate(g).left);
    }
    for g in Gate::ALL {
        w.block(&format!("U2_{}", g.name()), h, h, &p.gate(g).top);
    }
    w.block("V1", h, h, &p.peephole[0]);
    w.block("V2", h, h, &p.peephole[1]);
    for g in Gate::ALL {
        w.block(&format!("b_{}", g.name()), 1, h, &p.gate(g).bias);
    }
}

fn read_cell(r: &mut Reader) -> Result<CellParams> {
    r.magic(CELL_MAGIC)?;
    r.version()?;
    let h = r.u32()?;
    let c = r.u32()?;
    let tag = r.u32()? as u32;
    let kind = CellKind::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown cell kind {tag}")))?;
    if h == 0 || c == 0 {
        return Err(Error::Format("cell dimensions must be positive".into()));
    }
    let mut inputs = Vec::with_capacity(NUM_GATES);
    for _ in 0..NUM_GATES {
        inputs.push(r.floats(c * h)?);
    }
    let mut lefts = Vec::with_capacity(NUM_GATES);
    for _ in 0..NUM_GATES {
        lefts.push(r.floats(h * h)?);
    }
    let mut tops = Vec::with_capacity(NUM_GATES);
    for _ in 0..NUM_GATES {
        tops.push(r.floats(h * h)?);
    }
    let peephole = [r.floats(h * h)?, r.floats(h * h)?];
    let mut biases = Vec::with_capacity(NUM_GATES);
    for _ in 0..NUM_GATES {
        biases.push(r.floats(h)?);
    }
    let mut parts = inputs
        .into_iter()
        .zip(lefts)
        .zip(tops)
        .zip(biases)
        .map(|(((input, left), top), bias)| GateWeights { input, left, top, bias });
    let gates = std::array::from_fn(|_| parts.next().expect("five gates"));
    Ok(CellParams {
        kind,
        hidden_size: h,
        input_channels: c,
        gates,
        peephole,
    })
}

fn write_conv(w: &mut Writer, p: &ConvParams) {
    w.buf.extend_from_slice(CONV_MAGIC);
    w.u32(FORMAT_VERSION as usize);
    for v in [
        p.in_channels,
        p.out_channels,
        p.kernel_height,
        p.kernel_width,
        p.stride_height,
        p.stride_width,
        p.groups_in,
        p.groups_out,
    ] {
        w.u32(v);
    }
    let per_out = p.in_per_group() * p.kernel_height * p.kernel_width;
    w.block("weights", p.out_channels, per_out, &p.weights);
    w.block("bias", 1, p.out_channels, &p.bias);
}

fn read_conv(r: &mut Reader) -> Result<ConvParams> {
    r.magic(CONV_MAGIC)?;
    r.version()?;
    let mut dims = [0usize; 8];
    for d in &mut dims {
        *d = r.u32()?;
    }
    let [in_channels, out_channels, kh, kw, sh, sw, m, n] = dims;
    if m == 0 || in_channels % m != 0 {
        return Err(Error::Format("invalid convolution grouping".into()));
    }
    let weights = r.floats(out_channels * (in_channels / m) * kh * kw)?;
    let bias = r.floats(out_channels)?;
    let p = ConvParams {
        in_channels,
        out_channels,
        kernel_height: kh,
        kernel_width: kw,
        stride_height: sh,
        stride_width: sw,
        groups_in: m,
        groups_out: n,
        weights,
        bias,
    };
    p.validate()?;
    Ok(p)
}

fn finish(w: Writer, name: &str, kind: &str, header: Vec<(String, u32)>) -> (Vec<u8>, RecordSidecar) {
    let sidecar = RecordSidecar {
        name: name.to_string(),
        kind: kind.to_string(),
        offset: 0,
        length: w.buf.len(),
        header,
        blocks: w.blocks,
    };
    (w.buf, sidecar)
}

fn cell_header(p: &CellParams) -> Vec<(String, u32)> {
    vec![
        ("hidden_size".into(), p.hidden_size as u32),
        ("input_channels".into(), p.input_channels as u32),
        ("cell_kind".into(), p.kind.tag()),
    ]
}

fn conv_header(p: &ConvParams) -> Vec<(String, u32)> {
    [
        ("in_channels", p.in_channels),
        ("out_channels", p.out_channels),
        ("kernel_height", p.kernel_height),
        ("kernel_width", p.kernel_width),
        ("stride_height", p.stride_height),
        ("stride_width", p.stride_width),
        ("groups_in", p.groups_in),
        ("groups_out", p.groups_out),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v as u32))
    .collect()
}

/// Serializes one cell; the sidecar's block offsets are relative to the record.
pub fn encode_cell(p: &CellParams) -> (Vec<u8>, RecordSidecar) {
    let mut w = Writer::new();
    write_cell(&mut w, p);
    finish(w, "cell", "cell", cell_header(p))
}

pub fn decode_cell(bytes: &[u8]) -> Result<CellParams> {
    let mut r = Reader { bytes, pos: 0 };
    let p = read_cell(&mut r)?;
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after cell record".into()));
    }
    p.validate()?;
    Ok(p)
}

pub fn encode_conv(p: &ConvParams) -> (Vec<u8>, RecordSidecar) {
    let mut w = Writer::new();
    write_conv(&mut w, p);
    finish(w, "conv", "conv", conv_header(p))
}

pub fn decode_conv(bytes: &[u8]) -> Result<ConvParams> {
    let mut r = Reader { bytes, pos: 0 };
    let p = read_conv(&mut r)?;
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after convolution record".into()));
    }
    Ok(p)
}

/// Serializes all network weights into one container.
pub fn encode_model(params: &NetworkParams) -> (Vec<u8>, ModelSidecar) {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let count = RECURRENT_STAGES * DIRECTIONS + CONV_STAGES + 1;
    out.extend_from_slice(&(count as u32).to_le_bytes());

    let mut records = Vec::with_capacity(count);
    let mut push = |(bytes, mut side): (Vec<u8>, RecordSidecar), name: String, out: &mut Vec<u8>| {
        side.name = name;
        side.offset = out.len();
        for b in &mut side.blocks {
            b.offset += side.offset;
        }
        out.extend_from_slice(&bytes);
        records.push(side);
    };
    for (k, cells) in params.recurrent.iter().enumerate() {
        for (d, cell) in cells.iter().enumerate() {
            push(
                encode_cell(cell),
                format!("stage{}.{}", k + 1, DIRECTION_NAMES[d]),
                &mut out,
            );
        }
    }
    for (k, conv) in params.convs.iter().enumerate() {
        push(encode_conv(conv), format!("conv{}", k + 1), &mut out);
    }
    push(encode_conv(&params.projection), "projection".into(), &mut out);
    (
        out,
        ModelSidecar {
            format_version: FORMAT_VERSION,
            records,
        },
    )
}

pub fn decode_model(bytes: &[u8]) -> Result<NetworkParams> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(MODEL_MAGIC)?;
    r.version()?;
    let count = r.u32()?;
    if count != RECURRENT_STAGES * DIRECTIONS + CONV_STAGES + 1 {
        return Err(Error::Format(format!("unexpected record count {count}")));
    }
    let mut recurrent = Vec::with_capacity(RECURRENT_STAGES);
    for _ in 0..RECURRENT_STAGES {
        let cells = [
            read_cell(&mut r)?,
            read_cell(&mut r)?,
            read_cell(&mut r)?,
            read_cell(&mut r)?,
        ];
        for c in &cells {
            c.validate()?;
        }
        recurrent.push(cells);
    }
    let mut convs = Vec::with_capacity(CONV_STAGES);
    for _ in 0..CONV_STAGES {
        convs.push(read_conv(&mut r)?);
    }
    let projection = read_conv(&mut r)?;
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    Ok(NetworkParams {
        recurrent,
        convs,
        projection,
    })
}

/// Writes `path` and a JSON sidecar next to it (`path` with extension `json`).
pub fn save_model(path: impl AsRef<Path>, params: &NetworkParams) -> Result<()> {
    let path = path.as_ref();
    let (bytes, sidecar) = encode_model(params);
    fs::write(path, bytes)?;
    fs::write(path.with_extension("json"), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkParams> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cell_record_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = CellParams::random(CellKind::LeakyLp, 3, 2, 1.0, &mut rng).unwrap();
        let (bytes, side) = encode_cell(&p);
        assert_eq!(&bytes[..4], b"MDLC");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1);
        // 5 input blocks (3x2), 10 recurrent + 2 peephole blocks (2x2), 5 biases (2)
        assert_eq!(bytes.len(), 20 + 4 * (5 * 6 + 12 * 4 + 5 * 2));
        assert_eq!(side.blocks[0].name, "W_g");
        assert_eq!(side.blocks[0].offset, 20);
        let first = f32::from_le_bytes(bytes[20..24].try_into().unwrap());
        assert_eq!(first, p.gate(Gate::Candidate).input[0]);
        let names: Vec<_> = side.blocks.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(&names[15..18], &["V1", "V2", "b_g"]);
        assert_eq!(decode_cell(&bytes).unwrap(), p);
    }

    #[test]
    fn corrupted_records_are_rejected() {
        let p = CellParams::zeros(CellKind::Plain, 1, 1).unwrap();
        let (mut bytes, _) = encode_cell(&p);
        assert!(decode_cell(&bytes[..bytes.len() - 1]).is_err());
        bytes[16] = 7;
        assert!(matches!(decode_cell(&bytes), Err(Error::Format(_))));
        let conv = ConvParams::zeros(2, 4, (2, 1), (1, 2)).unwrap();
        let (bytes, _) = encode_conv(&conv);
        assert_eq!(decode_conv(&bytes).unwrap(), conv);
        assert!(decode_conv(&[&bytes[..], &[0]].concat()).is_err());
    }

    #[test]
    fn model_roundtrip_and_sidecar() {
        let cfg = NetworkConfig {
            hidden_sizes: vec![2, 3, 4],
            ..NetworkConfig::default()
        };
        let params = NetworkParams::random(&cfg, 5, 0.3).unwrap();
        let (bytes, side) = encode_model(&params);
        assert_eq!(side.records.len(), 15);
        assert_eq!(side.records[0].name, "stage1.right_down");
        assert_eq!(side.records[14].name, "projection");
        let last = &side.records[14];
        assert_eq!(last.offset + last.length, bytes.len());
        assert_eq!(decode_model(&bytes).unwrap(), params);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &params).unwrap();
        assert_eq!(load_model(&path).unwrap(), params);
        let sidecar: ModelSidecar = serde_json::from_slice(&fs::read(dir.path().join("model.json")).unwrap()).unwrap();
        assert_eq!(sidecar, side);
    }
}
