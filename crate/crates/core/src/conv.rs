//! Grouped and block-strided convolutions plus tensor-list chunking.
//!
//! Only non-overlapping convolutions are supported: the kernel always equals
//! the stride, so every output pixel is a dense map of one disjoint input
//! block. With `m` input groups and `n` output groups (`n` a multiple of
//! `m`), output group `j` reads only input group `j * m / n`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub stride_height: usize,
    pub stride_width: usize,
    pub groups_in: usize,
    pub groups_out: usize,
    /// `out_channels × (in_channels / groups_in) × kernel_height × kernel_width`
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvParams {
    /// Zero-initialised parameters with stride equal to the kernel.
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        groups: (usize, usize),
    ) -> Result<Self> {
        let (kh, kw) = kernel;
        let (m, n) = groups;
        check_grouping(in_channels, out_channels, m, n)?;
        if kh == 0 || kw == 0 {
            return Err(Error::Dimension("kernel dimensions must be positive".into()));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_height: kh,
            kernel_width: kw,
            stride_height: kh,
            stride_width: kw,
            groups_in: m,
            groups_out: n,
            weights: vec![0.0; out_channels * (in_channels / m) * kh * kw],
            bias: vec![0.0; out_channels],
        })
    }

    pub fn random(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        groups: (usize, usize),
        scale: f32,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut p = Self::zeros(in_channels, out_channels, kernel, groups)?;
        for v in p.weights.iter_mut().chain(p.bias.iter_mut()) {
            *v = rng.random_range(-scale..=scale);
        }
        Ok(p)
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups_in
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups_out
    }

    /// Input group read by output group `j`.
    pub fn input_group_of(&self, out_group: usize) -> usize {
        out_group * self.groups_in / self.groups_out
    }

    fn weight_index(&self, out: usize, cin: usize, dy: usize, dx: usize) -> usize {
        ((out * self.in_per_group() + cin) * self.kernel_height + dy) * self.kernel_width + dx
    }

    pub fn weight(&self, out: usize, cin: usize, dy: usize, dx: usize) -> f32 {
        self.weights[self.weight_index(out, cin, dy, dx)]
    }

    pub fn set_weight(&mut self, out: usize, cin: usize, dy: usize, dx: usize, v: f32) {
        let i = self.weight_index(out, cin, dy, dx);
        self.weights[i] = v;
    }

    pub fn validate(&self) -> Result<()> {
        check_grouping(self.in_channels, self.out_channels, self.groups_in, self.groups_out)?;
        if self.kernel_height == 0 || self.kernel_width == 0 || self.stride_height == 0 || self.stride_width == 0 {
            return Err(Error::Dimension("kernel and stride must be positive".into()));
        }
        let expected = self.out_channels * self.in_per_group() * self.kernel_height * self.kernel_width;
        if self.weights.len() != expected || self.bias.len() != self.out_channels {
            return Err(Error::Shape(format!(
                "expected {expected} weights and {} biases, found {} and {}",
                self.out_channels,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if !self.weights.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::Argument("convolution weights must be finite".into()));
        }
        Ok(())
    }
}

fn check_grouping(in_ch: usize, out_ch: usize, m: usize, n: usize) -> Result<()> {
    if in_ch == 0 || out_ch == 0 {
        return Err(Error::Dimension("channel counts must be positive".into()));
    }
    if m == 0 || n == 0 {
        return Err(Error::Grouping("group counts must be positive".into()));
    }
    if !n.is_multiple_of(m) {
        return Err(Error::Grouping(format!(
            "{n} output groups is not a multiple of {m} input groups"
        )));
    }
    if !in_ch.is_multiple_of(m) || !out_ch.is_multiple_of(n) {
        return Err(Error::Grouping(format!(
            "{in_ch} inputs / {out_ch} outputs do not divide into {m} / {n} groups"
        )));
    }
    Ok(())
}

/// Applies the kernel to each disjoint block of a grid whose dimensions are
/// exact multiples of the kernel.
fn conv_blocks(p: &ConvParams, g: &ImageGrid) -> Result<ImageGrid> {
    let (kh, kw) = (p.kernel_height, p.kernel_width);
    debug_assert!(g.height().is_multiple_of(kh) && g.width().is_multiple_of(kw));
    let (oh, ow) = (g.height() / kh, g.width() / kw);
    let (ipg, opg) = (p.in_per_group(), p.out_per_group());
    let mut out = ImageGrid::zeros(oh, ow, p.out_channels)?;
    for r in 0..oh {
        for c in 0..ow {
            let px = out.pixel_mut(r, c);
            px.copy_from_slice(&p.bias);
            for (o, acc) in px.iter_mut().enumerate() {
                let in_start = p.input_group_of(o / opg) * ipg;
                for dy in 0..kh {
                    for dx in 0..kw {
                        let input = g.pixel(r * kh + dy, c * kw + dx);
                        for ci in 0..ipg {
                            *acc += p.weight(o, ci, dy, dx) * input[in_start + ci];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 1×1 convolution with `m` input and `n` output groups.
pub fn grouped_pointwise_conv(p: &ConvParams, g: &ImageGrid) -> Result<ImageGrid> {
    p.validate()?;
    if (p.kernel_height, p.kernel_width, p.stride_height, p.stride_width) != (1, 1, 1, 1) {
        return Err(Error::Argument(
            "pointwise convolution needs 1x1 kernel and stride".into(),
        ));
    }
    if g.channels() != p.in_channels {
        return Err(Error::Shape(format!(
            "grid has {} channels, convolution expects {}",
            g.channels(),
            p.in_channels
        )));
    }
    conv_blocks(p, g)
}

fn round_up(v: usize, m: usize) -> usize {
    v.div_ceil(m) * m
}

/// Convolution whose stride equals its kernel. Inputs are zero-padded at the
/// bottom/right to kernel multiples, so the output is
/// `ceil(H / kh) × ceil(W / kw) × out_channels`.
pub fn block_strided_conv(p: &ConvParams, g: &ImageGrid) -> Result<ImageGrid> {
    p.validate()?;
    if p.kernel_height != p.stride_height || p.kernel_width != p.stride_width {
        return Err(Error::Argument(
            "block-strided convolution needs stride equal to kernel".into(),
        ));
    }
    if g.channels() != p.in_channels {
        return Err(Error::Shape(format!(
            "grid has {} channels, convolution expects {}",
            g.channels(),
            p.in_channels
        )));
    }
    let (ph, pw) = (
        round_up(g.height(), p.kernel_height),
        round_up(g.width(), p.kernel_width),
    );
    if (ph, pw) == (g.height(), g.width()) {
        conv_blocks(p, g)
    } else {
        conv_blocks(p, &g.pad_to(ph, pw)?)
    }
}

/// Repeats equal-size channel blocks: block `i` appears `replication[i]`
/// times, in order.
pub fn replicate_inputs_for_groups(g: &ImageGrid, replication: &[usize]) -> Result<ImageGrid> {
    if replication.is_empty() || replication.contains(&0) {
        return Err(Error::Argument(
            "replication counts must be non-empty and positive".into(),
        ));
    }
    if !g.channels().is_multiple_of(replication.len()) {
        return Err(Error::Shape(format!(
            "{} channels do not split into {} blocks",
            g.channels(),
            replication.len()
        )));
    }
    let block = g.channels() / replication.len();
    let mut parts = Vec::with_capacity(replication.iter().sum());
    for (i, &count) in replication.iter().enumerate() {
        let part = g.channel_slice(i * block, block)?;
        parts.extend(std::iter::repeat_n(part, count));
    }
    ImageGrid::concat_channels(&parts)
}

/// Provenance of one tensor's blocks in a chunked stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub example_index: usize,
    pub height: usize,
    pub width: usize,
    pub padded_height: usize,
    pub padded_width: usize,
    /// Blocks side by side in one block row.
    pub blocks_per_row: usize,
    /// Block rows stacked vertically.
    pub blocks_per_col: usize,
    pub block_start: usize,
    pub block_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkLayout {
    pub block_height: usize,
    pub block_width: usize,
    pub records: Vec<ChunkRecord>,
}

impl ChunkLayout {
    pub fn total_blocks(&self) -> usize {
        self.records.last().map_or(0, |r| r.block_end)
    }
}

/// Cuts every tensor into `block_h × block_w` blocks (zero-padding bottom and
/// right), in row-major block order, and stacks all blocks into one list.
pub fn chunk_tensor_list(
    tensors: &[ImageGrid],
    block_h: usize,
    block_w: usize,
) -> Result<(Vec<ImageGrid>, ChunkLayout)> {
    if block_h == 0 || block_w == 0 {
        return Err(Error::Argument("block dimensions must be positive".into()));
    }
    let mut blocks = Vec::new();
    let mut records = Vec::with_capacity(tensors.len());
    for (i, t) in tensors.iter().enumerate() {
        let (ph, pw) = (round_up(t.height(), block_h), round_up(t.width(), block_w));
        let padded = if (ph, pw) == (t.height(), t.width()) {
            t.clone()
        } else {
            t.pad_to(ph, pw)?
        };
        let start = blocks.len();
        let (per_col, per_row) = (ph / block_h, pw / block_w);
        for br in 0..per_col {
            for bc in 0..per_row {
                blocks.push(padded.crop(br * block_h, bc * block_w, block_h, block_w)?);
            }
        }
        records.push(ChunkRecord {
            example_index: i,
            height: t.height(),
            width: t.width(),
            padded_height: ph,
            padded_width: pw,
            blocks_per_row: per_row,
            blocks_per_col: per_col,
            block_start: start,
            block_end: blocks.len(),
        });
    }
    Ok((
        blocks,
        ChunkLayout {
            block_height: block_h,
            block_width: block_w,
            records,
        },
    ))
}

/// Reassembles per-block outputs of size `out_block_h × out_block_w` into one
/// grid per original tensor, cropping away output that stems purely from
/// padding.
pub fn dechunk(
    outputs: &[ImageGrid],
    layout: &ChunkLayout,
    out_block_h: usize,
    out_block_w: usize,
) -> Result<Vec<ImageGrid>> {
    if outputs.len() != layout.total_blocks() {
        return Err(Error::Layout(format!(
            "{} output blocks for a layout of {}",
            outputs.len(),
            layout.total_blocks()
        )));
    }
    let Some(first) = outputs.first() else {
        return Ok(Vec::new());
    };
    let channels = first.channels();
    if outputs
        .iter()
        .any(|o| o.height() != out_block_h || o.width() != out_block_w || o.channels() != channels)
    {
        return Err(Error::Layout(format!(
            "every output block must be {out_block_h}x{out_block_w}x{channels}"
        )));
    }
    layout
        .records
        .iter()
        .map(|rec| {
            if rec.block_end - rec.block_start != rec.blocks_per_row * rec.blocks_per_col {
                return Err(Error::Layout(format!(
                    "record {} has an inconsistent block range",
                    rec.example_index
                )));
            }
            let mut full = ImageGrid::zeros(
                rec.blocks_per_col * out_block_h,
                rec.blocks_per_row * out_block_w,
                channels,
            )?;
            for (k, block) in outputs[rec.block_start..rec.block_end].iter().enumerate() {
                let (br, bc) = (k / rec.blocks_per_row, k % rec.blocks_per_row);
                full.paste(block, br * out_block_h, bc * out_block_w);
            }
            let h = (rec.height * out_block_h).div_ceil(layout.block_height);
            let w = (rec.width * out_block_w).div_ceil(layout.block_width);
            if (h, w) == (full.height(), full.width()) {
                Ok(full)
            } else {
                full.crop(0, 0, h, w)
            }
        })
        .collect()
}

/// Block-strided convolution of a tensor list through one stacked block batch.
pub fn chunked_block_conv(p: &ConvParams, tensors: &[ImageGrid]) -> Result<Vec<ImageGrid>> {
    let (blocks, layout) = chunk_tensor_list(tensors, p.kernel_height, p.kernel_width)?;
    let outputs = blocks
        .iter()
        .map(|b| block_strided_conv(p, b))
        .collect::<Result<Vec<_>>>()?;
    dechunk(&outputs, &layout, 1, 1)
}
