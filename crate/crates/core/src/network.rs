//! The end-to-end recognition network.
//!
//! Three four-directional recurrent stages, separated by two block-strided
//! convolutions, followed by a per-pixel projection shared across
//! directions. Recurrent stages run on packed batches; convolutions run on
//! chunked block stacks. Each example's result does not depend on which
//! other examples share its batch.
//!
//! ```text
//! pack -> 4-dir scan -> unpack -> chunk -> conv -> dechunk -> sum directions
//! pack -> 4-dir scan -> unpack -> chunk -> conv -> dechunk -> sum directions
//! pack -> 4-dir scan -> unpack -> sum directions -> 1x1 projection -> sum over height
//! ```

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cell::{scan_four_directions, CellKind, CellParams};
use crate::conv::{chunked_block_conv, ConvParams};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::pack::{pack_examples, unpack_activations};

pub const RECURRENT_STAGES: usize = 3;
pub const CONV_STAGES: usize = 2;
pub const DIRECTIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    #[serde(default = "one")]
    pub input_channels: usize,
    pub hidden_sizes: Vec<usize>,
    /// `(height, width)` kernel = stride of each intermediate convolution.
    pub strides: Vec<(usize, usize)>,
    pub conv_channels: Vec<usize>,
    /// Output symbols; index 0 is the CTC blank.
    pub alphabet: Vec<String>,
    pub cell_kind: CellKind,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let mut alphabet = vec!["_".to_string(), " ".to_string()];
        alphabet.extend(('a'..='z').chain('A'..='Z').map(String::from));
        Self {
            input_channels: 1,
            hidden_sizes: vec![4, 20, 100],
            strides: vec![(4, 2), (4, 2)],
            conv_channels: vec![12, 32],
            alphabet,
            cell_kind: CellKind::LeakyLp,
        }
    }
}

fn one() -> usize {
    1
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.len() != RECURRENT_STAGES
            || self.strides.len() != CONV_STAGES
            || self.conv_channels.len() != CONV_STAGES
        {
            return Err(Error::Argument(format!(
                "network needs {RECURRENT_STAGES} hidden sizes, {CONV_STAGES} strides and {CONV_STAGES} conv channel counts"
            )));
        }
        if self.alphabet.is_empty() {
            return Err(Error::Argument("alphabet must not be empty".into()));
        }
        if self.input_channels == 0
            || self.hidden_sizes.contains(&0)
            || self.conv_channels.contains(&0)
            || self.strides.iter().any(|&(h, w)| h == 0 || w == 0)
        {
            return Err(Error::Argument("sizes and strides must be positive".into()));
        }
        Ok(())
    }

    /// Input channels of recurrent stage `k`.
    pub fn stage_input_channels(&self, k: usize) -> usize {
        if k == 0 {
            self.input_channels
        } else {
            self.conv_channels[k - 1]
        }
    }

    /// Spatial size after every convolution stage, or the stage that
    /// underflows. A stage underflows when its input is smaller than its
    /// stride along either axis.
    pub fn stage_sizes(&self, height: usize, width: usize) -> Result<Vec<(usize, usize)>> {
        let mut sizes = vec![(height, width)];
        let (mut h, mut w) = (height, width);
        for (k, &(sh, sw)) in self.strides.iter().enumerate() {
            if h < sh || w < sw {
                return Err(Error::StageUnderflow {
                    stage: format!("conv{}", k + 1),
                    detail: format!("{h}x{w} input is smaller than the {sh}x{sw} stride"),
                });
            }
            h = h.div_ceil(sh);
            w = w.div_ceil(sw);
            sizes.push((h, w));
        }
        Ok(sizes)
    }
}

/// Output length for an input of the given width.
pub fn sequence_length(cfg: &NetworkConfig, width: usize) -> Result<usize> {
    let mut w = width;
    for (k, &(_, sw)) in cfg.strides.iter().enumerate() {
        if w < sw {
            return Err(Error::StageUnderflow {
                stage: format!("conv{}", k + 1),
                detail: format!("width {w} is smaller than stride width {sw}"),
            });
        }
        w = w.div_ceil(sw);
    }
    Ok(w)
}

/// All weights of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// Per stage, one cell per direction in `Direction::ALL` order.
    pub recurrent: Vec<[CellParams; DIRECTIONS]>,
    /// Per-direction convolutions, stored as one grouped convolution with
    /// four input and four output groups.
    pub convs: Vec<ConvParams>,
    /// 1×1 projection from the final hidden size to the alphabet.
    pub projection: ConvParams,
}

impl NetworkParams {
    pub fn zeros(cfg: &NetworkConfig) -> Result<Self> {
        Self::build(cfg, CellParams::zeros, |i, o, k, g| ConvParams::zeros(i, o, k, g))
    }

    /// Uniform weights in `[-scale, scale]` from a seeded generator.
    pub fn random(cfg: &NetworkConfig, seed: u64, scale: f32) -> Result<Self> {
        let rng = std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(seed));
        Self::build(
            cfg,
            |kind, i, h| CellParams::random(kind, i, h, scale, &mut *rng.borrow_mut()),
            |i, o, k, g| ConvParams::random(i, o, k, g, scale, &mut *rng.borrow_mut()),
        )
    }

    fn build(
        cfg: &NetworkConfig,
        mut cell: impl FnMut(CellKind, usize, usize) -> Result<CellParams>,
        mut conv: impl FnMut(usize, usize, (usize, usize), (usize, usize)) -> Result<ConvParams>,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut recurrent = Vec::with_capacity(RECURRENT_STAGES);
        let mut convs = Vec::with_capacity(CONV_STAGES);
        for k in 0..RECURRENT_STAGES {
            let (inputs, hidden) = (cfg.stage_input_channels(k), cfg.hidden_sizes[k]);
            let cells = [
                cell(cfg.cell_kind, inputs, hidden)?,
                cell(cfg.cell_kind, inputs, hidden)?,
                cell(cfg.cell_kind, inputs, hidden)?,
                cell(cfg.cell_kind, inputs, hidden)?,
            ];
            recurrent.push(cells);
            if k < CONV_STAGES {
                convs.push(conv(
                    DIRECTIONS * hidden,
                    DIRECTIONS * cfg.conv_channels[k],
                    cfg.strides[k],
                    (DIRECTIONS, DIRECTIONS),
                )?);
            }
        }
        let projection = conv(cfg.hidden_sizes[2], cfg.alphabet.len(), (1, 1), (1, 1))?;
        Ok(Self {
            recurrent,
            convs,
            projection,
        })
    }

    /// Checks that the parameter shapes fit `cfg`.
    pub fn check_against(&self, cfg: &NetworkConfig) -> Result<()> {
        cfg.validate()?;
        let expected = Self::zeros(cfg)?;
        let shape_of_cell = |p: &CellParams| (p.kind, p.input_channels, p.hidden_size);
        let shape_of_conv = |p: &ConvParams| {
            (
                p.in_channels,
                p.out_channels,
                p.kernel_height,
                p.kernel_width,
                p.stride_height,
                p.stride_width,
                p.groups_in,
                p.groups_out,
            )
        };
        if self.recurrent.len() != RECURRENT_STAGES || self.convs.len() != CONV_STAGES {
            return Err(Error::Shape("wrong number of network stages".into()));
        }
        for (k, (got, want)) in self.recurrent.iter().zip(&expected.recurrent).enumerate() {
            for (g, w) in got.iter().zip(want) {
                if shape_of_cell(g) != shape_of_cell(w) {
                    return Err(Error::Shape(format!(
                        "recurrent stage {} cell does not match the configuration",
                        k + 1
                    )));
                }
                g.validate()?;
            }
        }
        for (k, (got, want)) in self.convs.iter().zip(&expected.convs).enumerate() {
            if shape_of_conv(got) != shape_of_conv(want) {
                return Err(Error::Shape(format!(
                    "convolution {} does not match the configuration",
                    k + 1
                )));
            }
            got.validate()?;
        }
        if shape_of_conv(&self.projection) != shape_of_conv(&expected.projection) {
            return Err(Error::Shape("projection does not match the configuration".into()));
        }
        self.projection.validate()
    }
}

/// Pre-softmax scores, `timesteps × alphabet_size`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitSequence {
    pub timesteps: usize,
    pub alphabet_size: usize,
    pub values: Vec<f32>,
}

impl LogitSequence {
    pub fn new(timesteps: usize, alphabet_size: usize, values: Vec<f32>) -> Result<Self> {
        if timesteps == 0 || alphabet_size == 0 || values.len() != timesteps * alphabet_size {
            return Err(Error::Shape(format!(
                "{} values do not form a {timesteps}x{alphabet_size} logit matrix",
                values.len()
            )));
        }
        Ok(Self {
            timesteps,
            alphabet_size,
            values,
        })
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * self.alphabet_size..(t + 1) * self.alphabet_size]
    }

    pub fn max_abs_diff(&self, other: &LogitSequence) -> Option<f32> {
        if (self.timesteps, self.alphabet_size) != (other.timesteps, other.alphabet_size) {
            return None;
        }
        Some(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max),
        )
    }
}

/// Sums `blocks` equal channel blocks into one.
fn sum_channel_blocks(g: &ImageGrid, blocks: usize) -> Result<ImageGrid> {
    let width = g.channels() / blocks;
    let mut data = Vec::with_capacity(g.area() * width);
    for px in g.data().chunks_exact(g.channels()) {
        for j in 0..width {
            data.push((0..blocks).map(|b| px[b * width + j]).sum());
        }
    }
    ImageGrid::from_vec(g.height(), g.width(), width, data)
}

fn recurrent_stage(cells: &[CellParams; DIRECTIONS], inputs: &[ImageGrid]) -> Result<Vec<ImageGrid>> {
    let packed = pack_examples(inputs)?;
    let activations = scan_four_directions(cells, &packed.grid, Some(&packed.mask))?;
    unpack_activations(
        &activations,
        &packed.layout,
        Ratio::from_integer(1),
        Ratio::from_integer(1),
    )
}

/// Runs the network on a batch of examples with `cfg.input_channels` channels.
pub fn network_forward(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    examples: &[ImageGrid],
) -> Result<Vec<LogitSequence>> {
    params.check_against(cfg)?;
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    for (i, e) in examples.iter().enumerate() {
        if e.channels() != cfg.input_channels {
            return Err(Error::Shape(format!(
                "example {i} has {} channels, the network reads {}",
                e.channels(),
                cfg.input_channels
            )));
        }
        cfg.stage_sizes(e.height(), e.width()).map_err(|err| match err {
            Error::StageUnderflow { stage, detail } => Error::StageUnderflow {
                stage,
                detail: format!("example {i}: {detail}"),
            },
            other => other,
        })?;
    }

    let mut acts = examples.to_vec();
    for k in 0..RECURRENT_STAGES {
        acts = recurrent_stage(&params.recurrent[k], &acts)?;
        if k < CONV_STAGES {
            acts = chunked_block_conv(&params.convs[k], &acts)?
                .iter()
                .map(|g| sum_channel_blocks(g, DIRECTIONS))
                .collect::<Result<_>>()?;
        }
    }
    let summed = acts
        .iter()
        .map(|g| sum_channel_blocks(g, DIRECTIONS))
        .collect::<Result<Vec<_>>>()?;
    let projected = chunked_block_conv(&params.projection, &summed)?;
    projected
        .into_iter()
        .map(|g| {
            let (t, a) = (g.width(), g.channels());
            let mut values = vec![0.0f32; t * a];
            for r in 0..g.height() {
                for c in 0..t {
                    for (v, &x) in values[c * a..(c + 1) * a].iter_mut().zip(g.pixel(r, c)) {
                        *v += x;
                    }
                }
            }
            LogitSequence::new(t, a, values)
        })
        .collect()
}
