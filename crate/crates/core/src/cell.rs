//! Forward computation of 2-D MDLSTM and Leaky LP cells over skewed grids.
//!
//! A scan walks the skewed columns left to right. Every valid cell reads the
//! hidden/memory pair of its left predecessor (same row, previous skewed
//! column) and its top predecessor (row above, previous skewed column). A
//! predecessor that is out of bounds or masked contributes zeros, which is
//! what keeps packed examples independent of each other.
//!
//! Gate slots are shared between the two cell kinds:
//!
//! | slot        | plain MDLSTM    | Leaky LP                        |
//! |-------------|-----------------|---------------------------------|
//! | `Candidate` | cell input `a`  | cell input `a`                  |
//! | `Input`     | input gate `i`  | first output gate `o1`          |
//! | `Forget1`   | forget gate `f1`| source-mixing lambda gate `λs`  |
//! | `Forget2`   | forget gate `f2`| update-mixing lambda gate `λu`  |
//! | `Output`    | output gate `o` | second output gate `o2`         |
//!
//! The Leaky LP output gates read the mixed previous memory `s_prev` through
//! the peephole matrices `V1`/`V2`; the plain cell has no peepholes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, MaskGrid};
use crate::skew::{SkewedView, Wavefront};

pub const NUM_GATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Plain,
    LeakyLp,
}

impl CellKind {
    pub fn tag(self) -> u32 {
        match self {
            CellKind::Plain => 0,
            CellKind::LeakyLp => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(CellKind::Plain),
            1 => Some(CellKind::LeakyLp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Candidate = 0,
    Input = 1,
    Forget1 = 2,
    Forget2 = 3,
    Output = 4,
}

impl Gate {
    pub const ALL: [Gate; NUM_GATES] = [Gate::Candidate, Gate::Input, Gate::Forget1, Gate::Forget2, Gate::Output];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Candidate => "g",
            Gate::Input => "i",
            Gate::Forget1 => "f1",
            Gate::Forget2 => "f2",
            Gate::Output => "o",
        }
    }
}

/// Weights feeding one gate. Matrices are row-major `rows × hidden_size` and
/// applied as `v · M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    /// `input_channels × hidden_size`
    pub input: Vec<f32>,
    /// Left predecessor hidden state, `hidden_size × hidden_size`.
    pub left: Vec<f32>,
    /// Top predecessor hidden state, `hidden_size × hidden_size`.
    pub top: Vec<f32>,
    pub bias: Vec<f32>,
}

/// The full weight set of one scan direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub hidden_size: usize,
    pub input_channels: usize,
    pub gates: [GateWeights; NUM_GATES],
    /// Peepholes from `s_prev` into the two Leaky LP output gates.
    pub peephole: [Vec<f32>; 2],
}

impl CellParams {
    pub fn zeros(kind: CellKind, input_channels: usize, hidden_size: usize) -> Result<Self> {
        Self::from_fn(kind, input_channels, hidden_size, || 0.0)
    }

    /// Every weight and bias drawn uniformly from `[-scale, scale]`.
    pub fn random(
        kind: CellKind,
        input_channels: usize,
        hidden_size: usize,
        scale: f32,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::from_fn(kind, input_channels, hidden_size, || rng.random_range(-scale..=scale))
    }

    fn from_fn(kind: CellKind, input_channels: usize, hidden_size: usize, mut f: impl FnMut() -> f32) -> Result<Self> {
        if input_channels == 0 || hidden_size == 0 {
            return Err(Error::Dimension(
                "cell input channels and hidden size must be positive".into(),
            ));
        }
        let mut fill = |n: usize| (0..n).map(|_| f()).collect::<Vec<f32>>();
        let hh = hidden_size * hidden_size;
        let gates = std::array::from_fn(|_| GateWeights {
            input: fill(input_channels * hidden_size),
            left: fill(hh),
            top: fill(hh),
            bias: fill(hidden_size),
        });
        let peephole = [fill(hh), fill(hh)];
        Ok(Self {
            kind,
            hidden_size,
            input_channels,
            gates,
            peephole,
        })
    }

    pub fn gate(&self, gate: Gate) -> &GateWeights {
        &self.gates[gate as usize]
    }

    pub fn gate_mut(&mut self, gate: Gate) -> &mut GateWeights {
        &mut self.gates[gate as usize]
    }

    /// Checks matrix dimensions and that every value is finite.
    pub fn validate(&self) -> Result<()> {
        let (c, h) = (self.input_channels, self.hidden_size);
        if c == 0 || h == 0 {
            return Err(Error::Dimension("cell dimensions must be positive".into()));
        }
        for gate in Gate::ALL {
            let g = self.gate(gate);
            if g.input.len() != c * h || g.left.len() != h * h || g.top.len() != h * h || g.bias.len() != h {
                return Err(Error::Shape(format!(
                    "gate {} weights do not match {c} inputs / {h} hidden",
                    gate.name()
                )));
            }
        }
        if self.peephole.iter().any(|v| v.len() != h * h) {
            return Err(Error::Shape("peephole matrices must be hidden x hidden".into()));
        }
        let all_finite = self
            .gates
            .iter()
            .flat_map(|g| [&g.input, &g.left, &g.top, &g.bias])
            .chain(&self.peephole)
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::Argument("cell weights must be finite".into()));
        }
        Ok(())
    }

    /// Gate matrices fused column-wise into `rows × 5·hidden` blocks, so one
    /// product per predecessor yields all five gate pre-activations.
    fn fused(&self) -> Fused {
        let h = self.hidden_size;
        let width = NUM_GATES * h;
        let fuse = |rows: usize, pick: &dyn Fn(&GateWeights) -> &Vec<f32>| {
            let mut out = vec![0.0; rows * width];
            for (gi, g) in self.gates.iter().enumerate() {
                let m = pick(g);
                for r in 0..rows {
                    out[r * width + gi * h..r * width + (gi + 1) * h].copy_from_slice(&m[r * h..(r + 1) * h]);
                }
            }
            out
        };
        Fused {
            input: fuse(self.input_channels, &|g| &g.input),
            left: fuse(h, &|g| &g.left),
            top: fuse(h, &|g| &g.top),
            bias: self.gates.iter().flat_map(|g| g.bias.iter().copied()).collect(),
        }
    }
}

struct Fused {
    input: Vec<f32>,
    left: Vec<f32>,
    top: Vec<f32>,
    bias: Vec<f32>,
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// `w·a + (1-w)·b`, kept inside `[min(a,b), max(a,b)]` under rounding.
#[inline]
fn lerp(w: f32, a: f32, b: f32) -> f32 {
    (b + w * (a - b)).clamp(a.min(b), a.max(b))
}

/// `out[r, :] += a[r, :] · b` for row-major `a: rows × inner`, `b: inner × cols`.
fn gemm_acc(a: &[f32], inner: usize, b: &[f32], cols: usize, out: &mut [f32]) {
    for (a_row, out_row) in a.chunks_exact(inner).zip(out.chunks_exact_mut(cols)) {
        for (k, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                for (o, &bv) in out_row.iter_mut().zip(&b[k * cols..(k + 1) * cols]) {
                    *o += av * bv;
                }
            }
        }
    }
}

/// Turns gate pre-activations into the new `(hidden, memory)` of one cell.
/// For Leaky LP cells `pre` is extended in place with the peephole terms.
fn cell_update(
    params: &CellParams,
    pre: &mut [f32],
    s1: &[f32],
    s2: &[f32],
    h_out: &mut [f32],
    s_out: &mut [f32],
    s_prev: &mut [f32],
) {
    let h = params.hidden_size;
    let slot = |g: Gate| g as usize * h;
    match params.kind {
        CellKind::Plain => {
            for j in 0..h {
                let a = pre[slot(Gate::Candidate) + j].tanh();
                let i = sigmoid(pre[slot(Gate::Input) + j]);
                let f1 = sigmoid(pre[slot(Gate::Forget1) + j]);
                let f2 = sigmoid(pre[slot(Gate::Forget2) + j]);
                let o = sigmoid(pre[slot(Gate::Output) + j]);
                let s = i * a + f1 * s1[j] + f2 * s2[j];
                s_out[j] = s;
                h_out[j] = o * s.tanh();
            }
        }
        CellKind::LeakyLp => {
            for j in 0..h {
                let lambda_src = sigmoid(pre[slot(Gate::Forget1) + j]);
                s_prev[j] = lerp(lambda_src, s1[j], s2[j]);
            }
            let (o1_pre, o2_pre) = (slot(Gate::Input), slot(Gate::Output));
            gemm_acc(s_prev, h, &params.peephole[0], h, &mut pre[o1_pre..o1_pre + h]);
            gemm_acc(s_prev, h, &params.peephole[1], h, &mut pre[o2_pre..o2_pre + h]);
            for j in 0..h {
                let a = pre[slot(Gate::Candidate) + j].tanh();
                let lambda_upd = sigmoid(pre[slot(Gate::Forget2) + j]);
                let s = lerp(lambda_upd, s_prev[j], a);
                let o1 = sigmoid(pre[o1_pre + j]);
                let o2 = sigmoid(pre[o2_pre + j]);
                s_out[j] = s;
                h_out[j] = o1 * s.tanh() + o2 * s_prev[j].tanh();
            }
        }
    }
}

/// Hidden and memory activations of one scan, in unskewed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput {
    pub hidden: ImageGrid,
    pub memory: ImageGrid,
}

/// Scans a skewed source column by column and returns hidden and memory
/// states per original pixel. Invalid cells hold zeros.
pub fn scan_states<W: Wavefront>(params: &CellParams, src: &W) -> Result<ScanOutput> {
    params.validate()?;
    if src.channels() != params.input_channels {
        return Err(Error::Shape(format!(
            "input has {} channels, cell expects {}",
            src.channels(),
            params.input_channels
        )));
    }
    let (height, width, h) = (src.height(), src.original_width(), params.hidden_size);
    let in_ch = params.input_channels;
    let gw = NUM_GATES * h;
    let fused = params.fused();

    let mut hidden = ImageGrid::zeros(height, width, h)?;
    let mut memory = ImageGrid::zeros(height, width, h)?;

    // previous-column state per row; a row's state only counts when it was
    // written in the immediately preceding skewed column
    const NEVER: usize = usize::MAX;
    let mut prev_h = vec![0.0f32; height * h];
    let mut prev_s = vec![0.0f32; height * h];
    let mut prev_col = vec![NEVER; height];
    let mut cur_h = prev_h.clone();
    let mut cur_s = prev_s.clone();
    let mut cur_col = prev_col.clone();

    let zeros = vec![0.0f32; h];
    let mut rows = Vec::with_capacity(height);
    let mut x = Vec::new();
    let mut h1 = Vec::new();
    let mut h2 = Vec::new();
    let mut pre = Vec::new();
    let mut s_prev = vec![0.0f32; h];

    for col in 0..src.skewed_width() {
        rows.clear();
        rows.extend(src.band(col).filter(|&r| src.is_valid(r, col)));
        let k = rows.len();
        if k == 0 {
            std::mem::swap(&mut prev_h, &mut cur_h);
            std::mem::swap(&mut prev_s, &mut cur_s);
            std::mem::swap(&mut prev_col, &mut cur_col);
            continue;
        }
        let live = |r: usize, stamps: &[usize]| col > 0 && stamps[r] == col - 1;

        x.clear();
        h1.clear();
        h2.clear();
        for &r in &rows {
            x.extend_from_slice(src.input(r, col));
            if live(r, &prev_col) {
                h1.extend_from_slice(&prev_h[r * h..(r + 1) * h]);
            } else {
                h1.extend_from_slice(&zeros);
            }
            if r > 0 && live(r - 1, &prev_col) {
                h2.extend_from_slice(&prev_h[(r - 1) * h..r * h]);
            } else {
                h2.extend_from_slice(&zeros);
            }
        }

        pre.clear();
        for _ in 0..k {
            pre.extend_from_slice(&fused.bias);
        }
        gemm_acc(&x, in_ch, &fused.input, gw, &mut pre);
        gemm_acc(&h1, h, &fused.left, gw, &mut pre);
        gemm_acc(&h2, h, &fused.top, gw, &mut pre);

        for (i, &r) in rows.iter().enumerate() {
            let s1 = if live(r, &prev_col) {
                &prev_s[r * h..(r + 1) * h]
            } else {
                &zeros[..]
            };
            let s2 = if r > 0 && live(r - 1, &prev_col) {
                &prev_s[(r - 1) * h..r * h]
            } else {
                &zeros[..]
            };
            let (hs, ss) = (&mut cur_h[r * h..(r + 1) * h], &mut cur_s[r * h..(r + 1) * h]);
            cell_update(params, &mut pre[i * gw..(i + 1) * gw], s1, s2, hs, ss, &mut s_prev);
            cur_col[r] = col;
            let c = col - r;
            hidden.pixel_mut(r, c).copy_from_slice(hs);
            memory.pixel_mut(r, c).copy_from_slice(ss);
        }
        std::mem::swap(&mut prev_h, &mut cur_h);
        std::mem::swap(&mut prev_s, &mut cur_s);
        std::mem::swap(&mut prev_col, &mut cur_col);
    }
    Ok(ScanOutput { hidden, memory })
}

/// Hidden activations of a scan (either cell kind, per `params.kind`).
pub fn scan<W: Wavefront>(params: &CellParams, src: &W) -> Result<ImageGrid> {
    scan_states(params, src).map(|o| o.hidden)
}

fn expect_kind(params: &CellParams, kind: CellKind) -> Result<()> {
    if params.kind != kind {
        return Err(Error::Argument(format!(
            "expected {kind:?} cell parameters, got {:?}",
            params.kind
        )));
    }
    Ok(())
}

/// Plain MDLSTM scan, output `height × original_width × hidden_size`.
pub fn mdlstm_scan<W: Wavefront>(params: &CellParams, src: &W) -> Result<ImageGrid> {
    expect_kind(params, CellKind::Plain)?;
    scan(params, src)
}

/// Leaky LP scan, output `height × original_width × hidden_size`.
pub fn leakylp_scan<W: Wavefront>(params: &CellParams, src: &W) -> Result<ImageGrid> {
    expect_kind(params, CellKind::LeakyLp)?;
    scan(params, src)
}

/// Scan directions, in output channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    RightDown,
    LeftDown,
    RightUp,
    LeftUp,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::RightDown,
        Direction::LeftDown,
        Direction::RightUp,
        Direction::LeftUp,
    ];

    fn flips(self) -> (bool, bool) {
        match self {
            Direction::RightDown => (false, false),
            Direction::LeftDown => (true, false),
            Direction::RightUp => (false, true),
            Direction::LeftUp => (true, true),
        }
    }

    /// Reflects a grid so that scanning it right-and-down scans the original
    /// in this direction. Self-inverse.
    pub fn orient(self, grid: &ImageGrid) -> ImageGrid {
        match self.flips() {
            (false, false) => grid.clone(),
            (true, false) => grid.flip_horizontal(),
            (false, true) => grid.flip_vertical(),
            (true, true) => grid.flip_horizontal().flip_vertical(),
        }
    }

    pub fn orient_mask(self, mask: &MaskGrid) -> MaskGrid {
        match self.flips() {
            (false, false) => mask.clone(),
            (true, false) => mask.flip_horizontal(),
            (false, true) => mask.flip_vertical(),
            (true, true) => mask.flip_horizontal().flip_vertical(),
        }
    }
}

/// Four-directional scan of an optionally masked grid. Output channels are
/// the four per-direction hidden blocks in [`Direction::ALL`] order.
pub fn scan_four_directions(params: &[CellParams; 4], grid: &ImageGrid, mask: Option<&MaskGrid>) -> Result<ImageGrid> {
    let hidden = params[0].hidden_size;
    if params.iter().any(|p| p.hidden_size != hidden) {
        return Err(Error::Shape("all four directions need the same hidden size".into()));
    }
    let mut blocks = Vec::with_capacity(4);
    for (dir, p) in Direction::ALL.into_iter().zip(params) {
        let oriented = dir.orient(grid);
        let out = match mask {
            Some(m) => {
                let m = dir.orient_mask(m);
                scan(p, &SkewedView::masked(&oriented, &m)?)?
            }
            None => scan(p, &SkewedView::new(&oriented))?,
        };
        blocks.push(dir.orient(&out));
    }
    ImageGrid::concat_channels(&blocks)
}

/// Four-directional scan of an unmasked grid.
pub fn mdlstm_4dir(params: &[CellParams; 4], grid: &ImageGrid) -> Result<ImageGrid> {
    scan_four_directions(params, grid, None)
}

/// Drives one cell with its own previous output as both predecessors and
/// records `max |memory|` after each step.
///
/// Feeding the same state to both predecessors is how a cell on the
/// diagonal of a uniform 2-D grid sees its neighbourhood, which is where both
/// forget gates add up.
pub fn memory_trace(params: &CellParams, input: &[f32], steps: usize) -> Result<Vec<f32>> {
    params.validate()?;
    if input.len() != params.input_channels {
        return Err(Error::Shape("input length must equal input channels".into()));
    }
    let h = params.hidden_size;
    let fused = params.fused();
    let gw = NUM_GATES * h;
    let mut hidden = vec![0.0f32; h];
    let mut memory = vec![0.0f32; h];
    let mut next_h = vec![0.0f32; h];
    let mut next_s = vec![0.0f32; h];
    let mut s_prev = vec![0.0f32; h];
    let mut pre = vec![0.0f32; gw];
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        pre.copy_from_slice(&fused.bias);
        gemm_acc(input, params.input_channels, &fused.input, gw, &mut pre);
        gemm_acc(&hidden, h, &fused.left, gw, &mut pre);
        gemm_acc(&hidden, h, &fused.top, gw, &mut pre);
        cell_update(
            params,
            &mut pre,
            &memory,
            &memory,
            &mut next_h,
            &mut next_s,
            &mut s_prev,
        );
        std::mem::swap(&mut hidden, &mut next_h);
        std::mem::swap(&mut memory, &mut next_s);
        trace.push(memory.iter().fold(0.0f32, |m, v| m.max(v.abs())));
    }
    Ok(trace)
}

/// Per-step `max |memory|` of a scalar cell with input 1, cell-input bias 1,
/// and both forget (plain) or both lambda (Leaky LP) gate biases set to
/// `forget_bias`. All other weights are zero.
pub fn stability_trace(kind: CellKind, steps: usize, forget_bias: f32) -> Result<Vec<f32>> {
    if steps == 0 {
        return Err(Error::Argument("trace length must be at least 1".into()));
    }
    let mut params = CellParams::zeros(kind, 1, 1)?;
    params.gate_mut(Gate::Candidate).bias[0] = 1.0;
    params.gate_mut(Gate::Forget1).bias[0] = forget_bias;
    params.gate_mut(Gate::Forget2).bias[0] = forget_bias;
    memory_trace(&params, &[1.0], steps)
}
