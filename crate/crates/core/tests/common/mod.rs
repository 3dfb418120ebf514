//! Independent reference implementations used as test oracles.
//!
//! Everything here works on plain `f64` arrays in unskewed coordinates with
//! explicit index arithmetic. Nothing reuses the library's skewing, flipping,
//! fused gate matrices, packing or chunking.

#![allow(dead_code)]

use gridpack::{
    CellKind, CellParams, ConvParams, Gate, ImageGrid, MaskGrid, NetworkConfig, NetworkParams, PackedRow,
    PackingLayout, Placement,
};
use rand::Rng;

/// Dense `h × w × c` array, row-major, channel-last.
#[derive(Debug, Clone)]
pub struct Arr {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub v: Vec<f64>,
}

impl Arr {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            v: vec![0.0; h * w * c],
        }
    }

    pub fn from_grid(g: &ImageGrid) -> Self {
        Self {
            h: g.height(),
            w: g.width(),
            c: g.channels(),
            v: g.data().iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn at(&self, r: usize, col: usize, ch: usize) -> f64 {
        self.v[(r * self.w + col) * self.c + ch]
    }

    pub fn set(&mut self, r: usize, col: usize, ch: usize, x: f64) {
        let i = (r * self.w + col) * self.c + ch;
        self.v[i] = x;
    }

    pub fn max_abs_diff(&self, g: &ImageGrid) -> f64 {
        assert_eq!(
            (self.h, self.w, self.c),
            (g.height(), g.width(), g.channels()),
            "shape mismatch"
        );
        self.v
            .iter()
            .zip(g.data())
            .map(|(&a, &b)| (a - b as f64).abs())
            .fold(0.0, f64::max)
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `Σ_k x[k] · m[k, j]` for a row-major `len(x) × cols` matrix.
fn vecmat(x: &[f64], m: &[f32], cols: usize, j: usize) -> f64 {
    x.iter().enumerate().map(|(k, &xk)| xk * m[k * cols + j] as f64).sum()
}

/// Step towards the predecessors: `(dr, dc)` is `(+1, +1)` for a scan that
/// runs right and down, whose predecessors sit at `c - 1` and `r - 1`.
pub const DIRECTION_STEPS: [(isize, isize); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Cell-by-cell scan in original coordinates. Cells are visited in row-major
/// order of the scan direction, so both predecessors are always final.
/// Returns `(hidden, memory)`.
pub fn naive_scan(p: &CellParams, x: &Arr, mask: Option<&MaskGrid>, step: (isize, isize)) -> (Arr, Arr) {
    let nh = p.hidden_size;
    let (dr, dc) = step;
    let mut hid = Arr::zeros(x.h, x.w, nh);
    let mut mem = Arr::zeros(x.h, x.w, nh);
    let valid = |r: usize, c: usize| mask.is_none_or(|m| m.is_valid(r, c));
    let rows: Vec<usize> = if dr > 0 {
        (0..x.h).collect()
    } else {
        (0..x.h).rev().collect()
    };
    let cols: Vec<usize> = if dc > 0 {
        (0..x.w).collect()
    } else {
        (0..x.w).rev().collect()
    };
    let zeros = vec![0.0; nh];

    for &r in &rows {
        for &c in &cols {
            if !valid(r, c) {
                continue;
            }
            let fetch = |rr: isize, cc: isize| -> (Vec<f64>, Vec<f64>) {
                if rr < 0 || cc < 0 || rr as usize >= x.h || cc as usize >= x.w || !valid(rr as usize, cc as usize) {
                    return (zeros.clone(), zeros.clone());
                }
                let (rr, cc) = (rr as usize, cc as usize);
                (
                    (0..nh).map(|j| hid.at(rr, cc, j)).collect(),
                    (0..nh).map(|j| mem.at(rr, cc, j)).collect(),
                )
            };
            let (h1, s1) = fetch(r as isize, c as isize - dc);
            let (h2, s2) = fetch(r as isize - dr, c as isize);
            let input: Vec<f64> = (0..x.c).map(|k| x.at(r, c, k)).collect();
            let pre = |g: Gate, j: usize| {
                let gw = p.gate(g);
                vecmat(&input, &gw.input, nh, j)
                    + vecmat(&h1, &gw.left, nh, j)
                    + vecmat(&h2, &gw.top, nh, j)
                    + gw.bias[j] as f64
            };
            match p.kind {
                CellKind::Plain => {
                    for j in 0..nh {
                        let a = pre(Gate::Candidate, j).tanh();
                        let i = sig(pre(Gate::Input, j));
                        let f1 = sig(pre(Gate::Forget1, j));
                        let f2 = sig(pre(Gate::Forget2, j));
                        let o = sig(pre(Gate::Output, j));
                        let s = i * a + f1 * s1[j] + f2 * s2[j];
                        mem.set(r, c, j, s);
                        hid.set(r, c, j, o * s.tanh());
                    }
                }
                CellKind::LeakyLp => {
                    let s_prev: Vec<f64> = (0..nh)
                        .map(|j| {
                            let ls = sig(pre(Gate::Forget1, j));
                            ls * s1[j] + (1.0 - ls) * s2[j]
                        })
                        .collect();
                    for j in 0..nh {
                        let a = pre(Gate::Candidate, j).tanh();
                        let lu = sig(pre(Gate::Forget2, j));
                        let s = lu * s_prev[j] + (1.0 - lu) * a;
                        let o1 = sig(pre(Gate::Input, j) + vecmat(&s_prev, &p.peephole[0], nh, j));
                        let o2 = sig(pre(Gate::Output, j) + vecmat(&s_prev, &p.peephole[1], nh, j));
                        mem.set(r, c, j, s);
                        hid.set(r, c, j, o1 * s.tanh() + o2 * s_prev[j].tanh());
                    }
                }
            }
        }
    }
    (hid, mem)
}

/// Four naive scans, hidden states concatenated on channels.
pub fn naive_four_dir(params: &[CellParams; 4], x: &Arr, mask: Option<&MaskGrid>) -> Arr {
    let nh = params[0].hidden_size;
    let mut out = Arr::zeros(x.h, x.w, 4 * nh);
    for (d, (p, &step)) in params.iter().zip(&DIRECTION_STEPS).enumerate() {
        let (hid, _) = naive_scan(p, x, mask, step);
        for r in 0..x.h {
            for c in 0..x.w {
                for j in 0..nh {
                    out.set(r, c, d * nh + j, hid.at(r, c, j));
                }
            }
        }
    }
    out
}

/// Grouped convolution as a sequential loop of `n` independent dense
/// convolutions, each on its own channel slice; out-of-range taps read zero.
pub fn loop_conv(p: &ConvParams, x: &Arr) -> Arr {
    let (m, n) = (p.groups_in, p.groups_out);
    let (ipg, opg) = (p.in_channels / m, p.out_channels / n);
    let (kh, kw, sh, sw) = (p.kernel_height, p.kernel_width, p.stride_height, p.stride_width);
    let oh = x.h.div_ceil(sh);
    let ow = x.w.div_ceil(sw);
    let mut out = Arr::zeros(oh, ow, p.out_channels);
    for j in 0..n {
        let src = (j * m) / n;
        // one small network: channels src*ipg.. of the input, opg outputs
        for oc in 0..opg {
            let o = j * opg + oc;
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = p.bias[o] as f64;
                    for ci in 0..ipg {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let (rr, cc) = (r * sh + dy, c * sw + dx);
                                if rr < x.h && cc < x.w {
                                    let wi = ((o * ipg + ci) * kh + dy) * kw + dx;
                                    acc += p.weights[wi] as f64 * x.at(rr, cc, src * ipg + ci);
                                }
                            }
                        }
                    }
                    out.set(r, c, o, acc);
                }
            }
        }
    }
    out
}

fn sum_blocks(x: &Arr, blocks: usize) -> Arr {
    let w = x.c / blocks;
    let mut out = Arr::zeros(x.h, x.w, w);
    for r in 0..x.h {
        for c in 0..x.w {
            for j in 0..w {
                out.set(r, c, j, (0..blocks).map(|b| x.at(r, c, b * w + j)).sum());
            }
        }
    }
    out
}

/// The whole network on one example, without packing or chunking.
/// Returns `T × alphabet` logits, row-major.
pub fn naive_network(cfg: &NetworkConfig, params: &NetworkParams, x: &ImageGrid) -> Vec<f64> {
    let mut a = Arr::from_grid(x);
    for k in 0..3 {
        a = naive_four_dir(&params.recurrent[k], &a, None);
        if k < 2 {
            a = sum_blocks(&loop_conv(&params.convs[k], &a), 4);
        }
    }
    let a = loop_conv(&params.projection, &sum_blocks(&a, 4));
    let alpha = cfg.alphabet.len();
    let mut logits = vec![0.0; a.w * alpha];
    for r in 0..a.h {
        for c in 0..a.w {
            for s in 0..alpha {
                logits[c * alpha + s] += a.at(r, c, s);
            }
        }
    }
    logits
}

pub fn random_grid(h: usize, w: usize, c: usize, rng: &mut impl Rng) -> ImageGrid {
    ImageGrid::from_fn(h, w, c, |_, _, _| rng.random_range(-1.0f32..1.0)).unwrap()
}

pub fn random_cells(kind: CellKind, input: usize, hidden: usize, scale: f32, rng: &mut impl Rng) -> [CellParams; 4] {
    std::array::from_fn(|_| CellParams::random(kind, input, hidden, scale, rng).unwrap())
}

pub fn max_abs(a: &ImageGrid, b: &ImageGrid) -> f32 {
    a.max_abs_diff(b).expect("shape mismatch")
}

fn row(row_height: usize, top_offset: usize, placements: &[(usize, usize, usize)]) -> PackedRow {
    PackedRow {
        row_height,
        top_offset,
        placements: placements
            .iter()
            .map(|&(example_index, width, column_offset)| Placement {
                example_index,
                width,
                column_offset,
            })
            .collect(),
    }
}

pub type TracedLayout = (&'static str, Vec<(usize, usize)>, PackingLayout);

/// Packing instances traced by hand, as `(name, sizes, layout)`.
pub fn traced_layouts() -> Vec<TracedLayout> {
    vec![
        (
            "widths 5,3,1 at height 2",
            vec![(2, 5), (2, 3), (2, 1)],
            PackingLayout {
                total_height: 5,
                total_width: 5,
                rows: vec![row(2, 0, &[(0, 5, 0)]), row(2, 3, &[(1, 3, 0), (2, 1, 4)])],
            },
        ),
        (
            "heights 2,2,3 widths 3,2,4",
            vec![(2, 3), (2, 2), (3, 4)],
            PackingLayout {
                total_height: 9,
                total_width: 4,
                rows: vec![
                    row(2, 0, &[(0, 3, 0)]),
                    row(2, 3, &[(1, 2, 0)]),
                    row(3, 6, &[(2, 4, 0)]),
                ],
            },
        ),
        (
            "equal widths fill by index",
            vec![(1, 2), (1, 2), (1, 2), (1, 5)],
            PackingLayout {
                total_height: 5,
                total_width: 5,
                rows: vec![
                    row(1, 0, &[(3, 5, 0)]),
                    row(1, 2, &[(0, 2, 0), (1, 2, 3)]),
                    row(1, 4, &[(2, 2, 0)]),
                ],
            },
        ),
        (
            "short bucket first",
            vec![(4, 2), (1, 3), (4, 1), (1, 1)],
            PackingLayout {
                total_height: 13,
                total_width: 3,
                rows: vec![
                    row(1, 0, &[(1, 3, 0)]),
                    row(1, 2, &[(3, 1, 0)]),
                    row(4, 4, &[(0, 2, 0)]),
                    row(4, 9, &[(2, 1, 0)]),
                ],
            },
        ),
    ]
}
