//! The input-skewing trick.
//!
//! Row `r` of a grid is shifted right by `r` pixels, so pixel `(r, c)` lands at
//! skewed column `c + r`. Both recurrent predecessors of a cell, `(r, c - 1)`
//! and `(r - 1, c)`, then sit in skewed column `c + r - 1`, and every skewed
//! column can be evaluated in one step once the previous one is known.

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, MaskGrid};

/// Read access to a grid in skewed coordinates.
///
/// Scans only need to know which skewed cells are valid and what their input
/// is; [`SkewedGrid`] answers from materialised storage and [`SkewedView`]
/// maps back to an unskewed grid on the fly.
pub trait Wavefront {
    fn height(&self) -> usize;
    fn original_width(&self) -> usize;
    fn channels(&self) -> usize;

    fn skewed_width(&self) -> usize {
        self.original_width() + self.height() - 1
    }

    /// Rows that can hold a cell in skewed column `col`.
    fn band(&self, col: usize) -> std::ops::Range<usize> {
        let lo = (col + 1).saturating_sub(self.original_width());
        let hi = (col + 1).min(self.height());
        lo..hi
    }

    fn is_valid(&self, row: usize, col: usize) -> bool;

    /// Input vector of skewed cell `(row, col)`; only called for valid cells.
    fn input(&self, row: usize, col: usize) -> &[f32];
}

/// A diagonally shifted grid with its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewedGrid {
    height: usize,
    original_width: usize,
    channels: usize,
    data: Vec<f32>,
    mask: MaskGrid,
}

impl SkewedGrid {
    /// Assembles a skewed grid from raw parts, checking that they agree.
    pub fn from_parts(
        height: usize,
        original_width: usize,
        channels: usize,
        data: Vec<f32>,
        mask: MaskGrid,
    ) -> Result<Self> {
        if height == 0 || original_width == 0 || channels == 0 {
            return Err(Error::Layout("skewed grid dimensions must be positive".into()));
        }
        let skewed_width = original_width + height - 1;
        if mask.height() != height || mask.width() != skewed_width {
            return Err(Error::Layout(format!(
                "mask is {}x{}, expected {height}x{skewed_width}",
                mask.height(),
                mask.width()
            )));
        }
        if data.len() != height * skewed_width * channels {
            return Err(Error::Layout(format!(
                "{} values do not match a {height}x{skewed_width}x{channels} skewed grid",
                data.len()
            )));
        }
        for r in 0..height {
            for c in 0..skewed_width {
                if mask.is_valid(r, c) && !(r..r + original_width).contains(&c) {
                    return Err(Error::Layout(format!(
                        "mask marks ({r},{c}) valid outside the diagonal band"
                    )));
                }
            }
        }
        Ok(Self {
            height,
            original_width,
            channels,
            data,
            mask,
        })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn mask(&self) -> &MaskGrid {
        &self.mask
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let o = (row * self.skewed_width() + col) * self.channels;
        &self.data[o..o + self.channels]
    }
}

impl Wavefront for SkewedGrid {
    fn height(&self) -> usize {
        self.height
    }
    fn original_width(&self) -> usize {
        self.original_width
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn is_valid(&self, row: usize, col: usize) -> bool {
        self.mask.is_valid(row, col)
    }
    fn input(&self, row: usize, col: usize) -> &[f32] {
        self.pixel(row, col)
    }
}

/// Skews a grid; every pixel of the input is valid.
pub fn skew(grid: &ImageGrid) -> SkewedGrid {
    skew_impl(grid, None)
}

/// Skews a grid together with a mask of the same dimensions. Cells whose
/// mask bit is 0 stay invalid after skewing.
pub fn skew_masked(grid: &ImageGrid, mask: &MaskGrid) -> Result<SkewedGrid> {
    if mask.height() != grid.height() || mask.width() != grid.width() {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match grid {}x{}",
            mask.height(),
            mask.width(),
            grid.height(),
            grid.width()
        )));
    }
    Ok(skew_impl(grid, Some(mask)))
}

fn skew_impl(grid: &ImageGrid, mask: Option<&MaskGrid>) -> SkewedGrid {
    let (h, w, ch) = (grid.height(), grid.width(), grid.channels());
    let sw = w + h - 1;
    let mut data = vec![0.0; h * sw * ch];
    let mut skewed_mask = MaskGrid::zeros(h, sw).expect("positive dimensions");
    for r in 0..h {
        let src = &grid.data()[r * w * ch..(r + 1) * w * ch];
        let dst = (r * sw + r) * ch;
        data[dst..dst + w * ch].copy_from_slice(src);
        for c in 0..w {
            skewed_mask.set(r, c + r, mask.is_none_or(|m| m.is_valid(r, c)));
        }
    }
    SkewedGrid {
        height: h,
        original_width: w,
        channels: ch,
        data,
        mask: skewed_mask,
    }
}

/// Inverse of [`skew`]: shifts row `r` back left by `r` pixels.
pub fn unskew(skewed: &SkewedGrid) -> Result<ImageGrid> {
    let (h, w, ch) = (skewed.height, skewed.original_width, skewed.channels);
    let sw = skewed.skewed_width();
    if skewed.data.len() != h * sw * ch {
        return Err(Error::Layout("skewed data length disagrees with its dimensions".into()));
    }
    let mut data = Vec::with_capacity(h * w * ch);
    for r in 0..h {
        let start = (r * sw + r) * ch;
        data.extend_from_slice(&skewed.data[start..start + w * ch]);
    }
    ImageGrid::from_vec(h, w, ch, data)
}

/// Skewed coordinates over an unskewed grid, without copying it.
#[derive(Debug, Clone, Copy)]
pub struct SkewedView<'a> {
    grid: &'a ImageGrid,
    mask: Option<&'a MaskGrid>,
}

impl<'a> SkewedView<'a> {
    pub fn new(grid: &'a ImageGrid) -> Self {
        Self { grid, mask: None }
    }

    pub fn masked(grid: &'a ImageGrid, mask: &'a MaskGrid) -> Result<Self> {
        if mask.height() != grid.height() || mask.width() != grid.width() {
            return Err(Error::Shape("mask does not match grid".into()));
        }
        Ok(Self { grid, mask: Some(mask) })
    }
}

impl Wavefront for SkewedView<'_> {
    fn height(&self) -> usize {
        self.grid.height()
    }
    fn original_width(&self) -> usize {
        self.grid.width()
    }
    fn channels(&self) -> usize {
        self.grid.channels()
    }
    fn is_valid(&self, row: usize, col: usize) -> bool {
        col >= row && col - row < self.grid.width() && self.mask.is_none_or(|m| m.is_valid(row, col - row))
    }
    fn input(&self, row: usize, col: usize) -> &[f32] {
        self.grid.pixel(row, col - row)
    }
}
