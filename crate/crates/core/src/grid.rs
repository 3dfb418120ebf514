//! Dense row-major, channel-last grids and binary masks.

use crate::error::{Error, Result};

/// A dense `height × width × channels` grid of `f32`, stored row-major with
/// channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::Dimension(format!(
            "grid dimensions must be positive, got {height}x{width}x{channels}"
        )));
    }
    Ok(())
}

impl ImageGrid {
    /// Creates a grid with every element set to `fill`.
    pub fn new(height: usize, width: usize, channels: usize, fill: f32) -> Result<Self> {
        check_dims(height, width, channels)?;
        Ok(Self {
            height,
            width,
            channels,
            data: vec![fill; height * width * channels],
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, 0.0)
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {height}x{width}x{channels} grid",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a grid by evaluating `f(row, col, channel)` for every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a single-channel grid from nested rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(height, width, 1, rows.concat())
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of pixels, ignoring channels.
    #[inline]
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        (row * self.width + col) * self.channels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.offset(row, col) + channel]
    }

    /// All channel values of one pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let o = self.offset(row, col);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub(crate) fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let o = self.offset(row, col);
        &mut self.data[o..o + self.channels]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                out.pixel_mut(r, c).copy_from_slice(self.pixel(r, self.width - 1 - c));
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> Self {
        let row_len = self.width * self.channels;
        let mut data = Vec::with_capacity(self.data.len());
        for r in (0..self.height).rev() {
            data.extend_from_slice(&self.data[r * row_len..(r + 1) * row_len]);
        }
        Self { data, ..*self }
    }

    /// Copies the `height × width` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width, self.channels)?;
        if top + height > self.height || left + width > self.width {
            return Err(Error::Layout(format!(
                "crop {height}x{width} at ({top},{left}) exceeds {}x{} grid",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for r in top..top + height {
            let start = self.offset(r, left);
            data.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Ok(Self {
            height,
            width,
            channels: self.channels,
            data,
        })
    }

    /// Writes `src` into this grid with its top-left corner at `(top, left)`.
    pub(crate) fn paste(&mut self, src: &ImageGrid, top: usize, left: usize) {
        debug_assert_eq!(src.channels, self.channels);
        let len = src.width * src.channels;
        for r in 0..src.height {
            let dst = self.offset(top + r, left);
            let s = src.offset(r, 0);
            self.data[dst..dst + len].copy_from_slice(&src.data[s..s + len]);
        }
    }

    /// Zero-extends the grid at the bottom and right to `height × width`.
    pub fn pad_to(&self, height: usize, width: usize) -> Result<Self> {
        if height < self.height || width < self.width {
            return Err(Error::Dimension(format!(
                "cannot pad {}x{} down to {height}x{width}",
                self.height, self.width
            )));
        }
        let mut out = Self::zeros(height, width, self.channels)?;
        out.paste(self, 0, 0);
        Ok(out)
    }

    /// Channels `start .. start + count` of every pixel.
    pub fn channel_slice(&self, start: usize, count: usize) -> Result<Self> {
        if count == 0 || start + count > self.channels {
            return Err(Error::Shape(format!(
                "channel range {start}..{} out of 0..{}",
                start + count,
                self.channels
            )));
        }
        let mut data = Vec::with_capacity(self.area() * count);
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[start..start + count]);
        }
        Ok(Self {
            channels: count,
            data,
            ..*self
        })
    }

    /// Stacks grids of equal height and width along the channel axis.
    pub fn concat_channels(parts: &[ImageGrid]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Argument("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.height != first.height || p.width != first.width) {
            return Err(Error::Shape(
                "channel concatenation needs equal spatial dimensions".into(),
            ));
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(first.area() * channels);
        for i in 0..first.area() {
            for p in parts {
                data.extend_from_slice(&p.data[i * p.channels..(i + 1) * p.channels]);
            }
        }
        Ok(Self {
            height: first.height,
            width: first.width,
            channels,
            data,
        })
    }

    /// Largest absolute elementwise difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &ImageGrid) -> Option<f32> {
        if (self.height, self.width, self.channels) != (other.height, other.width, other.channels) {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max),
        )
    }
}

/// A `height × width` grid of 0/1 flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGrid {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl MaskGrid {
    pub fn new(height: usize, width: usize, valid: bool) -> Result<Self> {
        check_dims(height, width, 1)?;
        Ok(Self {
            height,
            width,
            bits: vec![u8::from(valid); height * width],
        })
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, true)
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, false)
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        check_dims(height, width, 1)?;
        if bits.len() != height * width {
            return Err(Error::Shape(format!(
                "{} bits cannot fill a {height}x{width} mask",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Argument("mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, bits })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col] == 1
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, valid: bool) {
        self.bits[row * self.width + col] = u8::from(valid);
    }

    pub fn count_valid(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn row_count(&self, row: usize) -> usize {
        self.bits[row * self.width..(row + 1) * self.width]
            .iter()
            .map(|&b| b as usize)
            .sum()
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut bits = Vec::with_capacity(self.bits.len());
        for row in self.bits.chunks_exact(self.width) {
            bits.extend(row.iter().rev());
        }
        Self { bits, ..*self }
    }

    pub fn flip_vertical(&self) -> Self {
        let mut bits = Vec::with_capacity(self.bits.len());
        for row in self.bits.chunks_exact(self.width).rev() {
            bits.extend_from_slice(row);
        }
        Self { bits, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_two() -> ImageGrid {
        ImageGrid::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()
    }

    #[test]
    fn create_fills_every_element() {
        let g = ImageGrid::new(1, 1, 1, 0.0).unwrap();
        assert_eq!(g.data(), &[0.0]);
        let g = ImageGrid::new(2, 3, 1, 1.0).unwrap();
        assert_eq!(g.data(), &[1.0; 6]);
        let g = ImageGrid::new(3, 4, 5, 0.5).unwrap();
        assert_eq!(g.data().len(), 60);
        assert!(g.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(matches!(ImageGrid::new(0, 3, 1, 0.0), Err(Error::Dimension(_))));
        assert!(matches!(ImageGrid::new(3, 0, 1, 0.0), Err(Error::Dimension(_))));
        assert!(matches!(ImageGrid::new(3, 3, 0, 0.0), Err(Error::Dimension(_))));
        assert!(matches!(MaskGrid::ones(0, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(matches!(
            ImageGrid::from_vec(2, 2, 1, vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn flips_match_reflection() {
        let g = two_by_two();
        assert_eq!(g.flip_horizontal().data(), &[2.0, 1.0, 4.0, 3.0]);
        assert_eq!(g.flip_vertical().data(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn flips_keep_channels_together() {
        let g = ImageGrid::from_fn(2, 3, 2, |r, c, ch| (r * 100 + c * 10 + ch) as f32).unwrap();
        let h = g.flip_horizontal();
        assert_eq!(h.pixel(1, 0), &[120.0, 121.0]);
        let v = g.flip_vertical();
        assert_eq!(v.pixel(0, 2), &[120.0, 121.0]);
    }

    #[test]
    fn mask_rejects_non_binary() {
        assert!(MaskGrid::from_bits(1, 2, vec![0, 2]).is_err());
        let m = MaskGrid::from_bits(2, 2, vec![1, 0, 1, 1]).unwrap();
        assert_eq!(m.count_valid(), 3);
        assert_eq!(m.flip_horizontal().bits(), &[0, 1, 1, 1]);
        assert_eq!(m.flip_vertical().bits(), &[1, 1, 1, 0]);
    }

    #[test]
    fn crop_pad_roundtrip() {
        let g = ImageGrid::from_fn(3, 4, 2, |r, c, ch| (r * 8 + c * 2 + ch) as f32).unwrap();
        let p = g.pad_to(5, 6).unwrap();
        assert_eq!(p.get(4, 5, 1), 0.0);
        assert_eq!(p.crop(0, 0, 3, 4).unwrap(), g);
        assert!(g.crop(2, 0, 2, 1).is_err());
    }

    #[test]
    fn channel_concat_and_slice_are_inverse() {
        let a = ImageGrid::from_fn(2, 2, 1, |r, c, _| (r + c) as f32).unwrap();
        let b = ImageGrid::from_fn(2, 2, 2, |r, c, ch| (r * c + ch) as f32 + 10.0).unwrap();
        let ab = ImageGrid::concat_channels(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ab.channels(), 3);
        assert_eq!(ab.channel_slice(0, 1).unwrap(), a);
        assert_eq!(ab.channel_slice(1, 2).unwrap(), b);
    }

    fn arb_grid() -> impl Strategy<Value = ImageGrid> {
        (1usize..7, 1usize..7, 1usize..4).prop_flat_map(|(h, w, c)| {
            proptest::collection::vec(-10.0f32..10.0, h * w * c)
                .prop_map(move |d| ImageGrid::from_vec(h, w, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn flips_are_involutions(g in arb_grid()) {
            prop_assert_eq!(g.flip_horizontal().flip_horizontal(), g.clone());
            prop_assert_eq!(g.flip_vertical().flip_vertical(), g);
        }

        #[test]
        fn flips_commute(g in arb_grid()) {
            prop_assert_eq!(
                g.flip_horizontal().flip_vertical(),
                g.flip_vertical().flip_horizontal()
            );
        }
    }
}
