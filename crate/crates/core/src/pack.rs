//! Example-packing: tiling variable-size examples into one masked grid.
//!
//! Examples are bucketed by height (ascending). Within a bucket, rows are
//! filled greedily by repeatedly taking the widest example that still fits,
//! with one separator column between neighbours. Rows are stacked with one
//! separator row in between. Row capacity is the widest example in the batch.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, MaskGrid};
use crate::skew::{skew_masked, SkewedGrid};

/// Where one example sits inside its row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub example_index: usize,
    pub width: usize,
    pub column_offset: usize,
}

/// A horizontal strip of equal-height examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedRow {
    pub row_height: usize,
    pub top_offset: usize,
    pub placements: Vec<Placement>,
}

/// Rectangle occupied by one example in the packed grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExampleRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Everything needed to undo a packing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingLayout {
    pub total_height: usize,
    pub total_width: usize,
    pub rows: Vec<PackedRow>,
}

impl PackingLayout {
    /// Plans a packing for examples of the given `(height, width)` sizes.
    pub fn plan(sizes: &[(usize, usize)]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Argument("cannot pack an empty example list".into()));
        }
        if let Some(i) = sizes.iter().position(|&(h, w)| h == 0 || w == 0) {
            return Err(Error::Dimension(format!("example {i} has a zero dimension")));
        }
        let capacity = sizes.iter().map(|&(_, w)| w).max().unwrap_or(0);

        let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &(h, _)) in sizes.iter().enumerate() {
            buckets.entry(h).or_default().push(i);
        }

        let mut rows: Vec<(usize, Vec<usize>)> = Vec::new();
        for (height, mut bucket) in buckets {
            // widest first, ties by original index
            bucket.sort_by(|&a, &b| sizes[b].1.cmp(&sizes[a].1).then(a.cmp(&b)));
            let mut current: Vec<usize> = Vec::new();
            let mut used = 0;
            while !bucket.is_empty() {
                let fits = |w: usize| {
                    if current.is_empty() {
                        w <= capacity
                    } else {
                        used + 1 + w <= capacity
                    }
                };
                match bucket.iter().position(|&i| fits(sizes[i].1)) {
                    Some(pos) => {
                        let idx = bucket.remove(pos);
                        used += sizes[idx].1 + usize::from(!current.is_empty());
                        current.push(idx);
                    }
                    None => {
                        rows.push((height, std::mem::take(&mut current)));
                        used = 0;
                    }
                }
            }
            if !current.is_empty() {
                rows.push((height, current));
            }
        }

        let mut top = 0;
        let mut total_width = 0;
        let mut packed_rows = Vec::with_capacity(rows.len());
        for (row_height, members) in rows {
            let mut left = 0;
            let mut placements = Vec::with_capacity(members.len());
            for idx in members {
                if !placements.is_empty() {
                    left += 1;
                }
                let width = sizes[idx].1;
                placements.push(Placement {
                    example_index: idx,
                    width,
                    column_offset: left,
                });
                left += width;
            }
            total_width = total_width.max(left);
            packed_rows.push(PackedRow {
                row_height,
                top_offset: top,
                placements,
            });
            top += row_height + 1;
        }
        Ok(Self {
            total_height: top - 1,
            total_width,
            rows: packed_rows,
        })
    }

    pub fn num_examples(&self) -> usize {
        self.rows.iter().map(|r| r.placements.len()).sum()
    }

    pub fn packed_area(&self) -> usize {
        self.total_height * self.total_width
    }

    /// Pixels covered by examples.
    pub fn valid_pixels(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.row_height * r.placements.iter().map(|p| p.width).sum::<usize>())
            .sum()
    }

    /// Example rectangles indexed by original example index.
    pub fn example_rects(&self) -> Vec<ExampleRect> {
        let mut rects = vec![
            ExampleRect {
                top: 0,
                left: 0,
                height: 0,
                width: 0
            };
            self.num_examples()
        ];
        for row in &self.rows {
            for p in &row.placements {
                rects[p.example_index] = ExampleRect {
                    top: row.top_offset,
                    left: p.column_offset,
                    height: row.row_height,
                    width: p.width,
                };
            }
        }
        rects
    }

    /// Checks the structural invariants of a layout, e.g. one read from disk.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_examples();
        if n == 0 {
            return Err(Error::Layout("layout places no examples".into()));
        }
        let mut seen = vec![false; n];
        let mut expected_top = 0;
        for (ri, row) in self.rows.iter().enumerate() {
            if row.row_height == 0 || row.placements.is_empty() {
                return Err(Error::Layout(format!("row {ri} is empty")));
            }
            if row.top_offset != expected_top {
                return Err(Error::Layout(format!(
                    "row {ri} starts at {}, expected {expected_top}",
                    row.top_offset
                )));
            }
            expected_top += row.row_height + 1;
            let mut min_left = 0;
            for p in &row.placements {
                if p.example_index >= n || std::mem::replace(&mut seen[p.example_index], true) {
                    return Err(Error::Layout(format!(
                        "example index {} is out of range or repeated",
                        p.example_index
                    )));
                }
                if p.width == 0 || p.column_offset < min_left {
                    return Err(Error::Layout(format!(
                        "placement of example {} overlaps its neighbour",
                        p.example_index
                    )));
                }
                min_left = p.column_offset + p.width + 1;
                if p.column_offset + p.width > self.total_width {
                    return Err(Error::Layout(format!(
                        "example {} extends past total width",
                        p.example_index
                    )));
                }
            }
        }
        if expected_top != self.total_height + 1 {
            return Err(Error::Layout(format!(
                "rows cover {} pixels, total height is {}",
                expected_top.saturating_sub(1),
                self.total_height
            )));
        }
        Ok(())
    }

    /// Binary mask: 1 on example pixels, 0 on separators and trailing padding.
    pub fn mask(&self) -> MaskGrid {
        let mut mask =
            MaskGrid::zeros(self.total_height, self.total_width).expect("validated layouts have positive size");
        for rect in self.example_rects() {
            for r in rect.top..rect.top + rect.height {
                for c in rect.left..rect.left + rect.width {
                    mask.set(r, c, true);
                }
            }
        }
        mask
    }
}

/// A packed composite grid together with its mask and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedBatch {
    pub grid: ImageGrid,
    pub mask: MaskGrid,
    pub layout: PackingLayout,
}

/// Tiles `examples` into one grid; separator pixels are 0.
pub fn pack_examples(examples: &[ImageGrid]) -> Result<PackedBatch> {
    let first = examples
        .first()
        .ok_or_else(|| Error::Argument("cannot pack an empty example list".into()))?;
    if let Some(i) = examples.iter().position(|e| e.channels() != first.channels()) {
        return Err(Error::Shape(format!(
            "example {i} has {} channels, expected {}",
            examples[i].channels(),
            first.channels()
        )));
    }
    let sizes: Vec<_> = examples.iter().map(|e| (e.height(), e.width())).collect();
    let layout = PackingLayout::plan(&sizes)?;
    let mut grid = ImageGrid::zeros(layout.total_height, layout.total_width, first.channels())?;
    for (example, rect) in examples.iter().zip(layout.example_rects()) {
        grid.paste(example, rect.top, rect.left);
    }
    let mask = layout.mask();
    Ok(PackedBatch { grid, mask, layout })
}

/// Packs the examples, then skews the packed grid and mask with the same shift.
pub fn pack_and_skew(examples: &[ImageGrid]) -> Result<(SkewedGrid, PackingLayout)> {
    let packed = pack_examples(examples)?;
    let skewed = skew_masked(&packed.grid, &packed.mask)?;
    Ok((skewed, packed.layout))
}

fn scale_exact(value: usize, scale: Ratio<usize>, what: &str) -> Result<usize> {
    let scaled = Ratio::from_integer(value) * scale;
    if !scaled.is_integer() {
        return Err(Error::Layout(format!(
            "{what} {value} scaled by {scale} is not an integer"
        )));
    }
    Ok(scaled.to_integer())
}

/// Cuts per-example activations back out of a packed activation grid.
///
/// `height_scale` and `width_scale` relate activation resolution to the input
/// resolution the layout was planned for (1 after recurrent layers).
pub fn unpack_activations(
    packed: &ImageGrid,
    layout: &PackingLayout,
    height_scale: Ratio<usize>,
    width_scale: Ratio<usize>,
) -> Result<Vec<ImageGrid>> {
    layout.validate()?;
    if *height_scale.numer() == 0 || *width_scale.numer() == 0 {
        return Err(Error::Argument("scale factors must be positive".into()));
    }
    let expected_h = scale_exact(layout.total_height, height_scale, "total height")?;
    let expected_w = scale_exact(layout.total_width, width_scale, "total width")?;
    if packed.height() != expected_h || packed.width() != expected_w {
        return Err(Error::Layout(format!(
            "activations are {}x{}, layout implies {expected_h}x{expected_w}",
            packed.height(),
            packed.width()
        )));
    }
    layout
        .example_rects()
        .into_iter()
        .map(|rect| {
            let top = scale_exact(rect.top, height_scale, "row offset")?;
            let left = scale_exact(rect.left, width_scale, "column offset")?;
            let h = scale_exact(rect.height, height_scale, "example height")?;
            let w = scale_exact(rect.width, width_scale, "example width")?;
            packed.crop(top, left, h, w)
        })
        .collect()
}
