//! Balanced splitting of an example list into `k` sub-lists (LPT scheduling).

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Assigns items with the given loads to `k` bins by longest-processing-time:
/// heaviest first (ties by index), each into the currently lightest bin
/// (ties by bin index). Returns item indices per bin in assignment order.
pub fn split_loads(loads: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::Argument("number of sub-lists must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..loads.len()).collect();
    order.sort_by(|&a, &b| loads[b].cmp(&loads[a]).then(a.cmp(&b)));
    let mut bins = vec![Vec::new(); k];
    let mut totals = vec![0usize; k];
    for idx in order {
        let lightest = (0..k).min_by_key(|&b| (totals[b], b)).expect("k >= 1");
        totals[lightest] += loads[idx];
        bins[lightest].push(idx);
    }
    Ok(bins)
}

/// Splits examples into `k` sub-lists of approximately equal pixel load
/// (`height * width * channels`). Returns example indices per sub-list.
pub fn split_balanced(examples: &[ImageGrid], k: usize) -> Result<Vec<Vec<usize>>> {
    let loads: Vec<usize> = examples.iter().map(|e| e.area() * e.channels()).collect();
    split_loads(&loads, k)
}
