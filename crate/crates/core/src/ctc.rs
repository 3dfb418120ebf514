//! Greedy (best-path) CTC decoding.

use crate::network::LogitSequence;

/// Index of the blank symbol in every alphabet.
pub const BLANK: usize = 0;

/// Arg-max label per timestep; ties go to the lower index.
pub fn best_path(logits: &LogitSequence) -> Vec<usize> {
    (0..logits.timesteps)
        .map(|t| {
            let row = logits.row(t);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Merges adjacent repeats, then removes blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = None;
    for &label in path {
        if Some(label) != last && label != BLANK {
            out.push(label);
        }
        last = Some(label);
    }
    out
}

pub fn greedy_ctc_decode(logits: &LogitSequence, alphabet: &[String]) -> String {
    collapse(&best_path(logits))
        .into_iter()
        .map(|i| alphabet[i].as_str())
        .collect()
}
