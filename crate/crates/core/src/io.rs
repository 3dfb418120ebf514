//! Grid readers: binary PGM (P5) and plain CSV.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Reads an 8-bit binary PGM image into a single-channel grid with values `p / 255`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    parse_pgm(&bytes).map_err(|msg| Error::parse(path, 1, msg))
}

pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<ImageGrid, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
    }
    if fields[0] != "P5" {
        return Err(format!("expected magic P5, found {:?}", fields[0]));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("invalid {what} {s:?}"));
    let width = num(fields[1], "width")?;
    let height = num(fields[2], "height")?;
    let maxval = num(fields[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("only 8-bit PGM is supported, maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| format!("raster shorter than {width}x{height}"))?;
    let data = raster.iter().map(|&p| f32::from(p) / 255.0).collect();
    ImageGrid::from_vec(height, width, 1, data).map_err(|e| e.to_string())
}

/// Encodes a single-channel grid as binary PGM, clamping values to `[0, 1]`.
pub fn encode_pgm(grid: &ImageGrid) -> Result<Vec<u8>> {
    if grid.channels() != 1 {
        return Err(Error::Shape("PGM holds exactly one channel".into()));
    }
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.extend(grid.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

/// Reads rows of comma-separated reals into a single-channel grid.
pub fn read_csv_grid(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f32>()
                    .map_err(|_| Error::parse(path, line, format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {} values, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    ImageGrid::from_rows(&rows)
}
