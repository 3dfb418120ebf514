use serde::{Deserialize, Serialize};

use crate::cell::{stability_trace, CellKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub cell_kind: CellKind,
    pub forget_bias: f32,
    pub max_abs_memory: f32,
}

/// Traces of length `steps` for both cell kinds at every bias, steps numbered from 1.
pub fn stability_report(steps: usize, biases: &[f32]) -> Result<Vec<TraceRow>> {
    if biases.is_empty() {
        return Err(Error::Argument("at least one forget bias is required".into()));
    }
    let mut rows = Vec::with_capacity(2 * steps * biases.len());
    for kind in [CellKind::Plain, CellKind::LeakyLp] {
        for &bias in biases {
            let trace = stability_trace(kind, steps, bias)?;
            rows.extend(trace.into_iter().enumerate().map(|(i, m)| TraceRow {
                step: i + 1,
                cell_kind: kind,
                forget_bias: bias,
                max_abs_memory: m,
            }));
        }
    }
    Ok(rows)
}

/// CSV with header `step,cell_kind,forget_bias,max_abs_memory`.
pub fn stability_csv(rows: &[TraceRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}
