use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRecord {
    pub id: String,
    pub height: usize,
    pub width: usize,
}

impl SizeRecord {
    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

/// Example sizes driving the benchmarks. Non-empty, ids unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeManifest {
    records: Vec<SizeRecord>,
}

impl SizeManifest {
    pub fn new(records: Vec<SizeRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Argument("manifest is empty".into()));
        }
        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            if r.height == 0 || r.width == 0 {
                return Err(Error::Dimension(format!("{}: dimensions must be positive", r.id)));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Argument(format!("duplicate id {:?}", r.id)));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[SizeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sizes(&self) -> Vec<(usize, usize)> {
        self.records.iter().map(|r| (r.height, r.width)).collect()
    }

    /// Copy ordered by `(height, width, id)`.
    pub fn sorted_by_size(&self) -> Self {
        let mut records = self.records.clone();
        records.sort_by(|a, b| (a.height, a.width, &a.id).cmp(&(b.height, b.width, &b.id)));
        Self { records }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,height,width\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.id, r.height, r.width));
        }
        out
    }
}

/// Reads a CSV manifest with header `id,height,width`.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<SizeManifest> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let header = reader.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != ["id", "height", "width"] {
        return Err(Error::parse(path, 1, "header must be id,height,width"));
    }
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let dim = |k: usize, name: &str| -> Result<usize> {
            let v: i64 = row[k]
                .parse()
                .map_err(|_| Error::parse(path, line, format!("{name} {:?} is not an integer", &row[k])))?;
            if v <= 0 {
                return Err(Error::parse(path, line, format!("{name} must be positive, got {v}")));
            }
            Ok(v as usize)
        };
        let record = SizeRecord {
            id: row[0].to_string(),
            height: dim(1, "height")?,
            width: dim(2, "width")?,
        };
        if !ids.insert(record.id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id {:?}", record.id)));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::parse(path, 1, "manifest has no records"));
    }
    SizeManifest::new(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeightDist {
    /// Uniform over a fixed set of heights.
    Buckets { heights: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WidthDist {
    Uniform {
        min: usize,
        max: usize,
    },
    /// `exp(N(mu, sigma))`, rounded and clamped to `[min, max]`.
    LogNormal {
        mu: f64,
        sigma: f64,
        min: usize,
        max: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub heights: HeightDist,
    pub widths: WidthDist,
}

impl SynthSpec {
    /// Word strips: heights vary with ascenders and descenders, widths are
    /// heavy-tailed (short function words next to long words).
    pub fn word_like() -> Self {
        Self {
            heights: HeightDist::Buckets {
                heights: (24..=96).step_by(8).collect(),
            },
            widths: WidthDist::LogNormal {
                mu: 100f64.ln(),
                sigma: 0.8,
                min: 12,
                max: 800,
            },
        }
    }

    /// Line strips: widths average out, heights still differ.
    pub fn line_like() -> Self {
        Self {
            heights: HeightDist::Buckets {
                heights: (60..=140).step_by(4).collect(),
            },
            widths: WidthDist::Uniform { min: 1200, max: 2000 },
        }
    }

    /// Same shape at `1 / factor` resolution, for CPU-sized forward passes.
    pub fn scaled_down(&self, factor: usize) -> Self {
        let f = factor.max(1);
        let shrink = |v: usize| v.div_ceil(f).max(1);
        let heights = match &self.heights {
            HeightDist::Buckets { heights } => {
                let mut hs: Vec<usize> = heights.iter().map(|&h| shrink(h)).collect();
                hs.dedup();
                HeightDist::Buckets { heights: hs }
            }
        };
        let widths = match self.widths {
            WidthDist::Uniform { min, max } => WidthDist::Uniform {
                min: shrink(min),
                max: shrink(max),
            },
            WidthDist::LogNormal { mu, sigma, min, max } => WidthDist::LogNormal {
                mu: mu - (f as f64).ln(),
                sigma,
                min: shrink(min),
                max: shrink(max),
            },
        };
        Self { heights, widths }
    }

    fn validate(&self) -> Result<()> {
        let HeightDist::Buckets { heights } = &self.heights;
        if heights.is_empty() || heights.contains(&0) {
            return Err(Error::Argument("height buckets must be non-empty and positive".into()));
        }
        let ok = match self.widths {
            WidthDist::Uniform { min, max } => min >= 1 && min <= max,
            WidthDist::LogNormal { sigma, min, max, mu } => {
                min >= 1 && min <= max && sigma > 0.0 && sigma.is_finite() && mu.is_finite()
            }
        };
        if !ok {
            return Err(Error::Argument("invalid width distribution".into()));
        }
        Ok(())
    }
}

/// Draws `n` sizes; identical `(n, spec, seed)` give identical manifests.
pub fn synth_manifest(n: usize, spec: &SynthSpec, seed: u64) -> Result<SizeManifest> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Argument("manifest size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let HeightDist::Buckets { heights } = &spec.heights;
    let lognormal = match spec.widths {
        WidthDist::LogNormal { mu, sigma, .. } => {
            Some(LogNormal::new(mu, sigma).map_err(|e| Error::Argument(e.to_string()))?)
        }
        WidthDist::Uniform { .. } => None,
    };
    let records = (0..n)
        .map(|i| {
            let height = heights[rng.random_range(0..heights.len())];
            let width = match (spec.widths, &lognormal) {
                (WidthDist::Uniform { min, max }, _) => rng.random_range(min..=max),
                (WidthDist::LogNormal { min, max, .. }, Some(d)) => {
                    (d.sample(&mut rng).round() as usize).clamp(min, max)
                }
                _ => unreachable!("distribution built above"),
            };
            SizeRecord {
                id: format!("s{i:06}"),
                height,
                width,
            }
        })
        .collect();
    SizeManifest::new(records)
}
