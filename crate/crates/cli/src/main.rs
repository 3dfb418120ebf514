use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gridpack::harness::{
    load_manifest, max_batch_under_budget, padding_stats, peak_batch_cost, stability_csv, stability_report,
    synth_manifest, throughput_bench, BenchReport, MemoryModel, SizeManifest, Strategy, SynthSpec, ThroughputOptions,
    REPORT_SCHEMA_VERSION,
};
use gridpack::io::{read_csv_grid, read_pgm};
use gridpack::model::{load_model, save_model};
use gridpack::{
    greedy_ctc_decode, network_forward, ImageGrid, LogitSequence, NetworkConfig, NetworkParams, PackingLayout,
};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "gridpack", version, about = "Example-packing for 2-D recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a packing layout for the sizes in a manifest.
    Pack {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the network on a directory of PGM or CSV images.
    Forward {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Include the full logit matrices in every line.
        #[arg(long)]
        emit_logits: bool,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
    /// Write randomly initialised parameters for a network configuration.
    InitModel {
        /// Network configuration; the built-in default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the configuration used.
        #[arg(long)]
        config_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        scale: f32,
    },
    /// Padded-pixel fractions of LMBR and packing at a fixed batch size.
    BenchPadding {
        #[command(flatten)]
        source: ManifestArgs,
        #[arg(long, default_value_t = 20)]
        batch_size: usize,
        #[arg(long, value_enum, default_value_t = StrategyArg::Both)]
        strategy: StrategyArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest batch size that fits a memory budget, per strategy.
    BenchCapacity {
        #[command(flatten)]
        source: ManifestArgs,
        #[command(flatten)]
        memory: MemoryArgs,
        #[arg(long, value_enum, default_value_t = StrategyArg::Both)]
        strategy: StrategyArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time forward passes at each strategy's largest batch size.
    BenchThroughput {
        #[command(flatten)]
        source: ManifestArgs,
        #[command(flatten)]
        memory: MemoryArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Both)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        /// Run batches in parallel; timings then measure parallel throughput.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Memory traces of plain and Leaky LP cells as CSV.
    Stability {
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, value_delimiter = ',', default_value = "3.0", allow_hyphen_values = true)]
        biases: Vec<f32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy CTC decoding of logit lines written by `forward --emit-logits`.
    Decode {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ManifestArgs {
    /// CSV with header `id,height,width`.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    manifest: Option<PathBuf>,
    /// Generate a synthetic manifest instead.
    #[arg(long, value_enum)]
    synth: Option<Preset>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shrink synthetic sizes by this factor.
    #[arg(long, default_value_t = 1)]
    downscale: usize,
    /// Sort by size before forming batches.
    #[arg(long)]
    sort_by_size: bool,
}

#[derive(Args)]
struct MemoryArgs {
    #[arg(long)]
    budget: u64,
    #[arg(long, default_value_t = 1.0)]
    bytes_per_valid_pixel: f64,
    #[arg(long, default_value_t = 1.0)]
    bytes_per_padded_pixel: f64,
    #[arg(long, default_value_t = 0)]
    fixed_overhead: u64,
}

impl MemoryArgs {
    fn model(&self) -> MemoryModel {
        MemoryModel {
            bytes_per_valid_pixel: self.bytes_per_valid_pixel,
            bytes_per_padded_pixel: self.bytes_per_padded_pixel,
            fixed_overhead_bytes: self.fixed_overhead,
            budget_bytes: self.budget,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Word,
    Line,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Lmbr,
    Packing,
    Both,
}

impl StrategyArg {
    fn strategies(self) -> Vec<Strategy> {
        match self {
            StrategyArg::Lmbr => vec![Strategy::Lmbr],
            StrategyArg::Packing => vec![Strategy::Packing],
            StrategyArg::Both => vec![Strategy::Lmbr, Strategy::Packing],
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T> {
    schema_version: u32,
    command: &'a str,
    manifest: String,
    examples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    memory_model: Option<MemoryModel>,
    reports: T,
}

#[derive(Serialize)]
struct PackSummary {
    examples: usize,
    packed_area: usize,
    valid_pixels: usize,
    padded_pixels: usize,
    padding_fraction: f64,
}

#[derive(Serialize)]
struct PackOutput<'a> {
    #[serde(flatten)]
    layout: &'a PackingLayout,
    summary: PackSummary,
}

#[derive(Serialize, Deserialize)]
struct ForwardLine {
    id: String,
    #[serde(rename = "T")]
    timesteps: usize,
    decoded: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logits: Option<LogitSequence>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let capacity = err
                .chain()
                .any(|e| matches!(e.downcast_ref::<gridpack::Error>(), Some(gridpack::Error::Capacity(_))));
            ExitCode::from(if capacity { 3 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Pack { manifest, out } => pack(&manifest, &out),
        Command::Forward {
            model,
            config,
            images,
            out,
            emit_logits,
            batch_size,
        } => forward(&model, &config, &images, &out, emit_logits, batch_size),
        Command::InitModel {
            config,
            out,
            config_out,
            seed,
            scale,
        } => {
            let cfg = match config {
                Some(p) => read_config(&p)?,
                None => NetworkConfig::default(),
            };
            let params = NetworkParams::random(&cfg, seed, scale)?;
            save_model(&out, &params).with_context(|| format!("writing {}", out.display()))?;
            if let Some(p) = config_out {
                fs::write(&p, serde_json::to_string_pretty(&cfg)?)?;
            }
            Ok(())
        }
        Command::BenchPadding {
            source,
            batch_size,
            strategy,
            out,
        } => {
            let (m, label) = manifest(&source)?;
            let reports = strategy
                .strategies()
                .into_iter()
                .map(|s| padding_stats(&m, batch_size, s))
                .collect::<gridpack::Result<Vec<_>>>()?;
            for r in &reports {
                println!(
                    "{:<8} batch {:>4}: padded fraction {:.4}, skew overhead {:.4}, total pixels {}",
                    r.strategy.name(),
                    r.batch_size,
                    r.padded_fraction,
                    r.skew_overhead_fraction,
                    r.total_pixels
                );
            }
            emit("bench-padding", label, &m, None, &reports, out.as_deref())
        }
        Command::BenchCapacity {
            source,
            memory,
            strategy,
            out,
        } => {
            let (m, label) = manifest(&source)?;
            let mem = memory.model();
            let mut reports = Vec::new();
            for s in strategy.strategies() {
                let b = max_batch_under_budget(&m, &mem, s)?;
                let mut r = padding_stats(&m, b, s)?;
                r.peak_batch_memory_bytes = Some(peak_batch_cost(&m, &mem, b, s)?);
                println!("{:<8} max batch size {b}", s.name());
                reports.push(r);
            }
            emit("bench-capacity", label, &m, Some(mem), &reports, out.as_deref())
        }
        Command::BenchThroughput {
            source,
            memory,
            config,
            strategy,
            repetitions,
            parallel,
            out,
        } => {
            let (m, label) = manifest(&source)?;
            let cfg = match config {
                Some(p) => read_config(&p)?,
                None => NetworkConfig::default(),
            };
            if parallel {
                eprintln!("warning: batches run in parallel; timings measure parallel throughput");
            }
            let opts = ThroughputOptions {
                repetitions,
                seed: source.seed,
                parallel,
            };
            let mem = memory.model();
            let reports = throughput_bench(&cfg, &m, &strategy.strategies(), &mem, opts)?;
            for r in &reports {
                println!(
                    "{:<8} batch {:>4}: {:.2} examples/s",
                    r.strategy.name(),
                    r.batch_size,
                    r.examples_per_second.unwrap_or(0.0)
                );
            }
            emit("bench-throughput", label, &m, Some(mem), &reports, out.as_deref())
        }
        Command::Stability { steps, biases, out } => {
            let rows = stability_report(steps, &biases)?;
            fs::write(&out, stability_csv(&rows)?).with_context(|| format!("writing {}", out.display()))?;
            for kind in [gridpack::CellKind::Plain, gridpack::CellKind::LeakyLp] {
                for &bias in &biases {
                    let peak = rows
                        .iter()
                        .filter(|r| r.cell_kind == kind && r.forget_bias == bias)
                        .map(|r| r.max_abs_memory)
                        .fold(0.0f32, f32::max);
                    println!("{kind:?} bias {bias}: max |memory| {peak:e}");
                }
            }
            Ok(())
        }
        Command::Decode { logits, config } => decode(&logits, &config),
    }
}

fn read_config(path: &Path) -> Result<NetworkConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: NetworkConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn manifest(args: &ManifestArgs) -> Result<(SizeManifest, String)> {
    let (m, label) = match (&args.manifest, args.synth) {
        (Some(path), _) => (load_manifest(path)?, path.display().to_string()),
        (None, Some(preset)) => {
            let (spec, name) = match preset {
                Preset::Word => (SynthSpec::word_like(), "word"),
                Preset::Line => (SynthSpec::line_like(), "line"),
            };
            let spec = spec.scaled_down(args.downscale);
            let m = synth_manifest(args.n, &spec, args.seed)?;
            (
                m,
                format!(
                    "synth:{name}:n={}:seed={}:downscale={}",
                    args.n, args.seed, args.downscale
                ),
            )
        }
        (None, None) => bail!("either --manifest or --synth is required"),
    };
    Ok(if args.sort_by_size {
        (m.sorted_by_size(), format!("{label}:sorted"))
    } else {
        (m, label)
    })
}

fn emit(
    command: &str,
    manifest: String,
    m: &SizeManifest,
    memory_model: Option<MemoryModel>,
    reports: &[BenchReport],
    out: Option<&Path>,
) -> Result<()> {
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        command,
        manifest,
        examples: m.len(),
        memory_model,
        reports,
    };
    let json = serde_json::to_string_pretty(&report)?;
    match out {
        Some(p) => fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn pack(manifest: &Path, out: &Path) -> Result<()> {
    let m = load_manifest(manifest)?;
    let layout = PackingLayout::plan(&m.sizes())?;
    let valid = layout.valid_pixels();
    let area = layout.packed_area();
    let summary = PackSummary {
        examples: m.len(),
        packed_area: area,
        valid_pixels: valid,
        padded_pixels: area - valid,
        padding_fraction: (area - valid) as f64 / area as f64,
    };
    println!(
        "{} examples in {}x{}: packed area {area}, padding fraction {:.4}",
        summary.examples, layout.total_height, layout.total_width, summary.padding_fraction
    );
    let json = serde_json::to_string_pretty(&PackOutput {
        layout: &layout,
        summary,
    })?;
    fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn read_images(dir: &Path) -> Result<Vec<(String, ImageGrid)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "csv")));
    paths.sort();
    if paths.is_empty() {
        bail!("no .pgm or .csv images in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let grid = if p.extension().is_some_and(|e| e == "pgm") {
                read_pgm(p)?
            } else {
                read_csv_grid(p)?
            };
            Ok((id, grid))
        })
        .collect()
}

fn forward(model: &Path, config: &Path, images: &Path, out: &Path, emit_logits: bool, batch_size: usize) -> Result<()> {
    if batch_size == 0 {
        bail!("--batch-size must be at least 1");
    }
    let cfg = read_config(config)?;
    let params = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    params.check_against(&cfg)?;
    let inputs = read_images(images)?;
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    for chunk in inputs.chunks(batch_size) {
        let grids: Vec<ImageGrid> = chunk.iter().map(|(_, g)| g.clone()).collect();
        let logits = network_forward(&cfg, &params, &grids)?;
        for ((id, _), l) in chunk.iter().zip(logits) {
            let line = ForwardLine {
                id: id.clone(),
                timesteps: l.timesteps,
                decoded: greedy_ctc_decode(&l, &cfg.alphabet),
                logits: emit_logits.then_some(l),
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    println!("wrote {} lines to {}", inputs.len(), out.display());
    Ok(())
}

fn decode(logits: &Path, config: &Path) -> Result<()> {
    let cfg = read_config(config)?;
    let file = File::open(logits).with_context(|| format!("opening {}", logits.display()))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ForwardLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: not a forward output line", logits.display(), i + 1))?;
        let Some(l) = parsed.logits else {
            bail!(
                "{}:{}: line has no logits; rerun forward with --emit-logits",
                logits.display(),
                i + 1
            );
        };
        if l.alphabet_size != cfg.alphabet.len() || l.values.len() != l.timesteps * l.alphabet_size {
            bail!(
                "{}:{}: logits do not match the configured alphabet",
                logits.display(),
                i + 1
            );
        }
        println!("{}\t{}", parsed.id, greedy_ctc_decode(&l, &cfg.alphabet));
    }
    Ok(())
}
