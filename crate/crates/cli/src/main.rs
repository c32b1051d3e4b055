//! `dpt`: batch front end for the pulse transform.
//!
//! Exit codes: 0 ok, 1 assertion failure, 2 usage error, 3 I/O or input
//! error.

mod grid;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpt_core::dpt::format::{read_result, write_pulses, write_spectrum, write_summary, Summary};
use dpt_core::dpt::{decompose, reconstruct, reconstruct_full, DptResult};
use dpt_core::verify::{run_suite, SuiteConfig};
use dpt_core::{Boundary, Connectivity, Lattice, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{csv_bytes, output_format, pgm_bytes, read_grid, Format};

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Assertion(String),
}

impl Failure {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Assertion(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) | Failure::Input(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "dpt", version, about = "LULU smoothing and Discrete Pulse Transform for integer grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a CSV or PGM grid into pulses.
    Decompose(DecomposeArgs),
    /// Rebuild a grid from a decomposition directory.
    Reconstruct(ReconstructArgs),
    /// Band-pass filter: decompose, then keep the pulses in a scale band.
    Filter(FilterArgs),
    /// Run the randomized verification suite.
    Verify(VerifyArgs),
    /// Time the decomposition of a smoothed random image.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ConnectivityArg {
    #[value(name = "4", alias = "facet")]
    Facet,
    #[value(name = "8", alias = "full")]
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    #[value(name = "zero", alias = "zero_padded")]
    Zero,
    #[value(name = "domain", alias = "domain_only")]
    Domain,
}

#[derive(Args)]
struct LatticeArgs {
    /// Neighbourhood: 4 (facet) or 8 (full, 2D only).
    #[arg(long, value_enum, default_value = "4")]
    connectivity: ConnectivityArg,
    /// Outside the window: zero extension, or nothing.
    #[arg(long, value_enum, default_value = "zero")]
    boundary: BoundaryArg,
    /// Refuse inputs with more cells than this.
    #[arg(long, default_value_t = 1 << 24)]
    max_cells: usize,
}

impl LatticeArgs {
    fn connectivity(&self) -> Connectivity {
        match self.connectivity {
            ConnectivityArg::Facet => Connectivity::Facet,
            ConnectivityArg::Full => Connectivity::Full,
        }
    }

    fn boundary(&self) -> Boundary {
        match self.boundary {
            BoundaryArg::Zero => Boundary::ZeroPadded,
            BoundaryArg::Domain => Boundary::DomainOnly,
        }
    }
}

#[derive(Args)]
struct DecomposeArgs {
    /// CSV (row-major integers) or PGM (.pgm) input.
    #[arg(long)]
    input: PathBuf,
    /// Directory for pulses.jsonl, summary.json and spectrum.csv.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    lattice: LatticeArgs,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Directory written by `decompose`.
    #[arg(long)]
    input: PathBuf,
    /// Output grid; `.pgm` writes a graymap, anything else CSV.
    #[arg(long)]
    output: PathBuf,
    /// Scale band LO:HI (default: all scales plus residual).
    #[arg(long)]
    scales: Option<String>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Scale band LO:HI.
    #[arg(long)]
    scales: String,
    #[command(flatten)]
    lattice: LatticeArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite config (key = value lines); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Preconditioned fields per scale.
    #[arg(long)]
    trials: Option<usize>,
    /// Report path; the JSON report goes to stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Perturb compared operator outputs (harness self-test).
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Image side length.
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    lattice: LatticeArgs,
}

fn parse_band(text: &str) -> Result<(usize, usize), Failure> {
    let usage = || Failure::Usage(format!("--scales expects LO:HI with 1 <= LO <= HI, got {text:?}"));
    let (lo, hi) = text.split_once(':').ok_or_else(usage)?;
    let lo: usize = lo.trim().parse().map_err(|_| usage())?;
    let hi: usize = hi.trim().parse().map_err(|_| usage())?;
    if lo == 0 || lo > hi {
        return Err(usage());
    }
    Ok((lo, hi))
}

/// Writes via a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Failure::io(path, e))?;
    tmp.persist(path).map_err(|e| Failure::io(path, e.error))?;
    Ok(())
}

fn load(path: &Path, lattice: &LatticeArgs) -> Result<(ScalarField, Format), Failure> {
    let grid = read_grid(path)?;
    let cells = grid.rows * grid.cols;
    if cells > lattice.max_cells {
        return Err(Failure::Usage(format!("input has {cells} cells, above --max-cells {}", lattice.max_cells)));
    }
    let format = grid.format;
    Ok((grid.into_field(lattice.connectivity(), lattice.boundary())?, format))
}

fn write_field(path: &Path, field: &ScalarField, source: Format) -> Result<(), Failure> {
    match output_format(path, source) {
        Format::Csv => write_atomic(path, &csv_bytes(field)?),
        Format::Pgm { maxval, ascii } => {
            let (bytes, clamped) = pgm_bytes(field, maxval, ascii)?;
            write_atomic(path, &bytes)?;
            eprintln!("clamped {clamped} cells to 0..={maxval}");
            Ok(())
        }
    }
}

fn decompose_cmd(args: &DecomposeArgs) -> Result<(), Failure> {
    let (field, format) = load(&args.input, &args.lattice)?;
    let result = decompose(&field);
    let mut config = BTreeMap::new();
    config.insert("connectivity".to_string(), field.lattice().connectivity().to_string());
    config.insert("boundary".to_string(), field.lattice().boundary().to_string());
    config.insert("input_format".to_string(), format.name().to_string());
    if let Format::Pgm { maxval, ascii } = format {
        config.insert("maxval".to_string(), maxval.to_string());
        config.insert("pgm_encoding".to_string(), if ascii { "ascii" } else { "binary" }.to_string());
    }
    std::fs::create_dir_all(&args.output).map_err(|e| Failure::io(&args.output, e))?;

    let mut pulses = Vec::new();
    write_pulses(&result, &mut pulses).map_err(|e| Failure::Io(e.to_string()))?;
    let mut summary = Vec::new();
    write_summary(&Summary::of(&result, config), &mut summary).map_err(|e| Failure::Io(e.to_string()))?;
    let mut spectrum = Vec::new();
    write_spectrum(&result, &mut spectrum).map_err(|e| Failure::Io(e.to_string()))?;
    write_atomic(&args.output.join("pulses.jsonl"), &pulses)?;
    write_atomic(&args.output.join("summary.json"), &summary)?;
    write_atomic(&args.output.join("spectrum.csv"), &spectrum)?;
    eprintln!("{} pulses over {} scales", result.pulse_count(), result.n_max());
    Ok(())
}

fn read_decomposition(dir: &Path) -> Result<(DptResult, Format), Failure> {
    let summary_path = dir.join("summary.json");
    let pulses_path = dir.join("pulses.jsonl");
    let file = File::open(&summary_path).map_err(|e| Failure::io(&summary_path, e))?;
    let summary: Summary = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Failure::Input(format!("{}: {e}", summary_path.display())))?;
    let file = File::open(&pulses_path).map_err(|e| Failure::io(&pulses_path, e))?;
    let result = read_result(&summary, BufReader::new(file))
        .map_err(|e| Failure::Input(format!("{}: {e}", pulses_path.display())))?;
    let format = match summary.config.get("maxval").and_then(|m| m.parse().ok()) {
        Some(maxval) => Format::Pgm { maxval, ascii: summary.config.get("pgm_encoding").is_some_and(|e| e == "ascii") },
        None => Format::Csv,
    };
    Ok((result, format))
}

fn reconstruct_cmd(args: &ReconstructArgs) -> Result<(), Failure> {
    let band = args.scales.as_deref().map(parse_band).transpose()?;
    let (result, format) = read_decomposition(&args.input)?;
    let field = match band {
        Some((lo, hi)) => reconstruct(&result, lo, hi).map_err(|e| Failure::Usage(e.to_string()))?,
        None => reconstruct_full(&result),
    };
    write_field(&args.output, &field, format)
}

fn filter_cmd(args: &FilterArgs) -> Result<(), Failure> {
    let (lo, hi) = parse_band(&args.scales)?;
    let (field, format) = load(&args.input, &args.lattice)?;
    let result = decompose(&field);
    let filtered = reconstruct(&result, lo, hi).map_err(|e| Failure::Usage(e.to_string()))?;
    write_field(&args.output, &filtered, format)
}

fn verify_cmd(args: &VerifyArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            SuiteConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => SuiteConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    config.inject_fault |= args.inject_fault;

    let report = run_suite(&config).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut json = serde_json::to_vec_pretty(&report).map_err(|e| Failure::Io(e.to_string()))?;
    json.push(b'\n');
    match &args.output {
        Some(path) => write_atomic(path, &json)?,
        None => std::io::stdout().write_all(&json).map_err(|e| Failure::Io(e.to_string()))?,
    }
    eprintln!(
        "{} trials, {} assertions, {} failures, {} inapplicable",
        report.trials, report.assertions, report.failures, report.inapplicable
    );
    if report.passed {
        return Ok(());
    }
    let witness = report
        .failed_reports
        .first()
        .and_then(|r| {
            let c = r.failed_checks().next()?;
            let seed = r.seed.map_or_else(|| "?".to_string(), |s| s.to_string());
            Some(format!("seed {seed}, n = {}, {}: {}", r.n, c.id, c.witness.as_deref().unwrap_or("")))
        })
        .unwrap_or_default();
    Err(Failure::Assertion(format!("{} assertions failed; first witness: {witness}", report.failures)))
}

/// Random 8-bit image smoothed by two 3x3 box blurs.
fn smoothed_image(side: usize, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<i64> = (0..side * side).map(|_| rng.gen_range(0..=255)).collect();
    for _ in 0..2 {
        let mut next = vec![0; v.len()];
        for r in 0..side {
            for c in 0..side {
                let (mut sum, mut count) = (0, 0);
                for rr in r.saturating_sub(1)..=(r + 1).min(side - 1) {
                    for cc in c.saturating_sub(1)..=(c + 1).min(side - 1) {
                        sum += v[rr * side + cc];
                        count += 1;
                    }
                }
                next[r * side + c] = (sum + count / 2) / count;
            }
        }
        v = next;
    }
    v
}

fn bench_cmd(args: &BenchArgs) -> Result<(), Failure> {
    if args.size == 0 || args.size * args.size > args.lattice.max_cells {
        return Err(Failure::Usage(format!("--size {} outside 1..=sqrt(--max-cells)", args.size)));
    }
    let lattice = Lattice::grid(args.size, args.size, args.lattice.connectivity(), args.lattice.boundary())
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let field =
        ScalarField::new(lattice, smoothed_image(args.size, args.seed)).map_err(|e| Failure::Usage(e.to_string()))?;
    let start = Instant::now();
    let result = decompose(&field);
    let elapsed = start.elapsed();
    let exact = reconstruct_full(&result) == field;
    println!(
        "{}",
        serde_json::json!({
            "cells": field.lattice().len(),
            "pulses": result.pulse_count(),
            "n_max": result.n_max(),
            "decompose_ms": elapsed.as_secs_f64() * 1e3,
            "reconstruction_exact": exact,
        })
    );
    if exact {
        Ok(())
    } else {
        Err(Failure::Assertion("reconstruction differs from input".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Decompose(a) => decompose_cmd(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Filter(a) => filter_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
