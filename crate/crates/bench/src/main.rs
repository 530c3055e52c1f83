use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use strassen_core::bench::{emit_csv, model_only, run_sweep, BenchError, BenchOptions, Family, RunRecord, SweepSpec};
use strassen_core::model::ModelParams;
use strassen_core::{BlockingParams, VariantSpec};

/// Times, verifies and models blocked dgemm and fused Strassen variants.
#[derive(Debug, Parser)]
#[command(name = "strassen-bench", version)]
struct Cli {
    /// Shape family: square, rankk, fixedk or rankb.
    #[arg(long, default_value = "square")]
    family: Family,

    /// Sweep range `start:stop:step` (inclusive).
    #[arg(long, default_value = "240:1200:240", value_parser = parse_range)]
    range: (usize, usize, usize),

    /// Fixed dimensions, e.g. `m=16000,n=16000` or `k=1024`.
    #[arg(long, value_parser = parse_fixed)]
    fixed: Option<Fixed>,

    /// Panel width of the rank-b schedule.
    #[arg(long = "b")]
    panel: Option<usize>,

    /// Comma-separated variants: dgemm,abc1,ab1,naive1,abc2,ab2,naive2.
    #[arg(long, value_delimiter = ',', default_value = "dgemm,abc1,ab1,naive1,abc2,ab2,naive2")]
    variants: Vec<VariantSpec>,

    #[arg(long, default_value_t = 1)]
    threads: usize,

    #[arg(long, default_value_t = 3)]
    reps: usize,

    /// Check every result against the triple-loop oracle (or blocked dgemm
    /// above 1200).
    #[arg(long)]
    verify: bool,

    /// Emit model predictions only, without running anything.
    #[arg(long)]
    model_only: bool,

    /// Hardware parameter file (`key = value` lines).
    #[arg(long)]
    params: Option<PathBuf>,

    /// Blocking overrides, e.g. `mC=96,nC=4096,kC=256,mR=8,nR=4`.
    #[arg(long, value_parser = parse_blocking)]
    blocking: Option<BlockingParams>,

    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    alpha: f64,

    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,

    /// Output CSV path, or `-` for stdout.
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Clone, Copy, Default)]
struct Fixed {
    m: Option<usize>,
    n: Option<usize>,
    k: Option<usize>,
}

fn parse_range(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<_> = s.split(':').map(str::trim).collect();
    let num = |p: &str| p.parse::<usize>().map_err(|_| format!("bad number {p:?} in range {s:?}"));
    match parts.as_slice() {
        [a] => Ok((num(a)?, num(a)?, 1)),
        [a, b] => Ok((num(a)?, num(b)?, 1)),
        [a, b, c] => Ok((num(a)?, num(b)?, num(c)?)),
        _ => Err(format!("expected start:stop:step, got {s:?}")),
    }
}

fn key_values(s: &str) -> Result<Vec<(String, usize)>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, v) = p.split_once('=').ok_or_else(|| format!("expected key=value, got {p:?}"))?;
            let v = v.trim().parse().map_err(|_| format!("bad value in {p:?}"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn parse_fixed(s: &str) -> Result<Fixed, String> {
    let mut f = Fixed::default();
    for (k, v) in key_values(s)? {
        match k.as_str() {
            "m" => f.m = Some(v),
            "n" => f.n = Some(v),
            "k" => f.k = Some(v),
            _ => return Err(format!("unknown dimension {k:?}")),
        }
    }
    Ok(f)
}

fn parse_blocking(s: &str) -> Result<BlockingParams, String> {
    let mut p = BlockingParams::default();
    for (k, v) in key_values(s)? {
        match k.as_str() {
            "mC" | "mc" => p.mc = v,
            "nC" | "nc" => p.nc = v,
            "kC" | "kc" => p.kc = v,
            "mR" | "mr" => p.mr = v,
            "nR" | "nr" => p.nr = v,
            _ => return Err(format!("unknown blocking parameter {k:?}")),
        }
    }
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn write_records(records: &[RunRecord], out: &str) -> io::Result<()> {
    if out == "-" {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        emit_csv(records, &mut lock)?;
        lock.flush()
    } else {
        let mut w = BufWriter::new(File::create(out)?);
        emit_csv(records, &mut w)?;
        w.flush()
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let (start, stop, step) = cli.range;
    let fixed = cli.fixed.unwrap_or_default();
    let spec = SweepSpec {
        family: cli.family,
        start,
        stop,
        step,
        fixed_m: fixed.m,
        fixed_n: fixed.n,
        fixed_k: fixed.k,
        panel: cli.panel,
    };
    let model = match &cli.params {
        Some(path) => ModelParams::load(path)?,
        None => ModelParams::default(),
    };
    let blocking = cli.blocking.unwrap_or_default();

    if cli.model_only {
        let records = model_only(&spec, &cli.variants, &blocking, &model)?;
        write_records(&records, &cli.out)?;
        return Ok(ExitCode::SUCCESS);
    }

    let opts = BenchOptions {
        blocking,
        model,
        reps: cli.reps,
        threads: cli.threads,
        verify: cli.verify,
        alpha: cli.alpha,
        seed: cli.seed,
        ..BenchOptions::default()
    };
    match run_sweep(&spec, &cli.variants, &opts) {
        Ok(records) => {
            write_records(&records, &cli.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Err(BenchError::Verification { record, mut completed }) => {
            let msg = BenchError::Verification { record: record.clone(), completed: Vec::new() }.to_string();
            completed.push(*record);
            write_records(&completed, &cli.out)?;
            eprintln!("verification failed: {msg}");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
