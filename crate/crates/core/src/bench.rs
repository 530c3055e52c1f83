//! Sweep harness: shape families, best-of-N timing, oracle verification,
//! model predictions and CSV output.

use std::io::{self, Write};
use std::time::Instant;

use rand::{rngs::StdRng, SeedableRng};
use thiserror::Error;

use crate::blocking::BlockingParams;
use crate::engine::{ExecConfig, Gemm};
use crate::error::Error;
use crate::matrix::{reference_gemm, rel_frobenius_error, MatMut, MatRef, Matrix, ProblemShape};
use crate::model::{effective_gflops, predict, ModelParams};
use crate::strassen::VariantSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `m = n = k = x`.
    Square,
    /// `m`, `n` fixed, `k = x`.
    RankK,
    /// `k` fixed, `m = n = x`.
    FixedK,
    /// `m = n = x`, `C += sum_p A_p B_p` over panels of width `b` covering a
    /// fixed total `k`.
    RankB,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "square" => Ok(Self::Square),
            "rankk" => Ok(Self::RankK),
            "fixedk" => Ok(Self::FixedK),
            "rankb" | "rankb_schedule" => Ok(Self::RankB),
            _ => Err(Error::Domain(format!("unknown family {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSpec {
    pub family: Family,
    pub start: usize,
    pub stop: usize,
    pub step: usize,
    pub fixed_m: Option<usize>,
    pub fixed_n: Option<usize>,
    pub fixed_k: Option<usize>,
    /// Panel width for [`Family::RankB`].
    pub panel: Option<usize>,
}

impl SweepSpec {
    pub fn new(family: Family, start: usize, stop: usize, step: usize) -> Self {
        Self { family, start, stop, step, fixed_m: None, fixed_n: None, fixed_k: None, panel: None }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.start == 0 || self.step == 0 || self.start > self.stop {
            return Err(Error::Domain(format!("bad range {}:{}:{}", self.start, self.stop, self.step)));
        }
        let missing = |what: &str| Error::Domain(format!("family {:?} needs a fixed {what}", self.family));
        match self.family {
            Family::Square => {}
            Family::RankK => {
                self.fixed_m.ok_or_else(|| missing("m"))?;
            }
            Family::FixedK => {
                self.fixed_k.ok_or_else(|| missing("k"))?;
            }
            Family::RankB => {
                self.fixed_k.ok_or_else(|| missing("k"))?;
                if self.panel.unwrap_or(0) == 0 {
                    return Err(Error::Domain("rank-b schedule needs a positive panel width".into()));
                }
            }
        }
        if [self.fixed_m, self.fixed_n, self.fixed_k].contains(&Some(0)) {
            return Err(Error::Domain("fixed dimensions must be positive".into()));
        }
        Ok(())
    }

    /// `(m, n, k)` of every point in the sweep.
    pub fn shapes(&self) -> Vec<(usize, usize, usize)> {
        (self.start..=self.stop)
            .step_by(self.step)
            .map(|x| match self.family {
                Family::Square => (x, x, x),
                Family::RankK => {
                    let m = self.fixed_m.unwrap_or(x);
                    (m, self.fixed_n.unwrap_or(m), x)
                }
                Family::FixedK | Family::RankB => (x, x, self.fixed_k.unwrap_or(x)),
            })
            .collect()
    }

    /// `(offset, width)` of each rank-b update along `k`; one update covering
    /// all of `k` for the other families.
    pub fn k_panels(&self, k: usize) -> Vec<(usize, usize)> {
        match (self.family, self.panel) {
            (Family::RankB, Some(b)) => (0..k).step_by(b).map(|p| (p, b.min(k - p))).collect(),
            _ => vec![(0, k)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub variant: VariantSpec,
    pub threads: usize,
    pub reps: usize,
    pub best_time_s: Option<f64>,
    pub egf_measured: Option<f64>,
    pub egf_modeled: f64,
    pub rel_err: Option<f64>,
    pub flops_counted: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub blocking: BlockingParams,
    pub model: ModelParams,
    pub reps: usize,
    pub threads: usize,
    pub verify: bool,
    pub alpha: f64,
    pub seed: u64,
    /// Largest dimension verified against the triple loop; bigger problems
    /// are checked against the blocked dgemm instead.
    pub oracle_limit: usize,
    pub tolerance: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            blocking: BlockingParams::default(),
            model: ModelParams::default(),
            reps: 3,
            threads: 1,
            verify: false,
            alpha: 1.0,
            seed: 0x5eed,
            oracle_limit: 1200,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{} {}x{}x{}: relative error {:e} exceeds tolerance", .record.variant, .record.m, .record.n, .record.k, .record.rel_err.unwrap_or(f64::NAN))]
    Verification { record: Box<RunRecord>, completed: Vec<RunRecord> },
}

/// Modeled time of the sweep point, summed over its rank-b updates.
fn modeled_egf(spec: &SweepSpec, (m, n, k): (usize, usize, usize), variant: VariantSpec, blocking: &BlockingParams, model: &ModelParams) -> Result<f64, Error> {
    let mut total = 0.0;
    for (_, width) in spec.k_panels(k) {
        total += predict(m, n, width, variant, blocking, model)?.total();
    }
    effective_gflops(m, n, k, total)
}

/// Model predictions only; measured fields stay empty.
pub fn model_only(spec: &SweepSpec, variants: &[VariantSpec], blocking: &BlockingParams, model: &ModelParams) -> Result<Vec<RunRecord>, Error> {
    spec.validate()?;
    let mut out = Vec::new();
    for shape in spec.shapes() {
        for &variant in variants {
            out.push(RunRecord {
                m: shape.0,
                n: shape.1,
                k: shape.2,
                variant,
                threads: model.cores,
                reps: 0,
                best_time_s: None,
                egf_measured: None,
                egf_modeled: modeled_egf(spec, shape, variant, blocking, model)?,
                rel_err: None,
                flops_counted: None,
            });
        }
    }
    Ok(out)
}

/// Applies the sweep point's schedule: one product, or a sequence of rank-b
/// updates over column panels of A and row panels of B.
fn run_schedule(gemm: &mut Gemm, variant: VariantSpec, panels: &[(usize, usize)], alpha: f64, a: MatRef<'_>, b: MatRef<'_>, c: &mut MatMut<'_>) -> Result<(), Error> {
    let (m, n) = (a.rows(), b.cols());
    for &(p0, width) in panels {
        let shape = ProblemShape::new(m, n, width, alpha)?;
        gemm.multiply(variant, shape, a.sub(0, p0, m, width), b.sub(p0, 0, width, n), c)?;
    }
    Ok(())
}

/// Times and (optionally) verifies every variant at every sweep point.
pub fn run_sweep(spec: &SweepSpec, variants: &[VariantSpec], opts: &BenchOptions) -> Result<Vec<RunRecord>, BenchError> {
    spec.validate()?;
    let mut gemm = Gemm::new(ExecConfig { blocking: opts.blocking, threads: opts.threads })?;
    let mut records = Vec::new();
    for (m, n, k) in spec.shapes() {
        let panels = spec.k_panels(k);
        let mut rng = StdRng::seed_from_u64(opts.seed ^ ((m as u64) << 40) ^ ((n as u64) << 20) ^ k as u64);
        let a = Matrix::random(m, k, &mut rng);
        let b = Matrix::random(k, n, &mut rng);
        let c0 = Matrix::random(m, n, &mut rng);
        let shape = ProblemShape::new(m, n, k, opts.alpha)?;

        let expected = if opts.verify {
            let mut want = c0.clone();
            if m.max(n).max(k) <= opts.oracle_limit {
                reference_gemm(shape, a.as_ref(), b.as_ref(), &mut want.as_mut())?;
            } else {
                gemm.multiply(VariantSpec::DGEMM, shape, a.as_ref(), b.as_ref(), &mut want.as_mut())?;
            }
            Some(want)
        } else {
            None
        };

        for &variant in variants {
            let max_width = panels.iter().map(|p| p.1).max().unwrap_or(k);
            gemm.reserve(variant, m, n, max_width)?;

            let mut c = c0.clone();
            gemm.reset_stats();
            run_schedule(&mut gemm, variant, &panels, opts.alpha, a.as_ref(), b.as_ref(), &mut c.as_mut())?;
            let flops = gemm.stats().total_flops();
            let rel_err = match &expected {
                Some(want) => Some(rel_frobenius_error(c.as_ref(), want.as_ref())?),
                None => None,
            };

            // The first run doubles as warm-up; `c` keeps accumulating.
            let mut best = f64::INFINITY;
            for _ in 0..opts.reps.max(1) {
                gemm.reset_stats();
                let start = Instant::now();
                run_schedule(&mut gemm, variant, &panels, opts.alpha, a.as_ref(), b.as_ref(), &mut c.as_mut())?;
                let elapsed = start.elapsed().as_secs_f64();
                debug_assert_eq!(gemm.stats().alloc_nanos, 0, "allocation inside timed region");
                best = best.min(elapsed.max(f64::MIN_POSITIVE));
            }

            let record = RunRecord {
                m,
                n,
                k,
                variant,
                threads: opts.threads,
                reps: opts.reps.max(1),
                best_time_s: Some(best),
                egf_measured: Some(effective_gflops(m, n, k, best)?),
                egf_modeled: modeled_egf(spec, (m, n, k), variant, &opts.blocking, &opts.model)?,
                rel_err,
                flops_counted: Some(flops),
            };
            if rel_err.is_some_and(|e| !(e <= opts.tolerance)) {
                return Err(BenchError::Verification { record: Box::new(record), completed: records });
            }
            records.push(record);
        }
    }
    Ok(records)
}

pub const CSV_HEADER: &str = "m,n,k,variant,level,threads,reps,time_s,egf_measured,egf_modeled,rel_err";

fn opt<T>(v: Option<T>, f: impl FnOnce(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

/// Writes the header and one row per record. Times carry 17 significant digits.
pub fn emit_csv<W: Write>(records: &[RunRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.m,
            r.n,
            r.k,
            r.variant.variant_label(),
            r.variant.level,
            r.threads,
            r.reps,
            opt(r.best_time_s, |t| format!("{t:.16e}")),
            opt(r.egf_measured, |g| g.to_string()),
            r.egf_modeled,
            opt(r.rel_err, |e| e.to_string()),
        )?;
    }
    Ok(())
}
