//! Analytical run-time model, `T = T_a + T_m`.
//!
//! `T_a` counts floating-point work (an addition of two matrices costs 2 flops
//! per element, like the multiply-add it replaces). `T_m` counts `f64`
//! elements moved between slow memory and cache: reads of A and B while
//! packing, loads/stores of C in the micro-kernel, and passes over
//! temporaries. Writes into packing buffers are not charged.
//!
//! Every term is evaluated at quadrant scale `ceil(dim / 2^L)` and scaled by
//! a per-variant coefficient derived from the operand table.

use std::path::Path;

use crate::blocking::BlockingParams;
use crate::error::{Error, Result};
use crate::matrix::quadrant_dim;
use crate::strassen::{count_table_ops, Fusion, OperandTable, VariantSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Seconds per flop on one core.
    pub tau_a: f64,
    /// Seconds per `f64` moved from slow memory.
    pub tau_b: f64,
    /// Prefetch efficiency applied to micro-kernel C traffic, in `[0.5, 1]`.
    pub lambda: f64,
    /// Multiplier on `tau_b`; the number of memory channels for single-core runs.
    pub channel_factor: f64,
    /// Cores sharing the arithmetic work; divides `tau_a`.
    pub cores: usize,
}

impl ModelParams {
    pub const DEFAULT_LAMBDA: f64 = 0.7;

    pub fn new(tau_a: f64, tau_b: f64, lambda: f64, channel_factor: f64, cores: usize) -> Result<Self> {
        let p = Self { tau_a, tau_b, lambda, channel_factor, cores };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_a > 0.0 && self.tau_b > 0.0) {
            return Err(Error::Domain(format!("tau_a and tau_b must be positive: {self:?}")));
        }
        if !(0.5..=1.0).contains(&self.lambda) {
            return Err(Error::Domain(format!("lambda {} outside [0.5, 1]", self.lambda)));
        }
        if !(self.channel_factor > 0.0) || self.cores == 0 {
            return Err(Error::Domain(format!("channel_factor and cores must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `tau_a = 1 / peak`, `tau_b = 8 bytes / bandwidth`.
    pub fn from_peak_and_bandwidth(peak_gflops: f64, bandwidth_gbs: f64) -> Self {
        Self {
            tau_a: 1.0 / (peak_gflops * 1e9),
            tau_b: 8.0 / bandwidth_gbs * 1e-9,
            lambda: Self::DEFAULT_LAMBDA,
            channel_factor: 1.0,
            cores: 1,
        }
    }

    /// Xeon E5-2680 v2, one core at 3.54 GHz: 28.32 GFLOPS peak, 59.7 GB/s
    /// over four channels.
    pub fn ivy_bridge_single_core() -> Self {
        Self { channel_factor: 4.0, ..Self::from_peak_and_bandwidth(28.32, 59.7) }
    }

    /// Same socket with `cores` cores active at 3.10 GHz (24.8 GFLOPS/core).
    pub fn ivy_bridge_multi_core(cores: usize) -> Self {
        Self { cores, ..Self::from_peak_and_bandwidth(24.8, 59.7) }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ivybridge" | "ivybridge-1" => Ok(Self::ivy_bridge_single_core()),
            "ivybridge-10" => Ok(Self::ivy_bridge_multi_core(10)),
            _ => Err(Error::Domain(format!("unknown model preset {name:?}"))),
        }
    }

    pub fn effective_tau_a(&self) -> f64 {
        self.tau_a / self.cores as f64
    }

    pub fn effective_tau_b(&self) -> f64 {
        self.tau_b * self.channel_factor
    }

    /// Parses `key = value` lines (`#` starts a comment). Keys: `preset`,
    /// `tau_a`, `tau_b`, `peak_gflops`, `bandwidth_gbs`, `lambda`,
    /// `channel_factor`, `cores`. Later keys override earlier ones;
    /// unspecified values come from the single-core Ivy Bridge preset.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut p = Self::ivy_bridge_single_core();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Domain(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || -> Result<f64> {
                value.parse::<f64>().map_err(|_| Error::Domain(format!("line {}: bad number {value:?}", lineno + 1)))
            };
            match key {
                "preset" => p = Self::preset(value)?,
                "tau_a" => p.tau_a = num()?,
                "tau_b" => p.tau_b = num()?,
                "peak_gflops" => p.tau_a = 1.0 / (num()? * 1e9),
                "bandwidth_gbs" => p.tau_b = 8.0 / num()? * 1e-9,
                "lambda" => p.lambda = num()?,
                "channel_factor" => p.channel_factor = num()?,
                "cores" => {
                    p.cores = value
                        .parse()
                        .map_err(|_| Error::Domain(format!("line {}: bad core count {value:?}", lineno + 1)))?
                }
                other => return Err(Error::Domain(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Domain(format!("{}: {e}", path.display())))?;
        Self::parse_config(&text)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::ivy_bridge_single_core()
    }
}

/// Multipliers `N_m` of the six memory terms for one variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoefficientSet {
    pub a_mul: u64,
    pub b_mul: u64,
    pub c_mul: u64,
    pub a_add: u64,
    pub b_add: u64,
    pub c_add: u64,
}

/// Passes needed to materialize a `t`-term sum pairwise: a copy is 2, each
/// addition 3.
fn materialize_passes(terms: usize) -> u64 {
    if terms == 1 {
        2
    } else {
        3 * (terms as u64 - 1)
    }
}

impl CoefficientSet {
    pub fn for_variant(spec: VariantSpec) -> Result<Self> {
        if spec.is_dgemm() {
            return Ok(Self { a_mul: 1, b_mul: 1, c_mul: 1, a_add: 0, b_add: 0, c_add: 0 });
        }
        let table = OperandTable::for_level(spec.level)?;
        let e = &table.entries;
        let terms = |f: fn(&crate::strassen::TableEntry) -> usize| e.iter().map(f).sum::<usize>() as u64;
        let (sa, sb, sc) = (terms(|x| x.a.len()), terms(|x| x.b.len()), terms(|x| x.c.len()));
        let mults = e.len() as u64;
        Ok(match spec.fusion {
            Fusion::Abc => Self { a_mul: sa, b_mul: sb, c_mul: sc, a_add: 0, b_add: 0, c_add: 0 },
            Fusion::Ab => Self { a_mul: sa, b_mul: sb, c_mul: mults, a_add: 0, b_add: 0, c_add: 3 * sc },
            Fusion::Naive => Self {
                a_mul: mults,
                b_mul: mults,
                c_mul: mults,
                a_add: e.iter().map(|x| materialize_passes(x.a.len())).sum(),
                b_add: e.iter().map(|x| materialize_passes(x.b.len())).sum(),
                c_add: 3 * sc,
            },
        })
    }
}

/// Per-term model times in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TimeBreakdown {
    pub ta_mul: f64,
    pub ta_a_add: f64,
    pub ta_b_add: f64,
    pub ta_c_add: f64,
    pub tm_a_mul: f64,
    pub tm_b_mul: f64,
    pub tm_c_mul: f64,
    pub tm_a_add: f64,
    pub tm_b_add: f64,
    pub tm_c_add: f64,
}

impl TimeBreakdown {
    pub fn arithmetic(&self) -> f64 {
        self.ta_mul + self.ta_a_add + self.ta_b_add + self.ta_c_add
    }

    pub fn memory(&self) -> f64 {
        self.tm_a_mul + self.tm_b_mul + self.tm_c_mul + self.tm_a_add + self.tm_b_add + self.tm_c_add
    }

    pub fn total(&self) -> f64 {
        self.arithmetic() + self.memory()
    }

    fn merge(arith: Self, mem: Self) -> Self {
        Self {
            tm_a_mul: mem.tm_a_mul,
            tm_b_mul: mem.tm_b_mul,
            tm_c_mul: mem.tm_c_mul,
            tm_a_add: mem.tm_a_add,
            tm_b_add: mem.tm_b_add,
            tm_c_add: mem.tm_c_add,
            ..arith
        }
    }
}

/// Flop counts behind `T_a`, as exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopCounts {
    pub mul: u128,
    pub a_add: u128,
    pub b_add: u128,
    pub c_add: u128,
}

impl FlopCounts {
    pub fn total(&self) -> u128 {
        self.mul + self.a_add + self.b_add + self.c_add
    }
}

fn quadrant_dims(m: usize, n: usize, k: usize, level: u32) -> (u128, u128, u128) {
    let q = |d| quadrant_dim(d, level) as u128;
    (q(m), q(n), q(k))
}

pub fn flop_counts(m: usize, n: usize, k: usize, spec: VariantSpec) -> Result<FlopCounts> {
    let (mq, nq, kq) = quadrant_dims(m, n, k, spec.level);
    if spec.is_dgemm() {
        return Ok(FlopCounts { mul: 2 * mq * nq * kq, a_add: 0, b_add: 0, c_add: 0 });
    }
    let ops = count_table_ops(&OperandTable::for_level(spec.level)?);
    Ok(FlopCounts {
        mul: ops.mults as u128 * 2 * mq * nq * kq,
        a_add: ops.a_adds as u128 * 2 * mq * kq,
        b_add: ops.b_adds as u128 * 2 * kq * nq,
        c_add: ops.c_updates as u128 * 2 * mq * nq,
    })
}

/// Element counts behind `T_m` (before `lambda`), as exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferCounts {
    pub a_mul: u128,
    pub b_mul: u128,
    pub c_mul: u128,
    pub a_add: u128,
    pub b_add: u128,
    pub c_add: u128,
}

pub fn transfer_counts(m: usize, n: usize, k: usize, spec: VariantSpec, blocking: &BlockingParams) -> Result<TransferCounts> {
    let (mq, nq, kq) = quadrant_dims(m, n, k, spec.level);
    let n_blocks = nq.div_ceil(blocking.nc as u128);
    let k_blocks = kq.div_ceil(blocking.kc as u128);
    let co = CoefficientSet::for_variant(spec)?;
    Ok(TransferCounts {
        a_mul: co.a_mul as u128 * mq * kq * n_blocks,
        b_mul: co.b_mul as u128 * nq * kq,
        c_mul: co.c_mul as u128 * 2 * mq * nq * k_blocks,
        a_add: co.a_add as u128 * mq * kq,
        b_add: co.b_add as u128 * nq * kq,
        c_add: co.c_add as u128 * mq * nq,
    })
}

/// `T_a` terms of the model.
pub fn arithmetic_time(m: usize, n: usize, k: usize, spec: VariantSpec, params: &ModelParams) -> Result<TimeBreakdown> {
    let f = flop_counts(m, n, k, spec)?;
    let tau = params.effective_tau_a();
    Ok(TimeBreakdown {
        ta_mul: f.mul as f64 * tau,
        ta_a_add: f.a_add as f64 * tau,
        ta_b_add: f.b_add as f64 * tau,
        ta_c_add: f.c_add as f64 * tau,
        ..Default::default()
    })
}

/// `T_m` terms of the model.
pub fn memory_time(
    m: usize,
    n: usize,
    k: usize,
    spec: VariantSpec,
    blocking: &BlockingParams,
    params: &ModelParams,
) -> Result<TimeBreakdown> {
    let t = transfer_counts(m, n, k, spec, blocking)?;
    let tau = params.effective_tau_b();
    Ok(TimeBreakdown {
        tm_a_mul: t.a_mul as f64 * tau,
        tm_b_mul: t.b_mul as f64 * tau,
        tm_c_mul: params.lambda * t.c_mul as f64 * tau,
        tm_a_add: t.a_add as f64 * tau,
        tm_b_add: t.b_add as f64 * tau,
        tm_c_add: t.c_add as f64 * tau,
        ..Default::default()
    })
}

/// `2mnk / seconds * 1e-9`, whatever the algorithm.
pub fn effective_gflops(m: usize, n: usize, k: usize, seconds: f64) -> Result<f64> {
    if !(seconds > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {seconds}")));
    }
    Ok(2.0 * m as f64 * n as f64 * k as f64 / seconds * 1e-9)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub breakdown: TimeBreakdown,
    pub egf: f64,
}

impl Prediction {
    pub fn total(&self) -> f64 {
        self.breakdown.total()
    }
}

pub fn predict(
    m: usize,
    n: usize,
    k: usize,
    spec: VariantSpec,
    blocking: &BlockingParams,
    params: &ModelParams,
) -> Result<Prediction> {
    params.validate()?;
    let breakdown = TimeBreakdown::merge(arithmetic_time(m, n, k, spec, params)?, memory_time(m, n, k, spec, blocking, params)?);
    Ok(Prediction { breakdown, egf: effective_gflops(m, n, k, breakdown.total())? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> VariantSpec {
        s.parse().unwrap()
    }

    fn unit() -> ModelParams {
        ModelParams { tau_a: 1.0, tau_b: 1.0, lambda: 1.0, channel_factor: 1.0, cores: 1 }
    }

    #[test]
    fn arithmetic_closed_forms() {
        let t = arithmetic_time(1000, 1000, 1000, v("dgemm"), &unit()).unwrap();
        assert_eq!(t.ta_mul, 2e9);
        assert_eq!(t.arithmetic(), 2e9);

        let t = arithmetic_time(1000, 1000, 1000, v("abc1"), &unit()).unwrap();
        assert_eq!(t.ta_mul, 1.75e9);
        assert_eq!((t.ta_a_add, t.ta_b_add, t.ta_c_add), (2.5e6, 2.5e6, 6e6));
        assert_eq!(t.arithmetic(), 1.75e9 + 2.5e6 + 2.5e6 + 6e6);

        let t = arithmetic_time(1600, 1600, 1600, v("naive2"), &unit()).unwrap();
        assert_eq!(t.ta_mul, 49.0 * 2.0 * 400f64.powi(3));
    }

    #[test]
    fn dgemm_memory_closed_form() {
        let b = BlockingParams::default();
        let (m, n, k) = (5000usize, 9000usize, 700usize);
        let t = memory_time(m, n, k, v("dgemm"), &b, &unit()).unwrap();
        let want = (m * k * n.div_ceil(b.nc) + n * k + 2 * m * n * k.div_ceil(b.kc)) as f64;
        assert_eq!(t.memory(), want);
    }

    #[test]
    fn one_level_abc_c_traffic() {
        let p = ModelParams { lambda: 0.7, ..unit() };
        let t = memory_time(16000, 16000, 512, v("abc1"), &BlockingParams::default(), &p).unwrap();
        assert_eq!(t.tm_c_mul, 0.7 * (12.0 * 2.0 * 8000.0 * 8000.0));
    }

    #[test]
    fn naive_adds_a_temporaries() {
        let t = memory_time(800, 600, 400, v("naive1"), &BlockingParams::default(), &unit()).unwrap();
        assert_eq!(t.tm_a_add, 19.0 * 400.0 * 200.0);
    }

    #[test]
    fn gflops_metric() {
        assert_eq!(effective_gflops(1000, 1000, 1000, 1.0).unwrap(), 2.0);
        assert!(effective_gflops(1, 1, 1, 0.0).is_err());
        assert!(effective_gflops(1, 1, 1, -1.0).is_err());
        let tau = 1.0 / 28.32e9;
        let (m, n, k) = (3000, 2000, 1000);
        let t = 2.0 * (m * n * k) as f64 * tau;
        assert!((effective_gflops(m, n, k, t).unwrap() - 28.32).abs() < 1e-9);
        let e = effective_gflops(m, n, k, 7.0 / 8.0 * t).unwrap();
        assert!((e - 28.32 * 8.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn config_parsing() {
        let p = ModelParams::parse_config("# comment\ntau_a = 1e-10\nlambda=0.5\ncores = 4\n").unwrap();
        assert_eq!((p.tau_a, p.lambda, p.cores), (1e-10, 0.5, 4));
        assert_eq!(p.channel_factor, 4.0);
        assert_eq!(p.effective_tau_a(), 2.5e-11);
        let p = ModelParams::parse_config("preset = ivybridge-10\nbandwidth_gbs = 80").unwrap();
        assert_eq!(p.cores, 10);
        assert!((p.tau_b - 1e-10).abs() < 1e-24);
        assert!(ModelParams::parse_config("lambda = 0.2").is_err());
        assert!(ModelParams::parse_config("speed = 3").is_err());
        assert!(ModelParams::parse_config("tau_a").is_err());
    }
}
