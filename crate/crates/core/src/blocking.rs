//! Cache blocking: packing engine and the five-loop driver.
//!
//! Packing reads a block of one or more operand quadrants and writes their
//! signed sum into a contiguous micro-panel buffer, so `X + Y` never exists
//! as a matrix in memory. Fringes are zero-padded inside the packed buffers
//! only.
//!
//! Loop order of [`Driver::run`], outermost first:
//!
//! 1. `jc` over `n` in steps of `n_C`
//! 2. `pc` over `k` in steps of `k_C` (pack B once per `(jc, pc)`)
//! 3. `ic` over `m` in steps of `m_C` (pack A; this loop is parallel)
//! 4. `jr` over the block in steps of `n_R`
//! 5. `ir` over the block in steps of `m_R`, calling the micro-kernel

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{self, Dest, MAX_MR, MAX_NR};
use crate::matrix::{MatMut, MatRef, MatrixView, ProblemShape};
use crate::stats::ExecStats;

/// Cache and register block sizes, in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockingParams {
    pub mc: usize,
    pub nc: usize,
    pub kc: usize,
    pub mr: usize,
    pub nr: usize,
}

impl Default for BlockingParams {
    fn default() -> Self {
        Self { mc: 96, nc: 4096, kc: 256, mr: 8, nr: 4 }
    }
}

impl BlockingParams {
    pub fn new(mc: usize, nc: usize, kc: usize, mr: usize, nr: usize) -> Result<Self> {
        let p = Self { mc, nc, kc, mr, nr };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { mc, nc, kc, mr, nr } = *self;
        if [mc, nc, kc, mr, nr].contains(&0) {
            return Err(Error::Blocking(format!("all sizes must be positive: {self:?}")));
        }
        if mc % mr != 0 || nc % nr != 0 {
            return Err(Error::Blocking(format!("m_C must be a multiple of m_R and n_C of n_R: {self:?}")));
        }
        if mr > MAX_MR || nr > MAX_NR {
            return Err(Error::Blocking(format!("register tile {mr}x{nr} exceeds {MAX_MR}x{MAX_NR}")));
        }
        Ok(())
    }
}

/// Signed sum of equally sized operand quadrants, `sum_t coeff_t * X_t`.
///
/// `rows x cols` is the logical quadrant extent; individual views may be
/// clipped smaller (or empty) and read as zero outside their extent.
#[derive(Debug, Clone, PartialEq)]
pub struct OperandSum {
    pub terms: Vec<(MatrixView, f64)>,
    pub rows: usize,
    pub cols: usize,
}

impl OperandSum {
    pub fn new(terms: Vec<(MatrixView, f64)>, rows: usize, cols: usize) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Table("operand sum needs at least one term".into()));
        }
        for (v, c) in &terms {
            if *c != 1.0 && *c != -1.0 {
                return Err(Error::Table(format!("term coefficient {c} is not +-1")));
            }
            if v.rows > rows || v.cols > cols {
                return Err(Error::Shape(format!(
                    "term {}x{} exceeds logical extent {rows}x{cols}",
                    v.rows, v.cols
                )));
            }
        }
        Ok(Self { terms, rows, cols })
    }

    pub fn single(view: MatrixView) -> Self {
        Self { terms: vec![(view, 1.0)], rows: view.rows, cols: view.cols }
    }

    /// True when every term is empty, i.e. the sum is identically zero.
    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(v, _)| v.is_empty())
    }

    pub fn check_fits(&self, len: usize) -> Result<()> {
        self.terms.iter().try_for_each(|(v, _)| v.check_fits(len))
    }
}

/// Packed `m_c x k_c` block of A: `ceil(m_c / m_R)` micro-panels, each holding
/// `k_c` columns of `m_R` contiguous elements.
#[derive(Debug, Clone)]
pub struct PackedPanelA {
    buf: Vec<f64>,
    mr: usize,
    mc: usize,
    kc: usize,
}

/// Packed `k_c x n_c` block of B: `ceil(n_c / n_R)` micro-panels, each holding
/// `k_c` rows of `n_R` contiguous elements.
#[derive(Debug, Clone)]
pub struct PackedPanelB {
    buf: Vec<f64>,
    nr: usize,
    kc: usize,
    nc: usize,
}

impl PackedPanelA {
    pub fn new(params: &BlockingParams) -> Result<Self> {
        Ok(Self { buf: crate::error::try_zeroed(params.mc * params.kc)?, mr: params.mr, mc: 0, kc: 0 })
    }

    pub fn mr(&self) -> usize {
        self.mr
    }

    pub fn mc(&self) -> usize {
        self.mc
    }

    pub fn kc(&self) -> usize {
        self.kc
    }

    pub fn panels(&self) -> usize {
        self.mc.div_ceil(self.mr)
    }

    pub fn micro_panel(&self, ir: usize) -> &[f64] {
        let len = self.mr * self.kc;
        &self.buf[ir * len..(ir + 1) * len]
    }

    /// Packed element for block row `i`, column `p` (padding included).
    pub fn get(&self, i: usize, p: usize) -> f64 {
        let (panel, r) = (i / self.mr, i % self.mr);
        self.micro_panel(panel)[p * self.mr + r]
    }

    /// Packs rows `row0..row0+mc`, columns `k0..k0+kc` of `sum` (a logical
    /// A quadrant). Terms are added left to right.
    pub fn pack_sum(
        &mut self,
        data: &[f64],
        sum: &OperandSum,
        row0: usize,
        k0: usize,
        mc: usize,
        kc: usize,
        stats: Option<&ExecStats>,
    ) {
        let mr = self.mr;
        let padded = mc.div_ceil(mr) * mr * kc;
        assert!(padded <= self.buf.len(), "A block {mc}x{kc} exceeds packing buffer");
        self.mc = mc;
        self.kc = kc;
        let buf = &mut self.buf[..padded];
        buf.iter_mut().for_each(|x| *x = 0.0);
        let (mut reads, mut adds) = (0u64, 0u64);
        for (t, (view, coeff)) in sum.terms.iter().enumerate() {
            let rows = view.rows.saturating_sub(row0).min(mc);
            let cols = view.cols.saturating_sub(k0).min(kc);
            if rows == 0 || cols == 0 {
                continue;
            }
            let coeff = *coeff;
            for (panel_idx, panel) in buf.chunks_exact_mut(mr * kc).enumerate() {
                let i0 = panel_idx * mr;
                if i0 >= rows {
                    break;
                }
                let prow = (rows - i0).min(mr);
                for p in 0..cols {
                    let dst = &mut panel[p * mr..p * mr + prow];
                    let src0 = view.offset(row0 + i0, k0 + p);
                    for (r, d) in dst.iter_mut().enumerate() {
                        let x = coeff * data[src0 + r * view.row_stride];
                        if t == 0 {
                            *d = x;
                        } else {
                            *d += x;
                        }
                    }
                }
            }
            let n = (rows * cols) as u64;
            reads += n;
            if t > 0 {
                adds += 2 * n;
            }
        }
        if let Some(s) = stats {
            s.add_a_pack_calls(1);
            s.add_a_pack_reads(reads);
            s.add_a_add_flops(adds);
        }
    }
}

impl PackedPanelB {
    pub fn new(params: &BlockingParams) -> Result<Self> {
        Ok(Self { buf: crate::error::try_zeroed(params.kc * params.nc)?, nr: params.nr, kc: 0, nc: 0 })
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn kc(&self) -> usize {
        self.kc
    }

    pub fn panels(&self) -> usize {
        self.nc.div_ceil(self.nr)
    }

    pub fn micro_panel(&self, jr: usize) -> &[f64] {
        let len = self.nr * self.kc;
        &self.buf[jr * len..(jr + 1) * len]
    }

    pub fn get(&self, p: usize, j: usize) -> f64 {
        let (panel, c) = (j / self.nr, j % self.nr);
        self.micro_panel(panel)[p * self.nr + c]
    }

    /// Packs rows `k0..k0+kc`, columns `col0..col0+nc` of `sum` (a logical
    /// B quadrant). Terms are added left to right.
    pub fn pack_sum(
        &mut self,
        data: &[f64],
        sum: &OperandSum,
        k0: usize,
        col0: usize,
        kc: usize,
        nc: usize,
        stats: Option<&ExecStats>,
    ) {
        let nr = self.nr;
        let padded = nc.div_ceil(nr) * nr * kc;
        assert!(padded <= self.buf.len(), "B block {kc}x{nc} exceeds packing buffer");
        self.kc = kc;
        self.nc = nc;
        let buf = &mut self.buf[..padded];
        buf.iter_mut().for_each(|x| *x = 0.0);
        let (mut reads, mut adds) = (0u64, 0u64);
        for (t, (view, coeff)) in sum.terms.iter().enumerate() {
            let rows = view.rows.saturating_sub(k0).min(kc);
            let cols = view.cols.saturating_sub(col0).min(nc);
            if rows == 0 || cols == 0 {
                continue;
            }
            let coeff = *coeff;
            for (panel_idx, panel) in buf.chunks_exact_mut(nr * kc).enumerate() {
                let j0 = panel_idx * nr;
                if j0 >= cols {
                    break;
                }
                let pcol = (cols - j0).min(nr);
                for p in 0..rows {
                    let dst = &mut panel[p * nr..p * nr + pcol];
                    let src0 = view.offset(k0 + p, col0 + j0);
                    for (c, d) in dst.iter_mut().enumerate() {
                        let x = coeff * data[src0 + c * view.col_stride];
                        if t == 0 {
                            *d = x;
                        } else {
                            *d += x;
                        }
                    }
                }
            }
            let n = (rows * cols) as u64;
            reads += n;
            if t > 0 {
                adds += 2 * n;
            }
        }
        if let Some(s) = stats {
            s.add_b_pack_calls(1);
            s.add_b_pack_reads(reads);
            s.add_b_add_flops(adds);
        }
    }
}

/// Packs the `m_C x k_C` block of `sum` at `(block_row, block_k)` into a new buffer.
pub fn pack_a_sum(data: &[f64], sum: &OperandSum, block_row: usize, block_k: usize, params: &BlockingParams) -> PackedPanelA {
    let mut p = PackedPanelA::new(params).expect("packing buffer allocation");
    let mc = params.mc.min(sum.rows.saturating_sub(block_row));
    let kc = params.kc.min(sum.cols.saturating_sub(block_k));
    p.pack_sum(data, sum, block_row, block_k, mc, kc, None);
    p
}

/// Packs the `k_C x n_C` block of `sum` at `(block_k, block_col)` into a new buffer.
pub fn pack_b_sum(data: &[f64], sum: &OperandSum, block_k: usize, block_col: usize, params: &BlockingParams) -> PackedPanelB {
    let mut p = PackedPanelB::new(params).expect("packing buffer allocation");
    let kc = params.kc.min(sum.rows.saturating_sub(block_k));
    let nc = params.nc.min(sum.cols.saturating_sub(block_col));
    p.pack_sum(data, sum, block_k, block_col, kc, nc, None);
    p
}

/// One product `C_r += alpha * gamma_r * (sum A)(sum B)` over logical
/// quadrants of size `m x k` and `k x n`.
#[derive(Debug, Clone, Copy)]
pub struct BlockJob<'a> {
    pub a: &'a OperandSum,
    pub b: &'a OperandSum,
    pub dests: &'a [Dest],
    pub alpha: f64,
    /// Count destination updates as Strassen C-additions in the flop tally.
    pub fused_c_updates: bool,
}

#[derive(Clone, Copy)]
struct SyncPtr(*mut f64);
// SAFETY: workers write disjoint row ranges of C (distinct `ic` blocks).
unsafe impl Send for SyncPtr {}
unsafe impl Sync for SyncPtr {}

/// Five-loop driver owning the packing buffers: one shared B buffer and one
/// A buffer per worker.
pub struct Driver {
    params: BlockingParams,
    packed_b: PackedPanelB,
    packed_a: Vec<PackedPanelA>,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Driver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Driver").field("params", &self.params).field("workers", &self.workers()).finish()
    }
}

impl Driver {
    pub fn new(params: BlockingParams, threads: usize) -> Result<Self> {
        params.validate()?;
        let threads = threads.max(1);
        let pool = if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Threads(e.to_string()))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        let packed_a = (0..threads).map(|_| PackedPanelA::new(&params)).collect::<Result<Vec<_>>>()?;
        Ok(Self { params, packed_b: PackedPanelB::new(&params)?, packed_a, pool })
    }

    pub fn params(&self) -> &BlockingParams {
        &self.params
    }

    pub fn workers(&self) -> usize {
        self.packed_a.len()
    }

    /// Runs one job. `m, n, k` are the logical quadrant extents; `a_data`,
    /// `b_data` and `c` are the buffers the job's views address.
    pub(crate) fn run(
        &mut self,
        a_data: &[f64],
        b_data: &[f64],
        c: &mut [f64],
        (m, n, k): (usize, usize, usize),
        job: &BlockJob<'_>,
        stats: Option<&ExecStats>,
    ) -> Result<()> {
        job.a.check_fits(a_data.len())?;
        job.b.check_fits(b_data.len())?;
        for d in job.dests {
            d.view.check_fits(c.len())?;
        }
        if job.a.is_zero() || job.b.is_zero() || job.dests.iter().all(|d| d.view.is_empty()) {
            return Ok(());
        }
        let BlockingParams { mc, nc, kc, .. } = self.params;
        let c_ptr = SyncPtr(c.as_mut_ptr());
        let ic_blocks = m.div_ceil(mc);
        let workers = self.packed_a.len();

        for jc in (0..n).step_by(nc) {
            let ncb = nc.min(n - jc);
            for pc in (0..k).step_by(kc) {
                let kcb = kc.min(k - pc);
                self.packed_b.pack_sum(b_data, job.b, pc, jc, kcb, ncb, stats);
                let packed_b = &self.packed_b;

                let work = |w: usize, packed_a: &mut PackedPanelA| {
                    for ib in (w..ic_blocks).step_by(workers) {
                        let ic = ib * mc;
                        let mcb = mc.min(m - ic);
                        packed_a.pack_sum(a_data, job.a, ic, pc, mcb, kcb, stats);
                        // Borrow the wrapper whole so the closure stays `Sync`.
                        let c_base = &c_ptr;
                        // SAFETY: dest views were checked against `c`; block
                        // `ib` is owned by exactly one worker.
                        let tally =
                            unsafe { kernel::macro_kernel_raw(packed_a, packed_b, job.alpha, c_base.0, job.dests, ic, jc) };
                        if let Some(s) = stats {
                            s.add_microkernel_calls(tally.calls);
                            s.add_c_kernel_transfers(2 * tally.dest_elems);
                            s.add_mult_flops(2 * (mcb * ncb * kcb) as u64);
                            if job.fused_c_updates {
                                s.add_c_update_flops(2 * tally.dest_elems);
                            }
                        }
                    }
                };

                match &self.pool {
                    Some(pool) if ic_blocks > 1 => pool.install(|| {
                        self.packed_a.par_iter_mut().enumerate().for_each(|(w, pa)| work(w, pa));
                    }),
                    _ => {
                        // Same block-to-worker assignment as the parallel path.
                        for (w, pa) in self.packed_a.iter_mut().enumerate() {
                            work(w, pa);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Plain blocked `C := alpha*A*B + C` on a caller-provided driver.
pub fn gemm_with(
    driver: &mut Driver,
    shape: ProblemShape,
    a: MatRef<'_>,
    b: MatRef<'_>,
    c: &mut MatMut<'_>,
    stats: Option<&ExecStats>,
) -> Result<()> {
    shape.check(a.view(), b.view(), c.view())?;
    let a_sum = OperandSum::single(a.view());
    let b_sum = OperandSum::single(b.view());
    let (c_data, c_view) = c.raw_parts();
    let dests = [Dest::new(c_view, 1.0)];
    let job = BlockJob { a: &a_sum, b: &b_sum, dests: &dests, alpha: shape.alpha, fused_c_updates: false };
    driver.run(a.data(), b.data(), c_data, (shape.m, shape.n, shape.k), &job, stats)
}

/// Conventional blocked dgemm, single-threaded.
pub fn gemm_conventional(
    shape: ProblemShape,
    a: MatRef<'_>,
    b: MatRef<'_>,
    c: &mut MatMut<'_>,
    params: &BlockingParams,
) -> Result<()> {
    let mut driver = Driver::new(*params, 1)?;
    gemm_with(&mut driver, shape, a, b, c, None)
}
