//! Strassen operand tables and the three execution strategies.
//!
//! A table lists, for each of the `7^L` products, which quadrants of A and B
//! are summed (with signs) to form the two factors and which quadrants of C
//! receive `+-alpha * M`. Level-1 is the classic Strassen schedule; deeper
//! levels are built by [`compose_tables`], never written out by hand.
//!
//! Execution strategies, by how much of the data movement is fused:
//!
//! * **ABC**: A and B sums are formed while packing, and the micro-kernel
//!   adds each tile to every C destination directly.
//! * **AB**: sums are formed while packing, but each product lands in a
//!   temporary `M` which is then streamed into the C quadrants.
//! * **Naive**: A and B sums are materialized in temporaries, multiplied by
//!   the conventional driver into `M`, then streamed into C.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::blocking::{BlockJob, BlockingParams, Driver, OperandSum};
use crate::error::{try_zeroed, Error, Result};
use crate::kernel::Dest;
use crate::matrix::{partition_quadrants, MatMut, MatRef, MatrixView, ProblemShape, QuadrantGrid};
use crate::stats::ExecStats;

/// One signed quadrant reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term {
    pub index: usize,
    pub coeff: i32,
}

const fn t(index: usize, coeff: i32) -> Term {
    Term { index, coeff }
}

/// `M = (sum a) (sum b)`; `C_r += gamma_r * alpha * M` for each `c` term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableEntry {
    pub a: Vec<Term>,
    pub b: Vec<Term>,
    pub c: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperandTable {
    pub level: u32,
    pub entries: Vec<TableEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpCounts {
    pub mults: usize,
    pub a_adds: usize,
    pub b_adds: usize,
    pub c_updates: usize,
}

impl OperandTable {
    /// Level-0 table: `C += A B` as a single product.
    pub fn identity() -> Self {
        let one = vec![t(0, 1)];
        Self { level: 0, entries: vec![TableEntry { a: one.clone(), b: one.clone(), c: one }] }
    }

    /// Table for `level` nested Strassen steps.
    pub fn for_level(level: u32) -> Result<Self> {
        let one = one_level_table();
        (0..level).try_fold(Self::identity(), |acc, _| compose_tables(&acc, &one))
    }

    pub fn validate(&self) -> Result<()> {
        let quadrants = 1usize << (2 * self.level);
        for (e, entry) in self.entries.iter().enumerate() {
            for (name, terms) in [("a", &entry.a), ("b", &entry.b), ("c", &entry.c)] {
                if terms.is_empty() {
                    return Err(Error::Table(format!("entry {e}: empty {name} list")));
                }
                for (i, term) in terms.iter().enumerate() {
                    if term.index >= quadrants || term.coeff.abs() != 1 {
                        return Err(Error::Table(format!("entry {e}: bad {name} term {term:?}")));
                    }
                    if terms[..i].iter().any(|o| o.index == term.index) {
                        return Err(Error::Table(format!("entry {e}: duplicate {name} index {}", term.index)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The seven products of one Strassen step; quadrant index is `2*row + col`.
pub fn one_level_table() -> OperandTable {
    let e = |a: &[Term], b: &[Term], c: &[Term]| TableEntry { a: a.to_vec(), b: b.to_vec(), c: c.to_vec() };
    OperandTable {
        level: 1,
        entries: vec![
            e(&[t(0, 1), t(3, 1)], &[t(0, 1), t(3, 1)], &[t(0, 1), t(3, 1)]),
            e(&[t(2, 1), t(3, 1)], &[t(0, 1)], &[t(2, 1), t(3, -1)]),
            e(&[t(0, 1)], &[t(1, 1), t(3, -1)], &[t(1, 1), t(3, 1)]),
            e(&[t(3, 1)], &[t(2, 1), t(0, -1)], &[t(0, 1), t(2, 1)]),
            e(&[t(0, 1), t(1, 1)], &[t(3, 1)], &[t(1, 1), t(0, -1)]),
            e(&[t(2, 1), t(0, -1)], &[t(0, 1), t(1, 1)], &[t(3, 1)]),
            e(&[t(1, 1), t(3, -1)], &[t(2, 1), t(3, 1)], &[t(0, 1)]),
        ],
    }
}

fn compose_terms(outer: &[Term], inner: &[Term], lo: u32, li: u32) -> Result<Vec<Term>> {
    let (so, si) = (1usize << lo, 1usize << li);
    let side = so * si;
    let mut out: Vec<Term> = Vec::with_capacity(outer.len() * inner.len());
    for o in outer {
        let (oi, oj) = (o.index / so, o.index % so);
        for i in inner {
            let (ii, ij) = (i.index / si, i.index % si);
            let index = (si * oi + ii) * side + (si * oj + ij);
            let coeff = o.coeff * i.coeff;
            match out.iter_mut().find(|x| x.index == index) {
                Some(x) => x.coeff += coeff,
                None => out.push(Term { index, coeff }),
            }
        }
    }
    out.retain(|x| x.coeff != 0);
    if let Some(bad) = out.iter().find(|x| x.coeff.abs() > 1) {
        return Err(Error::Table(format!("merged coefficient {} at quadrant {}", bad.coeff, bad.index)));
    }
    Ok(out)
}

/// Nests `inner` inside every quadrant product of `outer`.
///
/// Quadrant `(I, J)` of the outer grid and `(i, j)` of the inner grid map to
/// row `2^Li * I + i`, column `2^Li * J + j` of the combined
/// `2^(Lo+Li)`-sided grid, flattened row-major.
pub fn compose_tables(outer: &OperandTable, inner: &OperandTable) -> Result<OperandTable> {
    let (lo, li) = (outer.level, inner.level);
    let mut entries = Vec::with_capacity(outer.entries.len() * inner.entries.len());
    for oe in &outer.entries {
        for ie in &inner.entries {
            entries.push(TableEntry {
                a: compose_terms(&oe.a, &ie.a, lo, li)?,
                b: compose_terms(&oe.b, &ie.b, lo, li)?,
                c: compose_terms(&oe.c, &ie.c, lo, li)?,
            });
        }
    }
    let table = OperandTable { level: lo + li, entries };
    table.validate()?;
    Ok(table)
}

pub fn count_table_ops(table: &OperandTable) -> OpCounts {
    let extra = |f: fn(&TableEntry) -> &Vec<Term>| table.entries.iter().map(|e| f(e).len() - 1).sum();
    OpCounts {
        mults: table.entries.len(),
        a_adds: extra(|e| &e.a),
        b_adds: extra(|e| &e.b),
        c_updates: table.entries.iter().map(|e| e.c.len()).sum(),
    }
}

/// How much of the Strassen data movement is fused into the GEMM loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fusion {
    Abc,
    Ab,
    Naive,
}

/// Algorithm choice: `level == 0` is the conventional dgemm (fusion ignored).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VariantSpec {
    pub level: u32,
    pub fusion: Fusion,
}

impl VariantSpec {
    pub const DGEMM: Self = Self { level: 0, fusion: Fusion::Abc };

    pub fn strassen(level: u32, fusion: Fusion) -> Self {
        Self { level, fusion }
    }

    /// The seven configurations: dgemm and {ABC, AB, Naive} at levels 1 and 2.
    pub fn all() -> [Self; 7] {
        use Fusion::*;
        [
            Self::DGEMM,
            Self::strassen(1, Abc),
            Self::strassen(1, Ab),
            Self::strassen(1, Naive),
            Self::strassen(2, Abc),
            Self::strassen(2, Ab),
            Self::strassen(2, Naive),
        ]
    }

    pub fn is_dgemm(&self) -> bool {
        self.level == 0
    }

    /// Short label used in CSV output and on the command line.
    pub fn variant_label(&self) -> &'static str {
        match (self.level, self.fusion) {
            (0, _) => "dgemm",
            (_, Fusion::Abc) => "abc",
            (_, Fusion::Ab) => "ab",
            (_, Fusion::Naive) => "naive",
        }
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dgemm() {
            f.write_str("dgemm")
        } else {
            write!(f, "{}{}", self.variant_label(), self.level)
        }
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "dgemm" {
            return Ok(Self::DGEMM);
        }
        let split = s.find(|c: char| c.is_ascii_digit()).ok_or_else(|| Error::Domain(format!("unknown variant {s:?}")))?;
        let (name, level) = s.split_at(split);
        let level: u32 = level.parse().map_err(|_| Error::Domain(format!("unknown variant {s:?}")))?;
        let fusion = match name {
            "abc" => Fusion::Abc,
            "ab" => Fusion::Ab,
            "naive" => Fusion::Naive,
            _ => return Err(Error::Domain(format!("unknown variant {s:?}"))),
        };
        if !(1..=2).contains(&level) {
            return Err(Error::Level(level));
        }
        Ok(Self { level, fusion })
    }
}

/// Quadrant-sized scratch matrices for the AB and Naive strategies.
#[derive(Debug, Default)]
pub(crate) struct Temporaries {
    m: Vec<f64>,
    ta: Vec<f64>,
    tb: Vec<f64>,
}

fn grow(buf: &mut Vec<f64>, len: usize, stats: Option<&ExecStats>) -> Result<()> {
    if buf.len() < len {
        let start = Instant::now();
        *buf = try_zeroed(len)?;
        if let Some(s) = stats {
            s.add_alloc_nanos(start.elapsed().as_nanos() as u64);
        }
    }
    Ok(())
}

impl Temporaries {
    pub(crate) fn reserve(&mut self, fusion: Fusion, level: u32, m: usize, n: usize, k: usize, stats: Option<&ExecStats>) -> Result<()> {
        if level == 0 || fusion == Fusion::Abc {
            return Ok(());
        }
        let q = |d: usize| crate::matrix::quadrant_dim(d, level);
        grow(&mut self.m, q(m) * q(n), stats)?;
        if fusion == Fusion::Naive {
            grow(&mut self.ta, q(m) * q(k), stats)?;
            grow(&mut self.tb, q(k) * q(n), stats)?;
        }
        Ok(())
    }
}

fn operand_sum(grid: &QuadrantGrid, terms: &[Term]) -> OperandSum {
    OperandSum {
        terms: terms.iter().map(|x| (grid.views[x.index], x.coeff as f64)).collect(),
        rows: grid.q_rows,
        cols: grid.q_cols,
    }
}

fn destinations(grid: &QuadrantGrid, terms: &[Term]) -> Vec<Dest> {
    terms.iter().map(|x| Dest::new(grid.views[x.index], x.coeff as f64)).collect()
}

/// `dst := sum_t coeff_t * X_t` over a row-major `rows x cols` temporary,
/// formed by pairwise passes. Returns the number of quadrant-sized passes
/// (a copy is one read plus one write, each addition two reads plus one
/// write).
fn materialize_sum(src: &[f64], sum: &OperandSum, dst: &mut [f64]) -> (u64, u64) {
    let (rows, cols) = (sum.rows, sum.cols);
    let dst = &mut dst[..rows * cols];
    dst.iter_mut().for_each(|x| *x = 0.0);
    let mut add_elems = 0u64;
    for (idx, (view, coeff)) in sum.terms.iter().enumerate() {
        for i in 0..view.rows {
            let row = &mut dst[i * cols..i * cols + view.cols];
            for (j, d) in row.iter_mut().enumerate() {
                let x = coeff * src[view.offset(i, j)];
                if idx == 0 {
                    *d = x;
                } else {
                    *d += x;
                }
            }
        }
        if idx > 0 {
            add_elems += view.len() as u64;
        }
    }
    let n = sum.terms.len() as u64;
    let passes = if n == 1 { 2 } else { 3 * (n - 1) };
    (passes, 2 * add_elems)
}

/// `C_r += alpha * gamma_r * M` for every destination, one streaming pass each.
fn stream_into_c(m_buf: &[f64], m_cols: usize, alpha: f64, c: &mut [f64], dests: &[Dest], stats: Option<&ExecStats>) {
    for d in dests {
        let scale = alpha * d.coeff;
        for i in 0..d.view.rows {
            let mrow = &m_buf[i * m_cols..i * m_cols + d.view.cols];
            for (j, &mv) in mrow.iter().enumerate() {
                c[d.view.offset(i, j)] += scale * mv;
            }
        }
        if let Some(s) = stats {
            s.add_c_temp_passes(3);
            s.add_c_update_flops(2 * d.view.len() as u64);
        }
    }
}

/// Runs one Strassen strategy for a prebuilt table.
pub(crate) fn execute(
    driver: &mut Driver,
    temps: &mut Temporaries,
    stats: Option<&ExecStats>,
    table: &OperandTable,
    fusion: Fusion,
    shape: ProblemShape,
    a: MatRef<'_>,
    b: MatRef<'_>,
    c: &mut MatMut<'_>,
) -> Result<()> {
    shape.check(a.view(), b.view(), c.view())?;
    let level = table.level;
    let ga = partition_quadrants(a.view(), level);
    let gb = partition_quadrants(b.view(), level);
    let (c_data, c_view) = c.raw_parts();
    let gc = partition_quadrants(c_view, level);
    let (mq, nq, kq) = (gc.q_rows, gc.q_cols, ga.q_cols);
    temps.reserve(fusion, level, shape.m, shape.n, shape.k, stats)?;
    let alpha = shape.alpha;

    for entry in &table.entries {
        let a_sum = operand_sum(&ga, &entry.a);
        let b_sum = operand_sum(&gb, &entry.b);
        let dests = destinations(&gc, &entry.c);
        if a_sum.is_zero() || b_sum.is_zero() || dests.iter().all(|d| d.view.is_empty()) {
            continue;
        }
        match fusion {
            Fusion::Abc => {
                let job = BlockJob { a: &a_sum, b: &b_sum, dests: &dests, alpha, fused_c_updates: true };
                driver.run(a.data(), b.data(), c_data, (mq, nq, kq), &job, stats)?;
            }
            Fusion::Ab => {
                let m_buf = &mut temps.m[..mq * nq];
                m_buf.iter_mut().for_each(|x| *x = 0.0);
                let m_dest = [Dest::new(MatrixView::row_major(mq, nq), 1.0)];
                let job = BlockJob { a: &a_sum, b: &b_sum, dests: &m_dest, alpha: 1.0, fused_c_updates: false };
                driver.run(a.data(), b.data(), m_buf, (mq, nq, kq), &job, stats)?;
                stream_into_c(m_buf, nq, alpha, c_data, &dests, stats);
            }
            Fusion::Naive => {
                let ta = &mut temps.ta[..mq * kq];
                let (passes, flops) = materialize_sum(a.data(), &a_sum, ta);
                let tb = &mut temps.tb[..kq * nq];
                let (b_passes, b_flops) = materialize_sum(b.data(), &b_sum, tb);
                if let Some(s) = stats {
                    s.add_a_temp_passes(passes);
                    s.add_a_add_flops(flops);
                    s.add_b_temp_passes(b_passes);
                    s.add_b_add_flops(b_flops);
                }
                let m_buf = &mut temps.m[..mq * nq];
                m_buf.iter_mut().for_each(|x| *x = 0.0);
                let ta_sum = OperandSum::single(MatrixView::row_major(mq, kq));
                let tb_sum = OperandSum::single(MatrixView::row_major(kq, nq));
                let m_dest = [Dest::new(MatrixView::row_major(mq, nq), 1.0)];
                let job = BlockJob { a: &ta_sum, b: &tb_sum, dests: &m_dest, alpha: 1.0, fused_c_updates: false };
                driver.run(&temps.ta, &temps.tb, m_buf, (mq, nq, kq), &job, stats)?;
                stream_into_c(m_buf, nq, alpha, c_data, &dests, stats);
            }
        }
    }
    Ok(())
}

fn run_single_threaded(
    fusion: Fusion,
    shape: ProblemShape,
    a: MatRef<'_>,
    b: MatRef<'_>,
    c: &mut MatMut<'_>,
    level: u32,
    params: &BlockingParams,
) -> Result<()> {
    if !(1..=2).contains(&level) {
        return Err(Error::Level(level));
    }
    let table = OperandTable::for_level(level)?;
    let mut driver = Driver::new(*params, 1)?;
    let mut temps = Temporaries::default();
    execute(&mut driver, &mut temps, None, &table, fusion, shape, a, b, c)
}

/// Fully fused Strassen, `C := alpha*A*B + C`.
pub fn strassen_abc(shape: ProblemShape, a: MatRef<'_>, b: MatRef<'_>, c: &mut MatMut<'_>, level: u32, params: &BlockingParams) -> Result<()> {
    run_single_threaded(Fusion::Abc, shape, a, b, c, level, params)
}

/// Strassen with one product temporary `M`, `C := alpha*A*B + C`.
pub fn strassen_ab(shape: ProblemShape, a: MatRef<'_>, b: MatRef<'_>, c: &mut MatMut<'_>, level: u32, params: &BlockingParams) -> Result<()> {
    run_single_threaded(Fusion::Ab, shape, a, b, c, level, params)
}

/// Strassen with all operands materialized, `C := alpha*A*B + C`.
pub fn strassen_naive(shape: ProblemShape, a: MatRef<'_>, b: MatRef<'_>, c: &mut MatMut<'_>, level: u32, params: &BlockingParams) -> Result<()> {
    run_single_threaded(Fusion::Naive, shape, a, b, c, level, params)
}
