//! Register-tiled micro-kernel with multi-destination C updates, and the
//! macro-kernel (the two loops around it).
//!
//! The micro-kernel forms one `m_R x n_R` product tile `T` from an A
//! micro-panel and a B micro-panel, then adds `alpha * gamma * T` into every
//! destination quadrant of C. Destinations are views clipped to the real
//! matrix; rows and columns of a tile outside a clipped view are never
//! written.

use crate::blocking::{BlockingParams, PackedPanelA, PackedPanelB};
use crate::error::Result;
use crate::matrix::MatrixView;

pub const MAX_MR: usize = 16;
pub const MAX_NR: usize = 16;

/// One C destination: a (possibly clipped) quadrant view and its sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dest {
    pub view: MatrixView,
    pub coeff: f64,
}

impl Dest {
    pub fn new(view: MatrixView, coeff: f64) -> Self {
        Self { view, coeff }
    }
}

/// Destinations of one micro-tile plus the tile's position inside the
/// logical quadrant.
#[derive(Debug, Clone, Copy)]
pub struct DestSpec<'a> {
    pub dests: &'a [Dest],
    pub tile_row: usize,
    pub tile_col: usize,
}

/// Accumulator of one micro-kernel call, row-major `mr x nr`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub mr: usize,
    pub nr: usize,
    vals: [f64; MAX_MR * MAX_NR],
}

impl Tile {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.vals[i * self.nr + j]
    }
}

#[inline(always)]
fn tile_fixed<const MR: usize, const NR: usize>(k: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    let mut acc = [[0.0f64; NR]; MR];
    for (ap, bp) in a[..k * MR].chunks_exact(MR).zip(b[..k * NR].chunks_exact(NR)) {
        for i in 0..MR {
            let ai = ap[i];
            for j in 0..NR {
                acc[i][j] += ai * bp[j];
            }
        }
    }
    for i in 0..MR {
        out[i * NR..(i + 1) * NR].copy_from_slice(&acc[i]);
    }
}

fn tile_dyn(k: usize, a: &[f64], b: &[f64], mr: usize, nr: usize, out: &mut [f64]) {
    out[..mr * nr].iter_mut().for_each(|x| *x = 0.0);
    for (ap, bp) in a[..k * mr].chunks_exact(mr).zip(b[..k * nr].chunks_exact(nr)) {
        for i in 0..mr {
            let ai = ap[i];
            let row = &mut out[i * nr..(i + 1) * nr];
            for (x, &bj) in row.iter_mut().zip(bp) {
                *x += ai * bj;
            }
        }
    }
}

/// `T = sum_{p<k} a[:, p] * b[p, :]`, accumulated over `p` in ascending order.
///
/// `a` holds `k` columns of `mr` contiguous elements, `b` holds `k` rows of
/// `nr` contiguous elements (the packed micro-panel layouts).
pub fn compute_tile(k: usize, a: &[f64], b: &[f64], mr: usize, nr: usize) -> Tile {
    assert!(mr <= MAX_MR && nr <= MAX_NR, "register tile {mr}x{nr} too large");
    let mut tile = Tile { mr, nr, vals: [0.0; MAX_MR * MAX_NR] };
    match (mr, nr) {
        (8, 4) => tile_fixed::<8, 4>(k, a, b, &mut tile.vals),
        (4, 4) => tile_fixed::<4, 4>(k, a, b, &mut tile.vals),
        (4, 8) => tile_fixed::<4, 8>(k, a, b, &mut tile.vals),
        _ => tile_dyn(k, a, b, mr, nr, &mut tile.vals),
    }
    tile
}

/// In-range extent of a tile inside a clipped destination.
#[inline]
fn clip(view: &MatrixView, tile_row: usize, tile_col: usize, mr: usize, nr: usize) -> (usize, usize) {
    (
        view.rows.saturating_sub(tile_row).min(mr),
        view.cols.saturating_sub(tile_col).min(nr),
    )
}

/// Adds `alpha * gamma * T` into each destination, returns the number of C
/// elements updated (summed over destinations).
///
/// # Safety
/// Every destination view must address memory inside the allocation `c`
/// points into, and no other thread may touch the addressed tile.
pub(crate) unsafe fn apply_tile_raw(tile: &Tile, alpha: f64, c: *mut f64, spec: &DestSpec<'_>) -> u64 {
    let (mr, nr) = (tile.mr, tile.nr);
    let mut touched = 0u64;
    for d in spec.dests {
        let (rows, cols) = clip(&d.view, spec.tile_row, spec.tile_col, mr, nr);
        if rows == 0 || cols == 0 {
            continue;
        }
        let scale = alpha * d.coeff;
        let base = d.view.offset(spec.tile_row, spec.tile_col);
        let (rs, cs) = (d.view.row_stride, d.view.col_stride);
        if rows == mr && cols == nr {
            for i in 0..mr {
                let t = &tile.vals[i * nr..(i + 1) * nr];
                for (j, &tv) in t.iter().enumerate() {
                    let p = c.add(base + i * rs + j * cs);
                    *p += scale * tv;
                }
            }
        } else {
            // C fringe: only the in-range part of the staged tile is stored.
            for i in 0..rows {
                for j in 0..cols {
                    let p = c.add(base + i * rs + j * cs);
                    *p += scale * tile.vals[i * nr + j];
                }
            }
        }
        touched += (rows * cols) as u64;
    }
    touched
}

fn check_dests(c_len: usize, dests: &[Dest]) -> Result<()> {
    dests.iter().try_for_each(|d| d.view.check_fits(c_len))
}

/// Safe wrapper over the destination update of a precomputed tile.
pub fn apply_tile(tile: &Tile, alpha: f64, c: &mut [f64], spec: &DestSpec<'_>) -> Result<u64> {
    check_dests(c.len(), spec.dests)?;
    // SAFETY: views were checked against `c`, which we borrow exclusively.
    Ok(unsafe { apply_tile_raw(tile, alpha, c.as_mut_ptr(), spec) })
}

/// One micro-kernel call: accumulate the tile, then update all destinations
/// in listed order. `k == 0` leaves C untouched.
pub fn microkernel(
    a_panel: &[f64],
    b_panel: &[f64],
    k: usize,
    mr: usize,
    nr: usize,
    alpha: f64,
    c: &mut [f64],
    spec: &DestSpec<'_>,
) -> Result<()> {
    if k == 0 {
        return Ok(());
    }
    let tile = compute_tile(k, a_panel, b_panel, mr, nr);
    apply_tile(&tile, alpha, c, spec)?;
    Ok(())
}

/// What one macro-kernel invocation did.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct KernelTally {
    pub calls: u64,
    /// C elements updated, summed over destinations.
    pub dest_elems: u64,
}

/// # Safety
/// As for [`apply_tile_raw`], for every tile of the block.
pub(crate) unsafe fn macro_kernel_raw(
    packed_a: &PackedPanelA,
    packed_b: &PackedPanelB,
    alpha: f64,
    c: *mut f64,
    dests: &[Dest],
    row0: usize,
    col0: usize,
) -> KernelTally {
    let (mr, nr) = (packed_a.mr(), packed_b.nr());
    let k = packed_a.kc();
    debug_assert_eq!(k, packed_b.kc());
    let mut tally = KernelTally::default();
    if k == 0 {
        return tally;
    }
    for jr in 0..packed_b.panels() {
        let tile_col = col0 + jr * nr;
        let b = packed_b.micro_panel(jr);
        for ir in 0..packed_a.panels() {
            let tile_row = row0 + ir * mr;
            if !dests.iter().any(|d| tile_row < d.view.rows && tile_col < d.view.cols) {
                continue;
            }
            let tile = compute_tile(k, packed_a.micro_panel(ir), b, mr, nr);
            let spec = DestSpec { dests, tile_row, tile_col };
            tally.dest_elems += apply_tile_raw(&tile, alpha, c, &spec);
            tally.calls += 1;
        }
    }
    tally
}

/// Runs the `jr`/`ir` loops over one packed `m_c x n_c` block, whose
/// top-left corner sits at `(row0, col0)` of the logical quadrant.
pub fn macro_kernel(
    packed_a: &PackedPanelA,
    packed_b: &PackedPanelB,
    alpha: f64,
    c: &mut [f64],
    dests: &[Dest],
    row0: usize,
    col0: usize,
    params: &BlockingParams,
) -> Result<KernelTally> {
    check_dests(c.len(), dests)?;
    assert_eq!((packed_a.mr(), packed_b.nr()), (params.mr, params.nr), "panel geometry mismatch");
    // SAFETY: views were checked against `c`, which we borrow exclusively.
    Ok(unsafe { macro_kernel_raw(packed_a, packed_b, alpha, c.as_mut_ptr(), dests, row0, col0) })
}
