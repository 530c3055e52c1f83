//! Strided matrix views, quadrant partitioning and the reference product.
//!
//! A [`MatrixView`] is a plain descriptor (extent, strides, origin) into some
//! element buffer. It carries no borrow, so one buffer can be described by
//! many views at once, e.g. the 4 or 16 quadrants of a Strassen partition.
//! [`MatRef`] and [`MatMut`] pair a view with the buffer it addresses and
//! check at construction that every addressed element is in bounds.

use rand::Rng;

use crate::error::{shape_err, Error, Result};

/// Strided 2-D window over a buffer of `f64`.
///
/// Element `(i, j)` lives at `origin + i * row_stride + j * col_stride`.
/// Swapping the two strides (and the extents) transposes the view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatrixView {
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
    pub origin: usize,
}

impl MatrixView {
    pub fn row_major(rows: usize, cols: usize) -> Self {
        Self { rows, cols, row_stride: cols, col_stride: 1, origin: 0 }
    }

    pub fn col_major(rows: usize, cols: usize) -> Self {
        Self { rows, cols, row_stride: 1, col_stride: rows, origin: 0 }
    }

    #[inline(always)]
    pub fn offset(&self, i: usize, j: usize) -> usize {
        self.origin + i * self.row_stride + j * self.col_stride
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn transposed(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
            origin: self.origin,
        }
    }

    /// Window of `rows x cols` starting at `(r0, c0)`, clipped to this view.
    pub fn sub(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        let rows = rows.min(self.rows.saturating_sub(r0));
        let cols = cols.min(self.cols.saturating_sub(c0));
        let origin = if rows == 0 || cols == 0 { self.origin } else { self.offset(r0, c0) };
        Self { rows, cols, row_stride: self.row_stride, col_stride: self.col_stride, origin }
    }

    /// Largest addressed offset, `None` for an empty view.
    pub fn max_offset(&self) -> Option<usize> {
        if self.is_empty() {
            None
        } else {
            Some(self.offset(self.rows - 1, self.cols - 1))
        }
    }

    pub fn check_fits(&self, len: usize) -> Result<()> {
        match self.max_offset() {
            Some(max_offset) if max_offset >= len => Err(Error::OutOfBounds { max_offset, len }),
            _ => Ok(()),
        }
    }
}

/// Owned row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { data: vec![0.0; rows * cols], rows, cols }
    }

    pub fn try_zeros(rows: usize, cols: usize) -> Result<Self> {
        Ok(Self { data: crate::error::try_zeroed(rows * cols)?, rows, cols })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { data, rows, cols }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(rows.iter().all(|r| r.as_ref().len() == cols), "ragged rows");
        Self::from_fn(rows.len(), cols, |i, j| rows[i].as_ref()[j])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Entries uniform in `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn view(&self) -> MatrixView {
        MatrixView::row_major(self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef { data: &self.data, view: self.view() }
    }

    pub fn as_mut(&mut self) -> MatMut<'_> {
        let view = self.view();
        MatMut { data: &mut self.data, view }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// Read-only view bound to its buffer.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    data: &'a [f64],
    view: MatrixView,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], view: MatrixView) -> Result<Self> {
        view.check_fits(data.len())?;
        Ok(Self { data, view })
    }

    pub fn data(&self) -> &'a [f64] {
        self.data
    }

    pub fn view(&self) -> MatrixView {
        self.view
    }

    pub fn rows(&self) -> usize {
        self.view.rows
    }

    pub fn cols(&self) -> usize {
        self.view.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.view.rows && j < self.view.cols);
        self.data[self.view.offset(i, j)]
    }

    pub fn transposed(self) -> Self {
        Self { data: self.data, view: self.view.transposed() }
    }

    pub fn sub(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self { data: self.data, view: self.view.sub(r0, c0, rows, cols) }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.rows(), self.cols(), |i, j| self.get(i, j))
    }
}

/// Mutable view bound to its buffer.
#[derive(Debug)]
pub struct MatMut<'a> {
    data: &'a mut [f64],
    view: MatrixView,
}

impl<'a> MatMut<'a> {
    pub fn new(data: &'a mut [f64], view: MatrixView) -> Result<Self> {
        view.check_fits(data.len())?;
        Ok(Self { data, view })
    }

    pub fn view(&self) -> MatrixView {
        self.view
    }

    pub fn rows(&self) -> usize {
        self.view.rows
    }

    pub fn cols(&self) -> usize {
        self.view.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.view.offset(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self.view.offset(i, j);
        self.data[o] = v;
    }

    pub fn rb(&self) -> MatRef<'_> {
        MatRef { data: self.data, view: self.view }
    }

    pub fn rb_mut(&mut self) -> MatMut<'_> {
        MatMut { data: self.data, view: self.view }
    }

    pub fn sub_mut(&mut self, r0: usize, c0: usize, rows: usize, cols: usize) -> MatMut<'_> {
        MatMut { data: self.data, view: self.view.sub(r0, c0, rows, cols) }
    }

    /// The whole underlying buffer, for drivers that address several
    /// sub-views of it at once.
    pub(crate) fn raw_parts(&mut self) -> (&mut [f64], MatrixView) {
        (self.data, self.view)
    }
}

/// `m x n x k` problem with scalar `alpha`; the product is `C := alpha*A*B + C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemShape {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
}

impl ProblemShape {
    pub fn new(m: usize, n: usize, k: usize, alpha: f64) -> Result<Self> {
        if m == 0 || n == 0 || k == 0 {
            return Err(shape_err(format!("dimensions must be positive, got {m}x{n}x{k}")));
        }
        Ok(Self { m, n, k, alpha })
    }

    pub fn check(&self, a: MatrixView, b: MatrixView, c: MatrixView) -> Result<()> {
        let want = [("A", a, self.m, self.k), ("B", b, self.k, self.n), ("C", c, self.m, self.n)];
        for (name, v, r, cl) in want {
            if v.rows != r || v.cols != cl {
                return Err(shape_err(format!(
                    "{name} is {}x{}, expected {r}x{cl} for m={} n={} k={}",
                    v.rows, v.cols, self.m, self.n, self.k
                )));
            }
        }
        Ok(())
    }
}

/// `2^L x 2^L` partition of a view with equal logical quadrant size
/// `ceil(dim / 2^L)`, each quadrant clipped to the real extent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadrantGrid {
    pub level: u32,
    pub q_rows: usize,
    pub q_cols: usize,
    pub views: Vec<MatrixView>,
}

impl QuadrantGrid {
    pub fn side(&self) -> usize {
        1 << self.level
    }

    pub fn index(&self, qi: usize, qj: usize) -> usize {
        self.side() * qi + qj
    }

    pub fn get(&self, qi: usize, qj: usize) -> MatrixView {
        self.views[self.index(qi, qj)]
    }
}

pub fn quadrant_dim(dim: usize, level: u32) -> usize {
    dim.div_ceil(1 << level)
}

/// Splits `m` into the level-`level` quadrant grid, indexed row-major.
pub fn partition_quadrants(m: MatrixView, level: u32) -> QuadrantGrid {
    let side = 1usize << level;
    let q_rows = quadrant_dim(m.rows, level);
    let q_cols = quadrant_dim(m.cols, level);
    let mut views = Vec::with_capacity(side * side);
    for qi in 0..side {
        for qj in 0..side {
            views.push(m.sub(qi * q_rows, qj * q_cols, q_rows, q_cols));
        }
    }
    QuadrantGrid { level, q_rows, q_cols, views }
}

/// Textbook triple loop: `C := alpha*A*B + C` with each dot product
/// accumulated over `p` in ascending order starting from zero.
pub fn reference_gemm(shape: ProblemShape, a: MatRef<'_>, b: MatRef<'_>, c: &mut MatMut<'_>) -> Result<()> {
    shape.check(a.view(), b.view(), c.view())?;
    let mut acc = vec![0.0; shape.n];
    for i in 0..shape.m {
        acc.iter_mut().for_each(|x| *x = 0.0);
        for p in 0..shape.k {
            let aip = a.get(i, p);
            for (j, x) in acc.iter_mut().enumerate() {
                *x += aip * b.get(p, j);
            }
        }
        for (j, x) in acc.iter().enumerate() {
            let v = c.get(i, j) + shape.alpha * x;
            c.set(i, j, v);
        }
    }
    Ok(())
}

/// `||test - reference||_F / max(||reference||_F, 1)`.
pub fn rel_frobenius_error(test: MatRef<'_>, reference: MatRef<'_>) -> Result<f64> {
    if test.rows() != reference.rows() || test.cols() != reference.cols() {
        return Err(shape_err(format!(
            "cannot compare {}x{} with {}x{}",
            test.rows(),
            test.cols(),
            reference.rows(),
            reference.cols()
        )));
    }
    let mut diff = 0.0;
    let mut norm = 0.0;
    for i in 0..test.rows() {
        for j in 0..test.cols() {
            let r = reference.get(i, j);
            let d = test.get(i, j) - r;
            diff += d * d;
            norm += r * r;
        }
    }
    Ok(diff.sqrt() / norm.sqrt().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_identity_and_zero_alpha() {
        let a = Matrix::identity(2);
        let b = Matrix::from_rows(&[[1.5, -2.0], [0.25, 7.0]]);
        let mut c = Matrix::zeros(2, 2);
        let s = ProblemShape::new(2, 2, 2, 1.0).unwrap();
        reference_gemm(s, a.as_ref(), b.as_ref(), &mut c.as_mut()).unwrap();
        assert_eq!(c, b);

        let c0 = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let mut c = c0.clone();
        let s = ProblemShape::new(2, 2, 2, 0.0).unwrap();
        reference_gemm(s, b.as_ref(), b.as_ref(), &mut c.as_mut()).unwrap();
        assert_eq!(c, c0);
    }

    #[test]
    fn reference_hand_example() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Matrix::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        let mut c = Matrix::zeros(2, 2);
        let s = ProblemShape::new(2, 2, 2, 1.0).unwrap();
        reference_gemm(s, a.as_ref(), b.as_ref(), &mut c.as_mut()).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[19.0, 22.0], [43.0, 50.0]]));
    }

    #[test]
    fn reference_rejects_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        let mut c = Matrix::zeros(2, 2);
        let s = ProblemShape::new(2, 2, 3, 1.0).unwrap();
        assert!(matches!(
            reference_gemm(s, a.as_ref(), b.as_ref(), &mut c.as_mut()),
            Err(Error::Shape(_))
        ));
        assert!(ProblemShape::new(0, 1, 1, 1.0).is_err());
    }

    #[test]
    fn view_bounds_checked() {
        let buf = vec![0.0; 6];
        assert!(MatRef::new(&buf, MatrixView::row_major(2, 3)).is_ok());
        let err = MatRef::new(&buf, MatrixView::row_major(3, 3)).unwrap_err();
        assert_eq!(err, Error::OutOfBounds { max_offset: 8, len: 6 });
        let empty = MatrixView { rows: 0, cols: 5, row_stride: 100, col_stride: 1, origin: 50 };
        assert!(MatRef::new(&buf, empty).is_ok());
    }

    #[test]
    fn exact_split_level_one() {
        let g = partition_quadrants(MatrixView::row_major(4, 4), 1);
        assert_eq!((g.q_rows, g.q_cols), (2, 2));
        assert_eq!(g.get(1, 0).origin, 8);
        assert_eq!(g.get(0, 1).origin, 2);
        assert!(g.views.iter().all(|v| v.rows == 2 && v.cols == 2));
    }

    #[test]
    fn clipped_split_five_by_five() {
        let g = partition_quadrants(MatrixView::row_major(5, 5), 1);
        let dims: Vec<_> = g.views.iter().map(|v| (v.rows, v.cols)).collect();
        assert_eq!(dims, vec![(3, 3), (3, 2), (2, 3), (2, 2)]);
    }

    #[test]
    fn large_level_two_split() {
        let g = partition_quadrants(MatrixView::row_major(16000, 16000), 2);
        assert_eq!(g.views.len(), 16);
        assert!(g.views.iter().all(|v| v.rows == 4000 && v.cols == 4000));
        assert_eq!(g.get(3, 3).origin, 12000 * 16000 + 12000);
    }

    #[test]
    fn tiny_matrix_gives_empty_quadrants() {
        let g = partition_quadrants(MatrixView::row_major(1, 3), 2);
        assert_eq!((g.q_rows, g.q_cols), (1, 1));
        assert!(!g.get(0, 2).is_empty());
        assert!(g.get(0, 3).is_empty());
        assert!(g.get(1, 0).is_empty());
    }

    #[test]
    fn frobenius_cases() {
        let a = Matrix::from_rows(&[[3.0, 4.0]]);
        assert_eq!(rel_frobenius_error(a.as_ref(), a.as_ref()).unwrap(), 0.0);
        let z = Matrix::zeros(1, 2);
        assert_eq!(rel_frobenius_error(z.as_ref(), z.as_ref()).unwrap(), 0.0);
        let t = Matrix::from_rows(&[[3.0, 4.0000005]]);
        let e = rel_frobenius_error(t.as_ref(), a.as_ref()).unwrap();
        // 4.0000005 itself is rounded on input, which bounds the error near 1e-16.
        assert!((e - 1e-7).abs() <= 1e-16, "{e}");
        assert!(rel_frobenius_error(z.as_ref(), Matrix::zeros(2, 1).as_ref()).is_err());
    }
}
