//! Double-precision GEMM with one- and two-level Strassen built into a
//! BLIS-style blocked implementation.
//!
//! The Strassen operand sums are formed while packing, and the
//! micro-kernel scatters each product tile into several C quadrants at
//! once, so the fully fused variant needs no workspace beyond the packing
//! buffers. An analytical cost model ([`model`]) predicts run time for each
//! variant, and [`bench`] drives sweeps, verification and CSV output.
//!
//! ```
//! use strassen_core::{Gemm, ExecConfig, Matrix, ProblemShape, VariantSpec};
//!
//! let a = Matrix::from_fn(64, 64, |i, j| (i + j) as f64);
//! let b = Matrix::identity(64);
//! let mut c = Matrix::zeros(64, 64);
//! let shape = ProblemShape::new(64, 64, 64, 1.0).unwrap();
//! let mut gemm = Gemm::new(ExecConfig::default()).unwrap();
//! gemm.multiply("abc1".parse::<VariantSpec>().unwrap(), shape, a.as_ref(), b.as_ref(), &mut c.as_mut()).unwrap();
//! assert_eq!(c, a);
//! ```

#![allow(clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod blocking;
pub mod engine;
pub mod error;
pub mod kernel;
pub mod matrix;
pub mod model;
pub mod stats;
pub mod strassen;

pub use blocking::{gemm_conventional, BlockingParams};
pub use engine::{ExecConfig, Gemm};
pub use error::{Error, Result};
pub use matrix::{reference_gemm, rel_frobenius_error, MatMut, MatRef, Matrix, MatrixView, ProblemShape};
pub use stats::{ExecStats, StatsSnapshot};
pub use strassen::{strassen_ab, strassen_abc, strassen_naive, Fusion, OperandTable, VariantSpec};
