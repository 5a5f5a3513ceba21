//! Phase retrieval on the manifold of rank-1 Hermitian matrices.
//!
//! The crate recovers a complex signal `x` from intensity-only samples
//! `y_k = |a_k^* x|^2` by running Riemannian gradient descent on the lifted
//! rank-1 matrix `X = x x^*`. Three metrics are provided on the manifold:
//!
//! * the canonical trace metric (TRGD),
//! * the Wirtinger pseudo-metric `<A,B> - tr(A)tr(B)/2` (TWF, vector form),
//! * the weighted metric `<A,B> + tr(A)tr(B)` (TWRGD), under which Gaussian
//!   sensing is nearly isometric on tangent spaces.
//!
//! All production paths are matrix-free: points and tangent vectors are kept
//! in factored form and every step costs a handful of `O(mn)` passes over the
//! sensing vectors. Dense `n x n` reference implementations live in
//! [`oracle`] and are used only for validation.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cvec;
pub mod error;
pub mod harness;
pub mod hermitian;
pub mod manifold;
pub mod measurement;
pub mod oracle;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use hermitian::{FactoredHermitian, HermitianAction};
pub use manifold::{MetricKind, Rank1Point, TangentVector};
pub use measurement::{IntensityVector, MeasurementEnsemble, Truncation, TruncationMask};
pub use solvers::{IterateTrace, SolverConfig, SolverKind, StepPolicy};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
