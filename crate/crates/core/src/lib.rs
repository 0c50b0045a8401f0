//! Finite-difference laboratory for the nonlocal Kirchhoff-type problem
//!
//! ```text
//! −(a(x) + b(x)·∫|∇u|²) Δu = h   in Ω = (x0, x0+Lx) × (y0, y0+Ly),   u = 0 on ∂Ω.
//! ```
//!
//! * [`grid`]: staggered summation-by-parts operators and fields.
//! * [`expr`]: coefficient expressions in `x`, `y`.
//! * [`linalg`]: sparse weighted Laplacians, CG, dense pencil eigensolves.
//! * [`kirchhoff`]: all solutions via the scalar fixed-point reduction; Newton.
//! * [`eigen`]: the frozen-energy eigenvalue problem with indefinite weight.
//! * [`certify`]: uniqueness certificates for a given pair `(a, b)`.

pub mod certify;
pub mod eigen;
pub mod expr;
pub mod format;
pub mod grid;
pub mod kirchhoff;
pub mod linalg;
pub mod random;

pub use certify::{certify, Certificate, CertifyError, Verdict};
pub use eigen::{EigenError, EigenPair};
pub use expr::{parse, Expr, ExprError};
pub use grid::{FaceField, Grid, GridError, ScalarField};
pub use kirchhoff::{NonlocalSolution, Problem, ScanOptions, ScanReport, SolveError};
