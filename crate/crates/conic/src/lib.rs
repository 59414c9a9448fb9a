//! Small conic-program layer: linear objective with optional convex
//! quadratic penalty over real variables, LMI / second-order / linear
//! cones, solved by an interior-point backend (Clarabel).
//!
//! Problem sizes here are tiny (largest LMI blocks are a few tens of
//! rows), so no sparsity exploitation beyond what the backend does
//! internally. Complex Hermitian LMIs are realified before they reach
//! the backend; see [`hermitian`].

// Links the system BLAS needed by the backend's PSD cone support.
extern crate openblas_src;

pub mod dump;
pub mod expr;
pub mod hermitian;
pub mod ipm;
pub mod program;
pub mod sym;

pub use expr::LinExpr;
pub use hermitian::HermitianAffine;
pub use program::{ConeBlock, Program, Solution, Status, Tolerances};
pub use sym::SymmetricAffine;
