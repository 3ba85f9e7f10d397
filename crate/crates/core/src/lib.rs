//! Mixed-precision single-pass Nyström approximation of symmetric positive
//! semidefinite matrices, with error bounds, a limited-memory preconditioner
//! built from the approximation, and preconditioned conjugate gradients.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod matrices;
pub mod nystrom;
pub mod pcg;
pub mod precond;
pub mod precision;
pub mod rng;

pub use error::{Error, Result};
pub use matrices::{SpdMatrix, SyntheticKind, SyntheticSpec};
pub use nystrom::{nystrom_approx, NystromApprox};
pub use precision::{FloatFormat, MatmulMode, OverflowPolicy};
