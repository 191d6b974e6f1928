//! Fold-aware continuation, bifurcation diagrams and preimage counting for
//! nonlinear maps between spaces of equal dimension.

pub mod bifurcation;
pub mod continuation;
pub mod elliptic;
pub mod error;
pub mod exec;
pub mod planar;
pub mod problem;
pub mod semilinear;
pub mod solutions;
pub mod sparse;
pub mod spectral;
pub mod sturm;
pub mod svg;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use exec::Exec;
pub use problem::{MapHandle, NonlinearMap, State};
