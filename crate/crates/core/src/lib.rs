//! Laboratory for 2×2 genuinely nonlinear hyperbolic systems: singular
//! entropies cut along Riemann invariants, kinetic-measure diagnostics on
//! vanishing-viscosity runs, and quantitative L⁴ decay checks.
//!
//! The crate is organized as a pipeline:
//!
//! 1. [`system`] — flux, invariant chart, eigenstructure, certification;
//! 2. [`entropy`] — singular entropy tables Θ[ξ], Ξ[ξ] from a Goursat
//!    problem, plus the local constants (r̄, c) they certify;
//! 3. [`viscous`] — conservative viscous runs with entropy bookkeeping;
//! 4. [`battery`], [`kinetic`] — weak-form pairings of kinetic residuals
//!    and entropy dissipation against C¹ test batteries;
//! 5. [`decay`] — strip balances, interaction functional, strip iteration
//!    to the L⁴ decay ratio, and the time-continuity modulus.

pub mod error;
pub mod grid;
pub mod system;

pub mod battery;
pub mod decay;
pub mod entropy;
pub mod io;
pub mod kinetic;
pub mod viscous;

pub use error::{Error, Result};
pub use grid::{Field2, Grid2, Rect};
pub use system::{
    build_system, certify_nonlinearity, eigen_decompose, EigenData, NonlinearityCertificate,
    State, SystemKind, SystemParams, SystemSpec, TabulatedSystem,
};
