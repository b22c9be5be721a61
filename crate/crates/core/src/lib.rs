//! Finite-difference and split-step solvers for the two-dimensional
//! saturable nonlinear Schrödinger equation with nonlinear damping,
//!
//! ```text
//! i u_t + Δu + λ u|u|²/(1+|u|²) + iε u|u|² = 0,
//! ```
//!
//! on a rectangle with homogeneous Dirichlet data, together with the
//! ground-state solver, soliton model and error metrics used to compare the
//! schemes.
//!
//! The numerical core is generic over the real scalar (`f32` or `f64`).
//! The aliases at the crate root fix it to `f64`.

// Guards like `!(x > 0)` are written that way so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aitem;
pub mod cnfd;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod field;
pub mod forcing;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod metrics;
pub mod mms;
pub mod ops;
pub mod reduce;
pub mod saturable;
pub mod scalar;
pub mod soliton;
pub mod spectral;
pub mod ssfm;

pub use error::{Error, Result};
pub use scalar::{Complex, Real};

pub type Grid = grid::Grid2D<f64>;
pub type ComplexField = field::ComplexField<f64>;
pub type RealField = field::RealField<f64>;
pub type PhysicsParams = saturable::PhysicsParams<f64>;
pub type SolitonParams = soliton::SolitonParams<f64>;
pub type CnfdConfig = cnfd::CnfdConfig<f64>;
pub type SsfmConfig = ssfm::SsfmConfig<f64>;
pub type AitemConfig = aitem::AitemConfig<f64>;
pub type GroundState = aitem::GroundState<f64>;
pub type SpectralWorkspace = spectral::SpectralWorkspace<f64>;
pub type Trajectory = evolve::Trajectory<f64>;
