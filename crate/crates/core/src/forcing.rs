//! Additive source terms for manufactured-solution studies.

use crate::field::ComplexField;
use crate::grid::Grid2D;
use crate::scalar::Real;

/// A source `r(x,y,t)` added to the right-hand side of
/// `i u_t + Δu + λ u|u|²/(1+|u|²) + iε u|u|² = r`.
pub trait Forcing<T: Real>: Sync {
    /// Samples `r(·,·,t)` on interior nodes (boundary zero).
    fn sample(&self, grid: &Grid2D<T>, t: T) -> ComplexField<T>;
}
