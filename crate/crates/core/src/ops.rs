//! Finite-difference operators and the discrete inner products and norms.
//!
//! Norm sums run over `j = 0..J-1`, `k = 0..K-1` (the `(·,·)_h` range); the
//! interior product `⟨·,·⟩_h` runs over `1..J-1 × 1..K-1`. On X_JK the two
//! agree.

use rayon::prelude::*;

use crate::error::Result;
use crate::field::{ComplexField, Field, FieldValue};
use crate::reduce;
use crate::scalar::{Complex, Real};

/// Five-point Laplacian `δ²_x + δ²_y` on interior nodes, zero on the boundary.
pub fn laplacian<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> Field<E, T> {
    let mut out = Field::zeros(*u.grid());
    laplacian_into(u, &mut out).expect("same grid");
    out
}

/// [`laplacian`] writing into `out`. Every entry of `out` is overwritten.
pub fn laplacian_into<E: FieldValue<T>, T: Real>(u: &Field<E, T>, out: &mut Field<E, T>) -> Result<()> {
    u.ensure_same_grid(out)?;
    let g = *u.grid();
    apply_laplacian(g.nx, g.ny, g.dx, g.dy, u.values(), out.values_mut());
    Ok(())
}

/// Raw-slice form of the five-point Laplacian used by the solvers.
pub(crate) fn apply_laplacian<E: FieldValue<T>, T: Real>(nx: usize, ny: usize, dx: T, dy: T, u: &[E], out: &mut [E]) {
    let w = nx + 1;
    let cx = T::one() / (dx * dx);
    let cy = T::one() / (dy * dy);
    out.par_chunks_mut(w).enumerate().for_each(|(k, row)| {
        if k == 0 || k == ny {
            row.iter_mut().for_each(|v| *v = E::zero());
            return;
        }
        let mid = &u[k * w..(k + 1) * w];
        let below = &u[(k - 1) * w..k * w];
        let above = &u[(k + 1) * w..(k + 2) * w];
        row[0] = E::zero();
        row[nx] = E::zero();
        for j in 1..nx {
            let c = mid[j];
            row[j] = (mid[j + 1] + mid[j - 1] - c - c) * cx + (above[j] + below[j] - c - c) * cy;
        }
    });
}

/// `δ²_x u` alone (interior).
pub fn second_diff_x<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> Field<E, T> {
    stencil(u, |u, j, k| {
        let c = u.at(j, k);
        (u.at(j + 1, k) + u.at(j - 1, k) - c - c) * (T::one() / (u.grid().dx * u.grid().dx))
    })
}

/// `δ²_y u` alone (interior).
pub fn second_diff_y<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> Field<E, T> {
    stencil(u, |u, j, k| {
        let c = u.at(j, k);
        (u.at(j, k + 1) + u.at(j, k - 1) - c - c) * (T::one() / (u.grid().dy * u.grid().dy))
    })
}

/// Forward differences `(δ⁺_x u, δ⁺_y u)`, defined for `j ≤ J-1` and
/// `k ≤ K-1` respectively; the last column (row) is left zero.
pub fn forward_diff<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> (Field<E, T>, Field<E, T>) {
    let g = *u.grid();
    let (ix, iy) = (T::one() / g.dx, T::one() / g.dy);
    let mut fx = Field::zeros(g);
    let mut fy = Field::zeros(g);
    for k in 0..=g.ny {
        for j in 0..=g.nx {
            if j < g.nx {
                fx.set(j, k, (u.at(j + 1, k) - u.at(j, k)) * ix);
            }
            if k < g.ny {
                fy.set(j, k, (u.at(j, k + 1) - u.at(j, k)) * iy);
            }
        }
    }
    (fx, fy)
}

/// Backward differences `(δ⁻_x u, δ⁻_y u)`, defined for `j ≥ 1`, `k ≥ 1`.
pub fn backward_diff<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> (Field<E, T>, Field<E, T>) {
    let g = *u.grid();
    let (ix, iy) = (T::one() / g.dx, T::one() / g.dy);
    let mut bx = Field::zeros(g);
    let mut by = Field::zeros(g);
    for k in 0..=g.ny {
        for j in 0..=g.nx {
            if j > 0 {
                bx.set(j, k, (u.at(j, k) - u.at(j - 1, k)) * ix);
            }
            if k > 0 {
                by.set(j, k, (u.at(j, k) - u.at(j, k - 1)) * iy);
            }
        }
    }
    (bx, by)
}

/// Centered differences `(δ_x u, δ_y u)` on interior nodes.
pub fn centered_diff<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> (Field<E, T>, Field<E, T>) {
    let g = *u.grid();
    let half = T::lit(0.5);
    let cx = stencil(u, |u, j, k| (u.at(j + 1, k) - u.at(j - 1, k)) * (half / g.dx));
    let cy = stencil(u, |u, j, k| (u.at(j, k + 1) - u.at(j, k - 1)) * (half / g.dy));
    (cx, cy)
}

/// Forward time quotient `(u^{n+1} - u^n)/τ`.
pub fn forward_diff_t<T: Real>(next: &ComplexField<T>, cur: &ComplexField<T>, tau: T) -> Result<ComplexField<T>> {
    let mut d = next.sub(cur)?;
    d.scale(Complex::new(T::one() / tau, T::zero()));
    Ok(d)
}

/// Centered time quotient `(u^{n+1} - u^{n-1})/(2τ)`.
pub fn centered_diff_t<T: Real>(next: &ComplexField<T>, prev: &ComplexField<T>, tau: T) -> Result<ComplexField<T>> {
    let mut d = next.sub(prev)?;
    d.scale(Complex::new(T::lit(0.5) / tau, T::zero()));
    Ok(d)
}

fn stencil<E: FieldValue<T>, T: Real>(u: &Field<E, T>, f: impl Fn(&Field<E, T>, usize, usize) -> E) -> Field<E, T> {
    let g = *u.grid();
    let mut out = Field::zeros(g);
    for k in 1..g.ny {
        for j in 1..g.nx {
            out.set(j, k, f(u, j, k));
        }
    }
    out
}

/// `(u, v)_h = ΔxΔy Σ_{j<J, k<K} u v̄`.
pub fn inner_h<T: Real>(u: &ComplexField<T>, v: &ComplexField<T>) -> Result<Complex<T>> {
    u.ensure_same_grid(v)?;
    Ok(inner_range(u, v, 0))
}

/// `⟨u, v⟩_h = ΔxΔy Σ_{interior} u v̄`.
pub fn inner_interior<T: Real>(u: &ComplexField<T>, v: &ComplexField<T>) -> Result<Complex<T>> {
    u.ensure_same_grid(v)?;
    Ok(inner_range(u, v, 1))
}

fn inner_range<T: Real>(u: &ComplexField<T>, v: &ComplexField<T>, start: usize) -> Complex<T> {
    let g = *u.grid();
    let w = g.row_len();
    let (a, b) = (u.values(), v.values());
    let cols = start..g.nx;
    reduce::rows(start..g.ny, cols, |k, j| a[k * w + j] * b[k * w + j].conj()) * (g.dx * g.dy)
}

/// Real inner product `ΔxΔy Σ u v` over the norm range.
pub fn inner_real<T: Real>(u: &Field<T, T>, v: &Field<T, T>) -> Result<T> {
    u.ensure_same_grid(v)?;
    let g = *u.grid();
    let w = g.row_len();
    let (a, b) = (u.values(), v.values());
    Ok(reduce::rows(0..g.ny, 0..g.nx, |k, j| a[k * w + j] * b[k * w + j]) * g.dx * g.dy)
}

/// `ΔxΔy Σ_{j<J, k<K} g(u_{j,k})` for a pointwise real map `g`.
pub fn grid_sum<E: FieldValue<T>, T: Real>(u: &Field<E, T>, g_map: impl Fn(E) -> T + Sync) -> T {
    let g = *u.grid();
    let w = g.row_len();
    let vals = u.values();
    reduce::rows(0..g.ny, 0..g.nx, |k, j| g_map(vals[k * w + j])) * g.dx * g.dy
}

/// `‖u‖²_{2,h}`.
pub fn norm_2h_sq<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> T {
    grid_sum(u, |v| v.norm_sqr())
}

/// `‖u‖_{2,h}`.
pub fn norm_2h<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> T {
    norm_2h_sq(u).sqrt()
}

/// `|||u|||_{2,h}` over the interior only.
pub fn norm_2h_interior<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> T {
    let g = *u.grid();
    let w = g.row_len();
    let vals = u.values();
    (reduce::rows(1..g.ny, 1..g.nx, |k, j| vals[k * w + j].norm_sqr()) * g.dx * g.dy).sqrt()
}

/// `‖u‖_{p,h}`, `p ≥ 1`.
pub fn norm_ph<E: FieldValue<T>, T: Real>(u: &Field<E, T>, p: T) -> Result<T> {
    if !(p >= T::one()) {
        return Err(crate::Error::InvalidArgument(format!("p = {p} must be >= 1")));
    }
    Ok(grid_sum(u, |v| v.modulus().powf(p)).powf(T::one() / p))
}

/// `‖u‖_{∞,h}` over all nodes.
pub fn norm_inf<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> T {
    u.values().iter().fold(T::zero(), |m, v| m.max(v.modulus()))
}

/// `|u|²_{1,h} = ‖δ⁺_x u‖²_{2,h} + ‖δ⁺_y u‖²_{2,h}`.
pub fn seminorm_1h_sq<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> T {
    let g = *u.grid();
    let w = g.row_len();
    let vals = u.values();
    let (cx, cy) = (T::one() / (g.dx * g.dx), T::one() / (g.dy * g.dy));
    reduce::rows(0..g.ny, 0..g.nx, |k, j| {
        let i = k * w + j;
        let c = vals[i];
        (vals[i + 1] - c).norm_sqr() * cx + (vals[i + w] - c).norm_sqr() * cy
    }) * g.dx
        * g.dy
}

/// `|u|_{1,h}`.
pub fn seminorm_1h<E: FieldValue<T>, T: Real>(u: &Field<E, T>) -> T {
    seminorm_1h_sq(u).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RealField;
    use crate::grid::Grid2D;

    #[test]
    fn interior_ones_norm() {
        let g = Grid2D::<f64>::new([0.0, 1.0, 0.0, 1.0], 4, 4, 1.0, 2).unwrap();
        let u = RealField::from_fn(g, |_, _| 1.0);
        assert!((norm_2h_sq(&u) - 9.0 / 16.0).abs() < 1e-15);
        assert_eq!(norm_inf(&u), 1.0);
        assert!((norm_ph(&u, 1.0).unwrap() - 9.0 / 16.0).abs() < 1e-15);
        assert!(norm_ph(&u, 0.5).is_err());
    }

    #[test]
    fn spike_forward_difference() {
        let g = Grid2D::<f64>::new([0.0, 1.0, 0.0, 1.0], 4, 4, 1.0, 2).unwrap();
        let mut u = ComplexField::zeros(g);
        u.set(2, 2, Complex::new(1.0, 0.0));
        let (fx, fy) = forward_diff(&u);
        assert_eq!(fx.at(1, 2).re, 4.0);
        assert_eq!(fx.at(2, 2).re, -4.0);
        assert_eq!(fy.at(2, 1).re, 4.0);
        assert_eq!(fy.at(2, 2).re, -4.0);
        let nz = fx.values().iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(nz, 2);
    }

    #[test]
    fn spike_seminorm() {
        let g = Grid2D::<f64>::new([0.0, 1.0, 0.0, 1.0], 2, 2, 1.0, 2).unwrap();
        let mut u = ComplexField::zeros(g);
        u.set(1, 1, Complex::new(1.0, 0.0));
        assert!((seminorm_1h_sq(&u) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn affine_laplacian_vanishes_inside() {
        let g = Grid2D::<f64>::new([0.0, 1.0, 0.0, 1.0], 8, 8, 1.0, 2).unwrap();
        let u = RealField::from_fn(g, |x, y| 3.0 * x - 2.0 * y + 0.5);
        let l = laplacian(&u);
        for k in 2..7 {
            for j in 2..7 {
                assert!(l.at(j, k).abs() < 1e-11, "({j},{k}) = {}", l.at(j, k));
            }
        }
    }

    #[test]
    fn centered_and_backward_stencils() {
        let g = Grid2D::<f64>::new([0.0, 1.0, 0.0, 1.0], 4, 4, 1.0, 2).unwrap();
        let u = RealField::from_fn(g, |x, y| x * x + y);
        let (cx, _) = centered_diff(&u);
        // (u(0.75)-u(0.25))/0.5 along x at y=0.5
        assert!((cx.at(2, 2) - (0.5625 - 0.0625) / 0.5).abs() < 1e-14);
        let (bx, by) = backward_diff(&u);
        assert!((bx.at(2, 2) - (0.25 - 0.0625) / 0.25).abs() < 1e-14);
        assert!((by.at(2, 2) - 1.0).abs() < 1e-14);
    }
}
