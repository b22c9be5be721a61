//! Grid functions: complex fields (members of X_JK) and real fields.

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::scalar::{Complex, Real};

/// A grid function with values stored densely, boundary nodes included.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<E, T> {
    grid: Grid2D<T>,
    values: Vec<E>,
}

pub type ComplexField<T> = Field<Complex<T>, T>;
pub type RealField<T> = Field<T, T>;

/// Element types a [`Field`] can hold.
pub trait FieldValue<T: Real>:
    Copy
    + Send
    + Sync
    + PartialEq
    + std::fmt::Debug
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<T, Output = Self>
{
    fn zero() -> Self;
    fn modulus(self) -> T;
    fn norm_sqr(self) -> T;
    fn finite(self) -> bool;
}

impl<T: Real> FieldValue<T> for T {
    #[inline]
    fn zero() -> Self {
        T::zero()
    }
    #[inline]
    fn modulus(self) -> T {
        self.abs()
    }
    #[inline]
    fn norm_sqr(self) -> T {
        self * self
    }
    #[inline]
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl<T: Real> FieldValue<T> for Complex<T> {
    #[inline]
    fn zero() -> Self {
        Complex::new(T::zero(), T::zero())
    }
    #[inline]
    fn modulus(self) -> T {
        self.norm()
    }
    #[inline]
    fn norm_sqr(self) -> T {
        Complex::norm_sqr(&self)
    }
    #[inline]
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl<E: FieldValue<T>, T: Real> Field<E, T> {
    pub fn zeros(grid: Grid2D<T>) -> Self {
        Self { grid, values: vec![E::zero(); grid.len()] }
    }

    /// Samples `f` on interior nodes; boundary nodes are zero.
    pub fn from_fn(grid: Grid2D<T>, mut f: impl FnMut(T, T) -> E) -> Self {
        let mut out = Self::zeros(grid);
        for k in 1..grid.ny {
            for j in 1..grid.nx {
                let (x, y) = grid.node(j, k);
                out.values[grid.index(j, k)] = f(x, y);
            }
        }
        out
    }

    /// Wraps raw values. Boundary entries are kept as given; use
    /// [`Field::zero_boundary`] or [`Field::check_xjk`] as needed.
    pub fn from_values(grid: Grid2D<T>, values: Vec<E>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[E] {
        &self.values
    }

    /// Mutable access to the raw storage. Callers are responsible for the
    /// boundary staying zero.
    #[inline]
    pub fn values_mut(&mut self) -> &mut [E] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<E> {
        self.values
    }

    #[inline]
    pub fn at(&self, j: usize, k: usize) -> E {
        self.values[self.grid.index(j, k)]
    }

    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: E) {
        let i = self.grid.index(j, k);
        self.values[i] = v;
    }

    /// Zeroes the boundary rows and columns and returns the largest modulus
    /// that was discarded.
    pub fn zero_boundary(&mut self) -> T {
        let g = self.grid;
        let mut dropped = T::zero();
        let mut clear = |v: &mut E| {
            dropped = dropped.max(v.modulus());
            *v = E::zero();
        };
        let w = g.row_len();
        for j in 0..=g.nx {
            clear(&mut self.values[j]);
            clear(&mut self.values[g.ny * w + j]);
        }
        for k in 1..g.ny {
            clear(&mut self.values[k * w]);
            clear(&mut self.values[k * w + g.nx]);
        }
        dropped
    }

    /// Membership in X_JK: finite everywhere and exactly zero on the boundary.
    pub fn check_xjk(&self) -> Result<()> {
        if !self.values.iter().all(|v| v.finite()) {
            return Err(Error::NonFinite("field values"));
        }
        let g = &self.grid;
        for k in 0..=g.ny {
            for j in 0..=g.nx {
                if g.is_boundary(j, k) && self.at(j, k) != E::zero() {
                    return Err(Error::InvalidArgument(format!("nonzero boundary value at ({j},{k})")));
                }
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.finite())
    }

    pub fn ensure_same_grid<F>(&self, other: &Field<F, T>) -> Result<()> {
        if self.grid.same_space(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("fields live on different grids"))
        }
    }

    pub fn map<F: FieldValue<T>>(&self, f: impl Fn(E) -> F) -> Field<F, T> {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise modulus as a real field.
    pub fn modulus(&self) -> RealField<T> {
        self.map(|v| v.modulus())
    }

    /// Largest modulus and the node where it occurs (first in storage order).
    pub fn argmax_modulus(&self) -> (T, (usize, usize)) {
        let mut best = (T::neg_infinity(), 0usize);
        for (i, v) in self.values.iter().enumerate() {
            let m = v.modulus();
            if m > best.0 {
                best = (m, i);
            }
        }
        let w = self.grid.row_len();
        (best.0, (best.1 % w, best.1 / w))
    }
}

impl<T: Real> ComplexField<T> {
    pub fn from_real(r: &RealField<T>) -> Self {
        r.map(|v| Complex::new(v, T::zero()))
    }

    pub fn scale(&mut self, s: Complex<T>) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self - other`, pointwise.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_grid(other)?;
        Ok(Self { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() })
    }

    pub fn real_part(&self) -> RealField<T> {
        self.map(|v| v.re)
    }
}

impl<T: Real> RealField<T> {
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_grid(other)?;
        Ok(Self { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| *a - *b).collect() })
    }

    pub fn scale(&mut self, s: T) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid2D<f64> {
        Grid2D::new([0.0, 1.0, 0.0, 2.0], 4, 3, 1.0, 2).unwrap()
    }

    #[test]
    fn from_fn_leaves_boundary_zero() {
        let f = ComplexField::from_fn(grid(), |x, y| Complex::new(1.0 + x, y));
        f.check_xjk().unwrap();
        assert_eq!(f.at(1, 1), Complex::new(1.25, 2.0 / 3.0));
        assert_eq!(f.at(0, 1), Complex::new(0.0, 0.0));
    }

    #[test]
    fn zero_boundary_reports_dropped_mass() {
        let mut f = RealField::from_values(grid(), vec![1.0; grid().len()]).unwrap();
        assert!(f.check_xjk().is_err());
        assert_eq!(f.zero_boundary(), 1.0);
        f.check_xjk().unwrap();
        assert_eq!(f.values().iter().filter(|v| **v == 1.0).count(), 3 * 2);
    }

    #[test]
    fn argmax_reports_node() {
        let mut f = RealField::zeros(grid());
        f.set(3, 2, -4.0);
        f.set(1, 1, 2.0);
        assert_eq!(f.argmax_modulus(), (4.0, (3, 2)));
    }

    #[test]
    fn non_finite_rejected() {
        let mut f = RealField::zeros(grid());
        f.set(2, 2, f64::NAN);
        assert!(matches!(f.check_xjk(), Err(Error::NonFinite(_))));
    }
}
