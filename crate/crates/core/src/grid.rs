//! Uniform rectangular grid and time partition.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform (J+1)×(K+1) node grid on `[a,b]×[c,d]` plus a uniform partition of
/// `[0,T]` into `N` steps.
///
/// Nodes are stored row-major with `x` fastest: node `(j,k)` lives at
/// `k*(J+1) + j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    /// J: number of x-intervals.
    pub nx: usize,
    /// K: number of y-intervals.
    pub ny: usize,
    pub dx: T,
    pub dy: T,
    /// N: number of time steps.
    pub n_steps: usize,
    pub t_final: T,
    pub tau: T,
}

impl<T: Real> Grid2D<T> {
    pub fn new(bounds: [T; 4], nx: usize, ny: usize, t_final: T, n_steps: usize) -> Result<Self> {
        let [a, b, c, d] = bounds;
        if !bounds.iter().all(|v| v.is_finite()) || !t_final.is_finite() {
            return Err(Error::InvalidGrid("non-finite bounds or final time".into()));
        }
        if b <= a || d <= c {
            return Err(Error::InvalidGrid(format!("degenerate domain [{a},{b}]x[{c},{d}]")));
        }
        if t_final <= T::zero() {
            return Err(Error::InvalidGrid(format!("final time {t_final} must be positive")));
        }
        if nx < 2 || ny < 2 || n_steps < 2 {
            return Err(Error::InvalidGrid(format!("need J, K, N >= 2 (got J={nx}, K={ny}, N={n_steps})")));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            nx,
            ny,
            dx: (b - a) / T::of_usize(nx),
            dy: (d - c) / T::of_usize(ny),
            n_steps,
            t_final,
            tau: t_final / T::of_usize(n_steps),
        })
    }

    /// Builds a grid from a target mesh size and time step. Both must divide
    /// their interval to within `1e-9` relative.
    pub fn from_spacing(bounds: [T; 4], h: T, t_final: T, tau: T) -> Result<Self> {
        let count = |len: T, step: T, what: &str| -> Result<usize> {
            if !(step > T::zero()) {
                return Err(Error::InvalidGrid(format!("{what} must be positive")));
            }
            let n = (len / step).round();
            if (n * step - len).abs() > T::lit(1e-9) * len.abs().max(T::one()) {
                return Err(Error::InvalidGrid(format!("{what}={step} does not divide length {len}")));
            }
            Ok(n.to_usize().unwrap_or(0))
        };
        let [a, b, c, d] = bounds;
        let nx = count(b - a, h, "h (x)")?;
        let ny = count(d - c, h, "h (y)")?;
        let nt = count(t_final, tau, "tau")?;
        Self::new(bounds, nx, ny, t_final, nt)
    }

    /// Same spatial grid, different time partition.
    pub fn with_time(&self, t_final: T, n_steps: usize) -> Result<Self> {
        Self::new([self.a, self.b, self.c, self.d], self.nx, self.ny, t_final, n_steps)
    }

    #[inline]
    pub fn x(&self, j: usize) -> T {
        self.a + T::of_usize(j) * self.dx
    }

    #[inline]
    pub fn y(&self, k: usize) -> T {
        self.c + T::of_usize(k) * self.dy
    }

    #[inline]
    pub fn node(&self, j: usize, k: usize) -> (T, T) {
        (self.x(j), self.y(k))
    }

    #[inline]
    pub fn t(&self, n: usize) -> T {
        T::of_usize(n) * self.tau
    }

    /// `max(Δx, Δy)`.
    pub fn h(&self) -> T {
        self.dx.max(self.dy)
    }

    /// Nodes per row, J+1.
    #[inline]
    pub fn row_len(&self) -> usize {
        self.nx + 1
    }

    #[inline]
    pub fn len(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        k * (self.nx + 1) + j
    }

    #[inline]
    pub fn is_boundary(&self, j: usize, k: usize) -> bool {
        j == 0 || k == 0 || j == self.nx || k == self.ny
    }

    /// Spatial compatibility; the time partition is ignored.
    pub fn same_space(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.a == other.a
            && self.b == other.b
            && self.c == other.c
            && self.d == other.d
    }

    /// Index `n` with `t_n = t`, if `t` lies on the time lattice to within
    /// `1e-9·τ`.
    pub fn step_of_time(&self, t: T) -> Option<usize> {
        if t < -T::lit(1e-9) * self.tau {
            return None;
        }
        let n = (t / self.tau).round();
        if (n * self.tau - t).abs() <= T::lit(1e-9) * self.tau.max(T::one()) {
            n.to_usize()
        } else {
            None
        }
    }

    /// Index of the node closest to `(x, y)`, clamped to the grid.
    pub fn nearest_node(&self, x: T, y: T) -> (usize, usize) {
        let j = ((x - self.a) / self.dx).round().max(T::zero()).min(T::of_usize(self.nx));
        let k = ((y - self.c) / self.dy).round().max(T::zero()).min(T::of_usize(self.ny));
        (j.to_usize().unwrap_or(0), k.to_usize().unwrap_or(0))
    }
}
