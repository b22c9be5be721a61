//! Matrix-free linear systems of the form
//!
//! ```text
//! A W = σ W + κ δ²W + d ∘ W      (interior nodes; W = 0 on the boundary)
//! ```
//!
//! with a complex shift `σ`, a real Laplacian weight `κ` and a pointwise
//! complex diagonal `d`. The Crank–Nicolson step matrix has this shape with
//! `σ = i/τ` and `κ = 1/2`; it is complex symmetric but not Hermitian, so
//! the iterative path is BiCGStab. Small grids can use a banded direct
//! factorization instead.

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid2D;
use crate::reduce;
use crate::scalar::{Complex, Real};

#[derive(Debug, Clone)]
pub struct LinearSystem<T> {
    grid: Grid2D<T>,
    /// Full diagonal `σ + d - 2κ(1/Δx² + 1/Δy²)` per node (unused on the
    /// boundary).
    center: Vec<Complex<T>>,
    /// `κ/Δx²`, `κ/Δy²`.
    off_x: T,
    off_y: T,
    pub rhs: ComplexField<T>,
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖AW - b‖/‖b‖` at exit (0 when `b = 0`).
    pub rel_residual: f64,
}

impl<T: Real> LinearSystem<T> {
    /// Assembles `σ I + κ δ² + diag(d)`. `diag` must have one entry per node.
    pub fn new(
        grid: Grid2D<T>,
        shift: Complex<T>,
        laplacian_weight: T,
        diag: &[Complex<T>],
        rhs: ComplexField<T>,
    ) -> Result<Self> {
        if diag.len() != grid.len() {
            return Err(Error::InvalidArgument("diagonal length does not match grid".into()));
        }
        if !rhs.grid().same_space(&grid) {
            return Err(Error::GridMismatch("right-hand side not on system grid"));
        }
        let off_x = laplacian_weight / (grid.dx * grid.dx);
        let off_y = laplacian_weight / (grid.dy * grid.dy);
        let two = T::lit(2.0);
        let base = shift - Complex::new(two * (off_x + off_y), T::zero());
        let center = diag.iter().map(|&d| base + d).collect();
        Ok(Self { grid, center, off_x, off_y, rhs })
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }

    /// `y = A x` for `x` vanishing on the boundary; the boundary of `y` is
    /// set to zero.
    pub fn apply(&self, x: &[Complex<T>], y: &mut [Complex<T>]) {
        use rayon::prelude::*;
        let g = &self.grid;
        let (nx, ny, w) = (g.nx, g.ny, g.row_len());
        let zero = Complex::new(T::zero(), T::zero());
        let (ox, oy) = (self.off_x, self.off_y);
        y.par_chunks_mut(w).enumerate().for_each(|(k, row)| {
            if k == 0 || k == ny {
                row.iter_mut().for_each(|v| *v = zero);
                return;
            }
            let base = k * w;
            let mid = &x[base..base + w];
            let below = &x[base - w..base];
            let above = &x[base + w..base + 2 * w];
            let cen = &self.center[base..base + w];
            row[0] = zero;
            row[nx] = zero;
            for j in 1..nx {
                row[j] = cen[j] * mid[j] + (mid[j - 1] + mid[j + 1]) * ox + (below[j] + above[j]) * oy;
            }
        });
    }

    /// Dimension of the interior system.
    pub fn unknowns(&self) -> usize {
        (self.grid.nx - 1) * (self.grid.ny - 1)
    }
}

fn dot<T: Real>(g: &Grid2D<T>, a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    // Σ conj(a) b over interior nodes.
    let w = g.row_len();
    reduce::rows(1..g.ny, 1..g.nx, |k, j| a[k * w + j].conj() * b[k * w + j])
}

fn norm<T: Real>(g: &Grid2D<T>, a: &[Complex<T>]) -> T {
    let w = g.row_len();
    reduce::rows(1..g.ny, 1..g.nx, |k, j| a[k * w + j].norm_sqr()).sqrt()
}

/// Solves `A W = b` by BiCGStab starting from `guess` (zero if `None`).
///
/// Succeeds when `‖AW - b‖ ≤ tol·‖b‖`; `b = 0` returns `W = 0` immediately.
pub fn bicgstab<T: Real>(
    sys: &LinearSystem<T>,
    guess: Option<&ComplexField<T>>,
    tol: T,
    max_iters: usize,
) -> Result<(ComplexField<T>, SolveStats)> {
    Krylov::default().solve(sys, guess, tol, max_iters)
}

/// Scratch vectors for [`bicgstab`], reusable across solves of the same
/// size.
#[derive(Debug, Clone, Default)]
pub struct Krylov<T> {
    r: Vec<Complex<T>>,
    r_hat: Vec<Complex<T>>,
    p: Vec<Complex<T>>,
    v: Vec<Complex<T>>,
    s: Vec<Complex<T>>,
    t: Vec<Complex<T>>,
}

impl<T: Real> Krylov<T> {
    pub fn solve(
        &mut self,
        sys: &LinearSystem<T>,
        guess: Option<&ComplexField<T>>,
        tol: T,
        max_iters: usize,
    ) -> Result<(ComplexField<T>, SolveStats)> {
        let g = sys.grid;
        let n = g.len();
        let zero = Complex::new(T::zero(), T::zero());
        let b = sys.rhs.values();
        let bnorm = norm(&g, b);
        if bnorm == T::zero() {
            return Ok((ComplexField::zeros(g), SolveStats { iterations: 0, rel_residual: 0.0 }));
        }
        let mut x = match guess {
            Some(w) => {
                if !w.grid().same_space(&g) {
                    return Err(Error::GridMismatch("initial guess not on system grid"));
                }
                let mut x = w.clone();
                x.zero_boundary();
                x
            }
            None => ComplexField::zeros(g),
        };
        let zero_fill = |buf: &mut Vec<Complex<T>>| {
            buf.clear();
            buf.resize(n, zero);
        };
        let Krylov { r, r_hat, p, v, s, t } = self;
        for buf in [&mut *r, &mut *r_hat, &mut *p, &mut *v, &mut *s, &mut *t] {
            zero_fill(buf);
        }
        sys.apply(x.values(), r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = *bi - *ri;
        }
        let target = tol * bnorm;
        let mut rnorm = norm(&g, r);
        if rnorm <= target {
            return Ok((x, SolveStats { iterations: 0, rel_residual: (rnorm / bnorm).as_f64() }));
        }
        r_hat.copy_from_slice(r);
        let one = Complex::new(T::one(), T::zero());
        let (mut rho, mut alpha, mut omega) = (one, one, one);
        let tiny = T::min_positive_value().sqrt();

        for it in 1..=max_iters {
            let rho_new = dot(&g, r_hat, r);
            if rho_new.norm() <= tiny * rnorm * rnorm {
                // Shadow residual became orthogonal: restart from the current r.
                r_hat.copy_from_slice(r);
                p.iter_mut().for_each(|z| *z = zero);
                v.iter_mut().for_each(|z| *z = zero);
                rho = one;
                alpha = one;
                omega = one;
                continue;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            sys.apply(p, v);
            let denom = dot(&g, r_hat, v);
            if denom.norm() == T::zero() {
                return Err(Error::NonConvergence {
                    solver: "BiCGStab",
                    iterations: it,
                    residual: (rnorm / bnorm).as_f64(),
                    history: Vec::new(),
                });
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            let snorm = norm(&g, s);
            if snorm <= target {
                let xs = x.values_mut();
                for i in 0..n {
                    xs[i] += alpha * p[i];
                }
                return Ok((x, SolveStats { iterations: it, rel_residual: (snorm / bnorm).as_f64() }));
            }
            sys.apply(s, t);
            let tt = dot(&g, t, t).re;
            omega = if tt > T::zero() { dot(&g, t, s) / tt } else { zero };
            let xs = x.values_mut();
            for i in 0..n {
                xs[i] = xs[i] + alpha * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
            rnorm = norm(&g, r);
            if !rnorm.is_finite() {
                return Err(Error::NonFinite("BiCGStab residual"));
            }
            if rnorm <= target {
                return Ok((x, SolveStats { iterations: it, rel_residual: (rnorm / bnorm).as_f64() }));
            }
            if omega.norm() == T::zero() {
                r_hat.copy_from_slice(r);
                rho = one;
                alpha = one;
                omega = one;
                p.iter_mut().for_each(|z| *z = zero);
                v.iter_mut().for_each(|z| *z = zero);
            }
        }
        Err(Error::NonConvergence {
            solver: "BiCGStab",
            iterations: max_iters,
            residual: (rnorm / bnorm).as_f64(),
            history: Vec::new(),
        })
    }
}

/// Largest interior system (nodes) accepted by [`solve_direct`].
pub const DIRECT_MAX_UNKNOWNS: usize = 63 * 63;

/// Banded LU solve of the interior system (no pivoting; the step matrix has
/// a definite real part after multiplication by `-i`). Limited to grids up
/// to 64×64 intervals.
pub fn solve_direct<T: Real>(sys: &LinearSystem<T>) -> Result<ComplexField<T>> {
    let g = sys.grid;
    let (mx, my) = (g.nx - 1, g.ny - 1);
    let n = mx * my;
    if n > DIRECT_MAX_UNKNOWNS {
        return Err(Error::InvalidArgument(format!("direct solve limited to {DIRECT_MAX_UNKNOWNS} unknowns, got {n}")));
    }
    let bw = mx;
    let width = 2 * bw + 1;
    let zero = Complex::new(T::zero(), T::zero());
    // band[i*width + (c - i + bw)] = A[i][c]
    let mut band = vec![zero; n * width];
    let mut rhs = vec![zero; n];
    let node = |i: usize| g.index(i % mx + 1, i / mx + 1);
    let ox = Complex::new(sys.off_x, T::zero());
    let oy = Complex::new(sys.off_y, T::zero());
    for i in 0..n {
        let (jx, ky) = (i % mx, i / mx);
        let row = &mut band[i * width..(i + 1) * width];
        row[bw] = sys.center[node(i)];
        if jx > 0 {
            row[bw - 1] = ox;
        }
        if jx + 1 < mx {
            row[bw + 1] = ox;
        }
        if ky > 0 {
            row[0] = oy;
        }
        if ky + 1 < my {
            row[2 * bw] = oy;
        }
        rhs[i] = sys.rhs.values()[node(i)];
    }
    for kcol in 0..n {
        let piv = band[kcol * width + bw];
        if piv.norm() == T::zero() {
            return Err(Error::InvalidArgument("zero pivot in banded LU".into()));
        }
        let last = (kcol + bw).min(n - 1);
        for i in kcol + 1..=last {
            let f = band[i * width + (kcol + bw - i)] / piv;
            if f == zero {
                continue;
            }
            band[i * width + (kcol + bw - i)] = zero;
            for c in kcol + 1..=(kcol + bw).min(n - 1) {
                let u = band[kcol * width + (c + bw - kcol)];
                band[i * width + (c + bw - i)] -= f * u;
            }
            rhs[i] = rhs[i] - f * rhs[kcol];
        }
    }
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for c in i + 1..=(i + bw).min(n - 1) {
            acc -= band[i * width + (c + bw - i)] * rhs[c];
        }
        rhs[i] = acc / band[i * width + bw];
    }
    let mut out = ComplexField::zeros(g);
    for (i, v) in rhs.into_iter().enumerate() {
        out.values_mut()[node(i)] = v;
    }
    Ok(out)
}

/// Relative residual `‖A w - b‖/‖b‖` (0 when both vanish).
pub fn relative_residual<T: Real>(sys: &LinearSystem<T>, w: &ComplexField<T>) -> T {
    let g = sys.grid;
    let mut aw = vec![Complex::new(T::zero(), T::zero()); g.len()];
    sys.apply(w.values(), &mut aw);
    for (a, b) in aw.iter_mut().zip(sys.rhs.values()) {
        *a -= *b;
    }
    let bn = norm(&g, sys.rhs.values());
    let rn = norm(&g, &aw);
    if bn == T::zero() {
        rn
    } else {
        rn / bn
    }
}
