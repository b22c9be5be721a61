//! Periodic spectral machinery on the grid's `J×K` cell.
//!
//! The node grid is treated as one period of a periodic function: nodes
//! `j = 0..J-1`, `k = 0..K-1` form the cell and the last node row/column is
//! the periodic image of the first. Converting back to a grid field zeroes
//! all boundary nodes (X_JK projection).

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Field, FieldValue};
use crate::grid::Grid2D;
use crate::reduce;
use crate::scalar::{Complex, Real};

/// FFT plans, wavenumbers and cached propagator phases for one grid.
///
/// Spectra are stored transposed: mode `(p, q)` (x-mode `p`, y-mode `q`)
/// sits at `p*K + q`.
pub struct SpectralWorkspace<T: Real> {
    grid: Grid2D<T>,
    fft_x: Arc<dyn Fft<T>>,
    ifft_x: Arc<dyn Fft<T>>,
    fft_y: Arc<dyn Fft<T>>,
    ifft_y: Arc<dyn Fft<T>>,
    scratch: Vec<Complex<T>>,
    tbuf: Vec<Complex<T>>,
    kx: Vec<T>,
    ky: Vec<T>,
    ksq: Vec<T>,
    phase_cache: Option<(T, Vec<Complex<T>>)>,
}

/// DFT-ordered angular wavenumbers for `n` samples over period `len`.
pub fn wavenumbers<T: Real>(n: usize, len: T) -> Vec<T> {
    let base = T::lit(2.0) * T::PI() / len;
    (0..n)
        .map(|m| {
            let signed = if m <= (n - 1) / 2 { m as f64 } else { m as f64 - n as f64 };
            // Nyquist mode of an even-length transform sits at -n/2.
            base * T::lit(signed)
        })
        .collect()
}

impl<T: Real> SpectralWorkspace<T> {
    pub fn new(grid: Grid2D<T>) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut planner = FftPlanner::new();
        let fft_x = planner.plan_fft_forward(nx);
        let ifft_x = planner.plan_fft_inverse(nx);
        let fft_y = planner.plan_fft_forward(ny);
        let ifft_y = planner.plan_fft_inverse(ny);
        let scratch_len =
            [&fft_x, &ifft_x, &fft_y, &ifft_y].iter().map(|f| f.get_inplace_scratch_len()).max().unwrap_or(0);
        let kx = wavenumbers(nx, grid.b - grid.a);
        let ky = wavenumbers(ny, grid.d - grid.c);
        let ksq: Vec<T> = kx.iter().flat_map(|&a| ky.iter().map(move |&b| a * a + b * b)).collect();
        let zero = Complex::new(T::zero(), T::zero());
        Self {
            grid,
            fft_x,
            ifft_x,
            fft_y,
            ifft_y,
            scratch: vec![zero; scratch_len],
            tbuf: vec![zero; nx * ny],
            kx,
            ky,
            ksq,
            phase_cache: None,
        }
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }

    pub fn cell_len(&self) -> usize {
        self.grid.nx * self.grid.ny
    }

    pub fn kx(&self) -> &[T] {
        &self.kx
    }

    pub fn ky(&self) -> &[T] {
        &self.ky
    }

    /// `|k|²` in spectral layout.
    pub fn ksq(&self) -> &[T] {
        &self.ksq
    }

    pub fn check_grid(&self, grid: &Grid2D<T>) -> Result<()> {
        if self.grid.same_space(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch("spectral workspace built for a different grid"))
        }
    }

    /// Copies the periodic cell of `u` (nodes `j<J`, `k<K`).
    pub fn to_cell<E: FieldValue<T> + Into<Complex<T>>>(&self, u: &Field<E, T>) -> Result<Vec<Complex<T>>> {
        self.check_grid(u.grid())?;
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut cell = Vec::with_capacity(nx * ny);
        for k in 0..ny {
            cell.extend(u.values()[k * (nx + 1)..k * (nx + 1) + nx].iter().map(|&v| v.into()));
        }
        Ok(cell)
    }

    /// Writes a cell back as a grid field with all boundary nodes zero.
    /// Returns the field and the largest discarded boundary modulus.
    pub fn from_cell(&self, cell: &[Complex<T>]) -> (ComplexField<T>, T) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut out = ComplexField::zeros(self.grid);
        let mut dropped = T::zero();
        for k in 0..ny {
            for j in 0..nx {
                let v = cell[k * nx + j];
                if j == 0 || k == 0 {
                    dropped = dropped.max(v.norm());
                } else {
                    out.set(j, k, v);
                }
            }
        }
        (out, dropped)
    }

    /// In-place forward 2D DFT (unnormalized). Output is in spectral layout.
    pub fn forward(&mut self, data: &mut [Complex<T>]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        assert_eq!(data.len(), nx * ny, "cell length");
        self.fft_x.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.tbuf, ny, nx);
        self.fft_y.process_with_scratch(&mut self.tbuf, &mut self.scratch);
        data.copy_from_slice(&self.tbuf);
    }

    /// In-place inverse 2D DFT including the `1/(JK)` factor. Input is in
    /// spectral layout, output in cell layout.
    pub fn inverse(&mut self, data: &mut [Complex<T>]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        assert_eq!(data.len(), nx * ny, "cell length");
        self.ifft_y.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.tbuf, nx, ny);
        self.ifft_x.process_with_scratch(&mut self.tbuf, &mut self.scratch);
        let s = T::one() / T::of_usize(nx * ny);
        for (d, t) in data.iter_mut().zip(&self.tbuf) {
            *d = *t * s;
        }
    }

    /// `exp(-i|k|² dt)` in spectral layout, cached for the last `dt`.
    pub fn linear_phases(&mut self, dt: T) -> &[Complex<T>] {
        let stale = !matches!(&self.phase_cache, Some((c, _)) if *c == dt);
        if stale {
            let ph = self.ksq.iter().map(|&k2| Complex::from_polar(T::one(), -k2 * dt)).collect();
            self.phase_cache = Some((dt, ph));
        }
        &self.phase_cache.as_ref().expect("cache filled").1
    }

    /// Applies `exp(iΔ dt)` to a cell in place: exact propagation of
    /// `i u_t + Δu = 0` over `dt`.
    pub fn propagate_cell(&mut self, cell: &mut [Complex<T>], dt: T) {
        self.forward(cell);
        self.linear_phases(dt);
        let phases = &self.phase_cache.as_ref().expect("cache filled").1;
        for (c, p) in cell.iter_mut().zip(phases) {
            *c *= *p;
        }
        self.inverse(cell);
    }

    /// Spectral Laplacian of a cell (returns a new cell).
    pub fn laplacian_cell(&mut self, cell: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut buf = cell.to_vec();
        self.forward(&mut buf);
        for (c, k2) in buf.iter_mut().zip(&self.ksq) {
            *c *= -*k2;
        }
        self.inverse(&mut buf);
        buf
    }

    /// Shifts a cell by `(sx, sy)` using band-limited (Fourier)
    /// interpolation: output(x, y) = input(x - sx, y - sy).
    pub fn shift_cell(&mut self, cell: &[Complex<T>], sx: T, sy: T) -> Vec<Complex<T>> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut buf = cell.to_vec();
        self.forward(&mut buf);
        for p in 0..nx {
            // Nyquist modes are not representable as a real shift; drop them.
            let kxp = if nx % 2 == 0 && p == nx / 2 { None } else { Some(self.kx[p]) };
            for q in 0..ny {
                let kyq = if ny % 2 == 0 && q == ny / 2 { None } else { Some(self.ky[q]) };
                let idx = p * ny + q;
                buf[idx] = match (kxp, kyq) {
                    (Some(a), Some(b)) => buf[idx] * Complex::from_polar(T::one(), -(a * sx + b * sy)),
                    _ => Complex::new(T::zero(), T::zero()),
                };
            }
        }
        self.inverse(&mut buf);
        buf
    }
}

/// Band-limited resampling of a cell from `src`'s grid to `dst`'s grid (same
/// domain). Modes present on both grids are copied; the rest are zero.
pub fn resample<T: Real>(
    src: &mut SpectralWorkspace<T>,
    dst: &mut SpectralWorkspace<T>,
    cell: &[Complex<T>],
) -> Result<Vec<Complex<T>>> {
    let (gs, gd) = (src.grid, dst.grid);
    if gs.a != gd.a || gs.b != gd.b || gs.c != gd.c || gs.d != gd.d {
        return Err(Error::GridMismatch("resampling needs a common domain"));
    }
    let mut spec = cell.to_vec();
    src.forward(&mut spec);
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = vec![zero; dst.cell_len()];
    // signed mode m of an n-point transform, None for the Nyquist mode
    let signed = |m: usize, n: usize| -> Option<i64> {
        if n.is_multiple_of(2) && m == n / 2 {
            None
        } else if m <= (n - 1) / 2 {
            Some(m as i64)
        } else {
            Some(m as i64 - n as i64)
        }
    };
    let slot = |s: i64, n: usize| -> Option<usize> {
        let half = ((n - 1) / 2) as i64;
        if s.abs() > half {
            None
        } else if s >= 0 {
            Some(s as usize)
        } else {
            Some((s + n as i64) as usize)
        }
    };
    let scale = T::of_usize(gd.nx * gd.ny) / T::of_usize(gs.nx * gs.ny);
    for p in 0..gs.nx {
        let Some(dp) = signed(p, gs.nx).and_then(|s| slot(s, gd.nx)) else { continue };
        for q in 0..gs.ny {
            let Some(dq) = signed(q, gs.ny).and_then(|s| slot(s, gd.ny)) else { continue };
            out[dp * gd.ny + dq] = spec[p * gs.ny + q] * scale;
        }
    }
    dst.inverse(&mut out);
    Ok(out)
}

/// `dst[c*rows + r] = src[r*cols + c]`.
fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    const B: usize = 32;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// `ΔxΔy Σ |c|²` over a cell (equals `‖·‖²_{2,h}` of the field it came from).
pub fn cell_mass<T: Real>(grid: &Grid2D<T>, cell: &[Complex<T>]) -> T {
    let nx = grid.nx;
    reduce::rows(0..grid.ny, 0..nx, |k, j| cell[k * nx + j].norm_sqr()) * grid.dx * grid.dy
}

/// `ΔxΔy Σ a b̄` over a cell.
pub fn cell_inner<T: Real>(grid: &Grid2D<T>, a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    let nx = grid.nx;
    reduce::rows(0..grid.ny, 0..nx, |k, j| a[k * nx + j] * b[k * nx + j].conj()) * (grid.dx * grid.dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn grid(nx: usize, ny: usize) -> Grid2D<f64> {
        Grid2D::new([-3.0, 5.0, -2.0, 2.0], nx, ny, 1.0, 4).unwrap()
    }

    #[test]
    fn wavenumber_ordering() {
        let k = wavenumbers::<f64>(4, 2.0 * std::f64::consts::PI);
        assert_eq!(k, vec![0.0, 1.0, -2.0, -1.0]);
        let k = wavenumbers::<f64>(5, 2.0 * std::f64::consts::PI);
        assert_eq!(k, vec![0.0, 1.0, 2.0, -2.0, -1.0]);
    }

    #[test]
    fn round_trip() {
        let g = grid(24, 18);
        let mut ws = SpectralWorkspace::new(g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let orig: Vec<Complex<f64>> =
            (0..ws.cell_len()).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let mut buf = orig.clone();
        ws.forward(&mut buf);
        ws.inverse(&mut buf);
        let err = buf.iter().zip(&orig).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-13, "round trip error {err}");
    }

    #[test]
    fn spectral_layout_matches_mode_index() {
        let g = grid(16, 8);
        let mut ws = SpectralWorkspace::new(g);
        let (p, q) = (3usize, 2usize);
        let mut cell: Vec<Complex<f64>> = (0..8)
            .flat_map(|k| (0..16).map(move |j| (j, k)))
            .map(|(j, k)| {
                let th = 2.0 * std::f64::consts::PI * (p as f64 * j as f64 / 16.0 + q as f64 * k as f64 / 8.0);
                Complex::from_polar(1.0, th)
            })
            .collect();
        ws.forward(&mut cell);
        let peak = cell.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
        assert_eq!(peak, p * 8 + q);
        assert!((cell[peak].norm() - 128.0).abs() < 1e-10);
    }

    #[test]
    fn fourier_shift_is_exact_for_modes() {
        let g = grid(32, 16);
        let mut ws = SpectralWorkspace::new(g);
        let (kx, ky) = (ws.kx()[2], ws.ky()[15]);
        let f = |x: f64, y: f64| Complex::from_polar(1.0, kx * x + ky * y);
        let cell: Vec<_> = (0..16).flat_map(|k| (0..32).map(move |j| (j, k))).map(|(j, k)| f(g.x(j), g.y(k))).collect();
        let shifted = ws.shift_cell(&cell, 0.37, -0.21);
        for k in 0..16 {
            for j in 0..32 {
                let want = f(g.x(j) - 0.37, g.y(k) + 0.21);
                assert!((shifted[k * 32 + j] - want).norm() < 1e-12);
            }
        }
    }
}
