//! Accelerated imaginary-time evolution (AITEM) for the soliton profile
//! equation
//!
//! ```text
//! Δv + g·v³/(1+v²) = μ v,     ‖v‖²_{2,h} = P,
//! ```
//!
//! with `g = 1` for the physical problem. Power is prescribed and `μ` is
//! an output. The Laplacian and the preconditioner `M = c - Δ` are applied
//! spectrally on the periodic cell.
//!
//! Each iteration, with `L₀v = Δv + g v³/(1+v²)`:
//!
//! ```text
//! μ  = ⟨M⁻¹L₀v, v⟩ / ⟨M⁻¹v, v⟩
//! v ← v + dt·M⁻¹(L₀v - μv),  then rescale to power P.
//! ```

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::ops;
use crate::scalar::{Complex, Real};
use crate::spectral::{self, SpectralWorkspace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AitemConfig<T> {
    /// Pseudo-time step.
    pub dt: T,
    /// Preconditioner shift `c > 0`.
    pub c: T,
    /// Stop when `‖L₀v - μv‖_{2,h}/‖v‖_{2,h} ≤ tol`.
    pub tol: T,
    pub max_iters: usize,
    pub target_power: T,
    /// Weight `g` of the saturable term (1 for the soliton equation, 0
    /// gives the linear eigenproblem).
    pub coupling: T,
}

impl<T: Real> AitemConfig<T> {
    /// `dt = 1.2`, `c = 1.5`, `tol = 1e-10`, 20000 iterations.
    pub fn new(target_power: T) -> Self {
        Self {
            dt: T::lit(1.2),
            c: T::lit(1.5),
            tol: T::lit(1e-10),
            max_iters: 20_000,
            target_power,
            coupling: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        if !pos(self.dt) || !pos(self.c) || !pos(self.tol) || !pos(self.target_power) {
            return Err(Error::InvalidArgument("AITEM dt, c, tol and target power must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("AITEM max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Converged soliton profile.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundState<T> {
    /// Profile projected into X_JK (boundary zeroed).
    pub v: RealField<T>,
    pub mu: T,
    /// `‖v‖²_{2,h}` of the projected profile.
    pub power: T,
    /// Relative equation residual at convergence (periodic cell).
    pub residual: T,
    /// Relative residual after zeroing the boundary.
    pub projected_residual: T,
    /// Largest boundary value removed by the projection.
    pub boundary_tail: T,
    pub iterations: usize,
}

/// `sech((x-x0)² + (y-y0)²)`.
pub fn sech_seed<T: Real>(grid: &crate::grid::Grid2D<T>, x0: T, y0: T) -> RealField<T> {
    RealField::from_fn(*grid, |x, y| {
        let r2 = (x - x0) * (x - x0) + (y - y0) * (y - y0);
        T::one() / r2.cosh()
    })
}

struct Spectra<T> {
    mu: T,
    residual: T,
    /// `M⁻¹(L₀v - μv)` in spectral layout.
    step: Vec<Complex<T>>,
}

fn evaluate<T: Real>(cell: &[Complex<T>], cfg: &AitemConfig<T>, ws: &mut SpectralWorkspace<T>) -> Result<Spectra<T>> {
    let mut vh = cell.to_vec();
    ws.forward(&mut vh);
    let mut nh: Vec<Complex<T>> = cell
        .iter()
        .map(|z| {
            let v = z.re;
            let v2 = v * v;
            Complex::new(cfg.coupling * v * v2 / (T::one() + v2), T::zero())
        })
        .collect();
    ws.forward(&mut nh);
    let ksq = ws.ksq();
    let n = ksq.len();
    // L₀v̂ in place of nh.
    for i in 0..n {
        nh[i] -= vh[i] * ksq[i];
    }
    let minv = |i: usize| T::one() / (cfg.c + ksq[i]);
    let num = crate::reduce::pairwise(0, n, &|i| (nh[i] * vh[i].conj()).re * minv(i));
    let den = crate::reduce::pairwise(0, n, &|i| vh[i].norm_sqr() * minv(i));
    if !(den > T::zero()) {
        return Err(Error::InvalidArgument("AITEM iterate is zero".into()));
    }
    let mu = num / den;
    let res2 = crate::reduce::pairwise(0, n, &|i| (nh[i] - vh[i] * mu).norm_sqr());
    let v2 = crate::reduce::pairwise(0, n, &|i| vh[i].norm_sqr());
    let residual = (res2 / v2).sqrt();
    if !mu.is_finite() || !residual.is_finite() {
        return Err(Error::NonFinite("AITEM iterate"));
    }
    let step = (0..n).map(|i| (nh[i] - vh[i] * mu) * minv(i)).collect();
    Ok(Spectra { mu, residual, step })
}

fn rescale<T: Real>(cell: &mut [Complex<T>], ws: &SpectralWorkspace<T>, power: T) -> Result<()> {
    let p = spectral::cell_mass(ws.grid(), cell);
    if !(p > T::zero()) || !p.is_finite() {
        return Err(Error::NonFinite("AITEM power normalisation"));
    }
    let s = (power / p).sqrt();
    cell.iter_mut().for_each(|z| *z = Complex::new(z.re * s, T::zero()));
    Ok(())
}

/// One AITEM update. Returns the rescaled new iterate, and `μ` and the
/// relative residual of the input `v`.
pub fn aitem_iterate<T: Real>(
    v: &RealField<T>,
    cfg: &AitemConfig<T>,
    ws: &mut SpectralWorkspace<T>,
) -> Result<(RealField<T>, T, T)> {
    cfg.validate()?;
    let mut cell = ws.to_cell(v)?;
    let sp = evaluate(&cell, cfg, ws)?;
    let mut upd = sp.step;
    ws.inverse(&mut upd);
    for (z, d) in cell.iter_mut().zip(&upd) {
        *z = Complex::new(z.re + cfg.dt * d.re, T::zero());
    }
    rescale(&mut cell, ws, cfg.target_power)?;
    let out = cell_to_real(&cell, v.grid());
    Ok((out, sp.mu, sp.residual))
}

fn cell_to_real<T: Real>(cell: &[Complex<T>], grid: &crate::grid::Grid2D<T>) -> RealField<T> {
    // keep the full periodic cell, including the j=0 / k=0 nodes
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = RealField::zeros(*grid);
    for k in 0..ny {
        for j in 0..nx {
            out.set(j, k, cell[k * nx + j].re);
        }
    }
    out
}

/// Iterates [`aitem_iterate`] from `initial_guess` until the residual
/// drops below `cfg.tol`.
pub fn solve_ground_state<T: Real>(
    initial_guess: &RealField<T>,
    cfg: &AitemConfig<T>,
    ws: &mut SpectralWorkspace<T>,
) -> Result<GroundState<T>> {
    cfg.validate()?;
    let grid = *initial_guess.grid();
    let mut cell = ws.to_cell(initial_guess)?;
    if cell.iter().all(|z| z.re == T::zero()) {
        return Err(Error::InvalidArgument("initial guess is zero".into()));
    }
    rescale(&mut cell, ws, cfg.target_power)?;
    let mut history = Vec::new();
    let mut rises = 0usize;
    // AITEM residuals are not monotone early on.
    let transient = 50;
    for it in 0..=cfg.max_iters {
        let sp = evaluate(&cell, cfg, ws)?;
        if it > transient && history.last().is_some_and(|&last: &T| sp.residual > last) {
            rises += 1;
        }
        history.push(sp.residual);
        if it % 500 == 0 {
            debug!("AITEM iter {it}: mu = {}, residual = {:e}", sp.mu, sp.residual);
        }
        if sp.residual <= cfg.tol {
            if rises > 0 {
                warn!("AITEM residual increased on {rises} iterations after the initial transient");
            }
            return finish(ws, &cell, &grid, cfg, sp.mu, sp.residual, it);
        }
        if it == cfg.max_iters {
            break;
        }
        let mut upd = sp.step;
        ws.inverse(&mut upd);
        for (z, d) in cell.iter_mut().zip(&upd) {
            *z = Complex::new(z.re + cfg.dt * d.re, T::zero());
        }
        rescale(&mut cell, ws, cfg.target_power)?;
    }
    let last = history.last().copied().unwrap_or(T::infinity());
    Err(Error::NonConvergence {
        solver: "AITEM",
        iterations: cfg.max_iters,
        residual: last.as_f64(),
        history: history.into_iter().map(|r| r.as_f64()).collect(),
    })
}

fn finish<T: Real>(
    ws: &mut SpectralWorkspace<T>,
    cell: &[Complex<T>],
    grid: &crate::grid::Grid2D<T>,
    cfg: &AitemConfig<T>,
    mu: T,
    residual: T,
    iterations: usize,
) -> Result<GroundState<T>> {
    let mut v = cell_to_real(cell, grid);
    let boundary_tail = v.zero_boundary();
    let projected = ws.to_cell(&v.map(|x| Complex::new(x, T::zero())))?;
    let projected_residual = evaluate(&projected, cfg, ws)?.residual;
    let power = ops::norm_2h_sq(&v);
    Ok(GroundState { v, mu, power, residual, projected_residual, boundary_tail, iterations })
}

/// Equation residual `‖Δv + g v³/(1+v²) - μv‖_{2,h}/‖v‖_{2,h}` of a real
/// field for a given `μ`, with the spectral Laplacian.
pub fn equation_residual<T: Real>(v: &RealField<T>, mu: T, coupling: T, ws: &mut SpectralWorkspace<T>) -> Result<T> {
    let cell = ws.to_cell(v)?;
    let lap = ws.laplacian_cell(&cell);
    let g = *ws.grid();
    let r: Vec<Complex<T>> = cell
        .iter()
        .zip(&lap)
        .map(|(z, l)| {
            let x = z.re;
            let x2 = x * x;
            Complex::new(l.re + coupling * x * x2 / (T::one() + x2) - mu * x, T::zero())
        })
        .collect();
    Ok((spectral::cell_mass(&g, &r) / spectral::cell_mass(&g, &cell)).sqrt())
}

/// Rayleigh-type quotient `⟨L₀v, v⟩_h / ⟨v, v⟩_h` (spectral Laplacian).
pub fn rayleigh_mu<T: Real>(v: &RealField<T>, coupling: T, ws: &mut SpectralWorkspace<T>) -> Result<T> {
    let cell = ws.to_cell(v)?;
    let lap = ws.laplacian_cell(&cell);
    let g = *ws.grid();
    let l0: Vec<Complex<T>> = cell
        .iter()
        .zip(&lap)
        .map(|(z, l)| {
            let x = z.re;
            let x2 = x * x;
            Complex::new(l.re + coupling * x * x2 / (T::one() + x2), T::zero())
        })
        .collect();
    Ok(spectral::cell_inner(&g, &l0, &cell).re / spectral::cell_mass(&g, &cell))
}

/// Spectrally interpolates a converged profile onto another grid of the
/// same domain, for use as a warm start.
pub fn resample_profile<T: Real>(
    v: &RealField<T>,
    src: &mut SpectralWorkspace<T>,
    dst: &mut SpectralWorkspace<T>,
) -> Result<RealField<T>> {
    let cell = src.to_cell(v)?;
    let fine = spectral::resample(src, dst, &cell)?;
    let g = *dst.grid();
    let mut out = cell_to_real(&fine, &g);
    out.zero_boundary();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    fn setup(half: f64, h: f64) -> (Grid2D<f64>, SpectralWorkspace<f64>) {
        let g = Grid2D::from_spacing([-half, half, -half, half], h, 1.0, 0.5).unwrap();
        (g, SpectralWorkspace::new(g))
    }

    #[test]
    fn pohozaev_identity_fixes_mu() {
        // In 2D, multiplying the profile equation by x·∇v gives
        // μ ∫v² = ∫F(v²), F(ρ) = ρ - ln(1+ρ).
        let (g, mut ws) = setup(24.0, 0.25);
        let gs = solve_ground_state(&sech_seed(&g, 0.0, 0.0), &AitemConfig::new(22.5), &mut ws).unwrap();
        let f = ops::grid_sum(&gs.v, |v: f64| crate::saturable::pot(v * v));
        let pohozaev = f / ops::norm_2h_sq(&gs.v);
        assert!((gs.mu - pohozaev).abs() <= 1e-6 * gs.mu, "{} vs {pohozaev}", gs.mu);
        assert!(gs.residual <= 1e-10);
        let rq = rayleigh_mu(&gs.v, 1.0, &mut ws).unwrap();
        assert!((rq - gs.mu).abs() <= 1e-6 * gs.mu);
        let projected = equation_residual(&gs.v, gs.mu, 1.0, &mut ws).unwrap();
        assert!((projected - gs.projected_residual).abs() <= 1e-6 * gs.projected_residual);
        assert!((gs.power - 22.5).abs() <= 1e-6 * 22.5);
    }

    #[test]
    fn iterate_keeps_the_prescribed_power() {
        let (g, mut ws) = setup(10.0, 0.25);
        let cfg = AitemConfig::new(7.0);
        let mut v = sech_seed(&g, 0.5, -0.5);
        for _ in 0..5 {
            let (next, mu, res) = aitem_iterate(&v, &cfg, &mut ws).unwrap();
            assert!(mu.is_finite() && res.is_finite());
            let cell = ws.to_cell(&next).unwrap();
            let p = spectral::cell_mass(&g, &cell);
            assert!((p - 7.0).abs() <= 1e-13 * 7.0);
            v = next;
        }
    }

    #[test]
    fn centred_profile_is_symmetric() {
        let (g, mut ws) = setup(12.0, 0.25);
        let gs = solve_ground_state(&sech_seed(&g, 0.0, 0.0), &AitemConfig::new(15.0), &mut ws).unwrap();
        let peak = ops::norm_inf(&gs.v);
        for k in 0..=g.ny {
            for j in 0..=g.nx {
                let v = gs.v.at(j, k);
                assert!((v - gs.v.at(g.nx - j, k)).abs() <= 1e-12 * peak);
                assert!((v - gs.v.at(j, g.ny - k)).abs() <= 1e-12 * peak);
                assert!((v - gs.v.at(k, j)).abs() <= 1e-12 * peak);
            }
        }
        assert_eq!(gs.v.argmax_modulus().1, (g.nx / 2, g.ny / 2));
    }

    #[test]
    fn linear_problem_converges_to_the_flat_mode() {
        // Without the nonlinear term the lowest state of Δ on the periodic
        // cell is the constant, with μ = 0.
        let (g, mut ws) = setup(3.0, 0.25);
        let mut cfg = AitemConfig::new(2.0);
        cfg.coupling = 0.0;
        let gs = solve_ground_state(&sech_seed(&g, 0.0, 0.0), &cfg, &mut ws).unwrap();
        assert!(gs.mu.abs() <= 1e-10, "{}", gs.mu);
        let c = gs.v.at(1, 1);
        for k in 1..g.ny {
            for j in 1..g.nx {
                assert!((gs.v.at(j, k) - c).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn bad_inputs_are_reported() {
        let (g, mut ws) = setup(4.0, 0.5);
        let cfg = AitemConfig::new(1.0);
        assert!(solve_ground_state(&RealField::zeros(g), &cfg, &mut ws).is_err());
        let mut few = cfg;
        few.max_iters = 3;
        match solve_ground_state(&sech_seed(&g, 0.0, 0.0), &few, &mut ws) {
            Err(Error::NonConvergence { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 4);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        let mut neg = cfg;
        neg.dt = -1.0;
        assert!(neg.validate().is_err());
    }
}
