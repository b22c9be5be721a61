//! Moving-soliton setup and the approximate analytic description used to
//! judge the solvers: initial condition, amplitude law, theoretical
//! modulus profile and amplitude extraction.

use crate::aitem::GroundState;
use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::Grid2D;
use crate::ops;
use crate::saturable::PhysicsParams;
use crate::scalar::{Complex, Real};
use crate::spectral::SpectralWorkspace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonParams<T> {
    /// Initial amplitude parameter `A₀ > 0`.
    pub a0: T,
    pub x0: T,
    pub y0: T,
    /// Velocity `(d₁, d₂)`.
    pub d1: T,
    pub d2: T,
    /// Initial phase `α₀`.
    pub alpha0: T,
}

impl<T: Real> SolitonParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [self.a0, self.x0, self.y0, self.d1, self.d2, self.alpha0];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("soliton parameters must be finite".into()));
        }
        if !(self.a0 > T::zero()) {
            return Err(Error::InvalidArgument(format!("A0 = {} must be positive", self.a0)));
        }
        Ok(())
    }

    /// Phase wavenumbers `(d₁/2, d₂/2)`.
    pub fn phase_wavenumbers(&self) -> (T, T) {
        let h = T::lit(0.5);
        (self.d1 * h, self.d2 * h)
    }

    /// Centre `(x₀ + d₁t, y₀ + d₂t)`.
    pub fn center(&self, t: T) -> (T, T) {
        (self.x0 + self.d1 * t, self.y0 + self.d2 * t)
    }
}

/// How the ground state is sampled at shifted (off-grid) positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Band-limited shift in Fourier space.
    Spectral,
    Bilinear,
}

/// `u₀ = A₀ v₀(X₀,Y₀) exp[i α₀ + i(d₁X₀ + d₂Y₀)/2]`, `X₀ = x - x₀`.
///
/// `v0` must already be centred at `(x₀, y₀)` (the ground-state solver is
/// seeded there), so no resampling happens.
pub fn build_initial_condition<T: Real>(
    v0: &GroundState<T>,
    p: &SolitonParams<T>,
    grid: &Grid2D<T>,
) -> Result<ComplexField<T>> {
    p.validate()?;
    if !v0.v.grid().same_space(grid) {
        return Err(Error::GridMismatch("ground state is not on the requested grid"));
    }
    check_support(&v0.v, p)?;
    let (k1, k2) = p.phase_wavenumbers();
    let mut u = ComplexField::zeros(*grid);
    for k in 1..grid.ny {
        for j in 1..grid.nx {
            let (x, y) = grid.node(j, k);
            let (xr, yr) = (x - p.x0, y - p.y0);
            let amp = p.a0 * v0.v.at(j, k);
            u.set(j, k, Complex::from_polar(amp, p.alpha0 + k1 * xr + k2 * yr));
        }
    }
    Ok(u)
}

fn check_support<T: Real>(v: &RealField<T>, p: &SolitonParams<T>) -> Result<()> {
    let g = *v.grid();
    let (_, (jm, km)) = v.argmax_modulus();
    let (xm, ym) = g.node(jm, km);
    if (xm - p.x0).abs() > g.dx || (ym - p.y0).abs() > g.dy {
        return Err(Error::InvalidArgument(format!(
            "ground state peaks at ({xm}, {ym}), not at the soliton centre ({}, {})",
            p.x0, p.y0
        )));
    }
    let total = ops::norm_2h_sq(v);
    let edge = ops::grid_sum(&frame(v), |x| x * x);
    if edge > T::lit(1e-8) * total {
        return Err(Error::InvalidArgument(format!(
            "soliton carries {:e} of its power next to the boundary",
            (edge / total).as_f64()
        )));
    }
    Ok(())
}

/// Values on the outermost interior ring, zero elsewhere.
fn frame<T: Real>(v: &RealField<T>) -> RealField<T> {
    let g = *v.grid();
    let mut out = RealField::zeros(g);
    for k in 1..g.ny {
        for j in 1..g.nx {
            if j == 1 || k == 1 || j == g.nx - 1 || k == g.ny - 1 {
                out.set(j, k, v.at(j, k));
            }
        }
    }
    out
}

/// `‖u₀‖⁴_{4,h} / ‖u₀‖²_{2,h}`.
pub fn quartic_ratio<T: Real>(u0: &ComplexField<T>) -> T {
    let n4 = ops::grid_sum(u0, |z| {
        let r = z.norm_sqr();
        r * r
    });
    n4 / ops::norm_2h_sq(u0)
}

/// `A(t) = A₀ [1 + 2ε ‖u₀‖⁴₄ ‖u₀‖₂⁻² A₀⁴ t]^{-1/2}` with grid norms.
pub fn amplitude_theory<T: Real>(t: T, u0: &ComplexField<T>, p: &SolitonParams<T>, params: &PhysicsParams<T>) -> T {
    amplitude_from_ratio(t, quartic_ratio(u0), p, params)
}

fn amplitude_from_ratio<T: Real>(t: T, ratio: T, p: &SolitonParams<T>, params: &PhysicsParams<T>) -> T {
    let a4 = p.a0.powi(4);
    p.a0 / (T::one() + T::lit(2.0) * params.epsilon * ratio * a4 * t).sqrt()
}

/// `|u_th(x,y,t)| = A(t) v(x - x₀ - d₁t, y - y₀ - d₂t)` where `v` is the
/// ground state centred at `(x₀, y₀)`. The boundary is zeroed.
pub fn theoretical_profile_modulus<T: Real>(
    v: &GroundState<T>,
    p: &SolitonParams<T>,
    params: &PhysicsParams<T>,
    t: T,
    interp: Interpolation,
    ws: &mut SpectralWorkspace<T>,
) -> Result<RealField<T>> {
    p.validate()?;
    let g = *v.v.grid();
    let (cx, cy) = p.center(t);
    if cx < g.a || cx > g.b || cy < g.c || cy > g.d {
        return Err(Error::InvalidArgument(format!("soliton centre ({cx}, {cy}) at t = {t} has left the domain")));
    }
    let ratio = {
        let n4 = ops::grid_sum(&v.v, |x| x.powi(4));
        p.a0 * p.a0 * n4 / ops::norm_2h_sq(&v.v)
    };
    let amp = amplitude_from_ratio(t, ratio, p, params);
    let (sx, sy) = (p.d1 * t, p.d2 * t);
    let mut out = match interp {
        Interpolation::Spectral => {
            let cell = ws.to_cell(&v.v)?;
            let shifted = ws.shift_cell(&cell, sx, sy);
            let mut f = RealField::zeros(g);
            for k in 0..g.ny {
                for j in 0..g.nx {
                    f.set(j, k, shifted[k * g.nx + j].re);
                }
            }
            f
        }
        Interpolation::Bilinear => bilinear_shift(&v.v, sx, sy),
    };
    out.zero_boundary();
    out.values_mut().iter_mut().for_each(|x| *x = (*x * amp).abs());
    Ok(out)
}

/// `out(x, y) = v(x - sx, y - sy)` by bilinear interpolation, zero outside.
pub fn bilinear_shift<T: Real>(v: &RealField<T>, sx: T, sy: T) -> RealField<T> {
    let g = *v.grid();
    RealField::from_fn(g, |x, y| {
        let fx = (x - sx - g.a) / g.dx;
        let fy = (y - sy - g.c) / g.dy;
        if fx < T::zero() || fy < T::zero() || fx > T::of_usize(g.nx) || fy > T::of_usize(g.ny) {
            return T::zero();
        }
        let j0 = fx.floor().to_usize().unwrap_or(0).min(g.nx - 1);
        let k0 = fy.floor().to_usize().unwrap_or(0).min(g.ny - 1);
        let (tx, ty) = (fx - T::of_usize(j0), fy - T::of_usize(k0));
        let one = T::one();
        v.at(j0, k0) * (one - tx) * (one - ty)
            + v.at(j0 + 1, k0) * tx * (one - ty)
            + v.at(j0, k0 + 1) * (one - tx) * ty
            + v.at(j0 + 1, k0 + 1) * tx * ty
    })
}

/// How an amplitude is read off a numerical field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmplitudeExtraction {
    /// `‖u‖_{2,h} / ‖v_ref‖_{2,h}`.
    #[default]
    Mass,
    /// `max|u| / max v_ref`.
    Peak,
}

/// Amplitude probe bound to a reference profile.
#[derive(Debug, Clone, Copy)]
pub struct AmplitudeProbe<T> {
    how: AmplitudeExtraction,
    scale: T,
}

impl<T: Real> AmplitudeProbe<T> {
    pub fn new(vref: &GroundState<T>, how: AmplitudeExtraction) -> Result<Self> {
        let scale = match how {
            AmplitudeExtraction::Mass => ops::norm_2h(&vref.v),
            AmplitudeExtraction::Peak => ops::norm_inf(&vref.v),
        };
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::InvalidArgument("reference ground state is zero".into()));
        }
        Ok(Self { how, scale })
    }

    pub fn measure(&self, u: &ComplexField<T>) -> T {
        let m = match self.how {
            AmplitudeExtraction::Mass => ops::norm_2h(u),
            AmplitudeExtraction::Peak => ops::norm_inf(u),
        };
        m / self.scale
    }
}

/// Mass-based amplitude `‖u‖_{2,h} / ‖v_ref‖_{2,h}`.
pub fn measure_amplitude<T: Real>(u: &ComplexField<T>, vref: &GroundState<T>) -> Result<T> {
    measure_amplitude_by(u, vref, AmplitudeExtraction::Mass)
}

pub fn measure_amplitude_by<T: Real>(
    u: &ComplexField<T>,
    vref: &GroundState<T>,
    how: AmplitudeExtraction,
) -> Result<T> {
    Ok(AmplitudeProbe::new(vref, how)?.measure(u))
}
