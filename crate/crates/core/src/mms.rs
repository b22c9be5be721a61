//! Manufactured solutions: closed-form fields `u` from a small catalog,
//! the source `r = i u_t + Δu + λ u|u|²/(1+|u|²) + iε u|u|²` that makes
//! them exact solutions of the forced equation, and a refinement study
//! measuring the CNFD error against them.

use crate::cnfd::{CnfdConfig, CnfdStepper};
use crate::error::{Error, Result};
use crate::evolve;
use crate::field::ComplexField;
use crate::forcing::Forcing;
use crate::grid::Grid2D;
use crate::metrics;
use crate::ops;
use crate::saturable::PhysicsParams;
use crate::scalar::{Complex, Real};

/// Catalog of manufactured solutions. All vanish on the boundary of the
/// rectangle they are evaluated on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MmsCase<T> {
    Zero,
    /// `u = amp · e^{-iωt} sin(mπξ) sin(nπη)` with `ξ, η ∈ [0,1]` the
    /// normalised coordinates.
    SineMode {
        amp: T,
        m: u32,
        n: u32,
        omega: T,
    },
    /// `u = amp · G(x,y) sin(πξ) sin(πη) · (1 + β sin νt) e^{-iωt}` with
    /// `G = exp(-((x-xc)² + (y-yc)²)/σ²)`.
    GaussianSine {
        amp: T,
        xc: T,
        yc: T,
        sigma: T,
        omega: T,
        beta: T,
        nu: T,
    },
}

impl<T: Real> MmsCase<T> {
    /// The Gaussian case used by the default study.
    pub fn default_gaussian() -> Self {
        MmsCase::GaussianSine {
            amp: T::lit(1.5),
            xc: T::lit(0.45),
            yc: T::lit(0.55),
            sigma: T::lit(0.4),
            omega: T::lit(2.0),
            beta: T::lit(0.5),
            nu: T::lit(3.0),
        }
    }

    /// Looks a case up by name (`zero`, `sine-mode`, `gaussian-sine`).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(MmsCase::Zero),
            "sine-mode" => Ok(MmsCase::SineMode { amp: T::one(), m: 1, n: 2, omega: T::lit(2.0) }),
            "gaussian-sine" => Ok(Self::default_gaussian()),
            other => Err(Error::InvalidArgument(format!(
                "unknown manufactured solution '{other}' (expected zero, sine-mode or gaussian-sine)"
            ))),
        }
    }
}

/// Value, first time derivative and Laplacian of `u` at one point.
#[derive(Debug, Clone, Copy)]
pub struct Jet<T> {
    pub u: Complex<T>,
    pub u_t: Complex<T>,
    pub lap: Complex<T>,
}

/// 1-D factor and its first two derivatives.
fn sine_factor<T: Real>(s: T, lo: T, len: T, m: u32) -> (T, T, T) {
    let k = T::PI() * T::of_usize(m as usize) / len;
    let (sn, cs) = (k * (s - lo)).sin_cos();
    (sn, k * cs, -k * k * sn)
}

fn gauss_sine_factor<T: Real>(s: T, lo: T, len: T, c: T, sigma: T) -> (T, T, T) {
    let d = s - c;
    let s2 = sigma * sigma;
    let e = (-(d * d) / s2).exp();
    let e1 = -T::lit(2.0) * d / s2 * e;
    let e2 = (T::lit(4.0) * d * d / (s2 * s2) - T::lit(2.0) / s2) * e;
    let (g, g1, g2) = sine_factor(s, lo, len, 1);
    (e * g, e1 * g + e * g1, e2 * g + T::lit(2.0) * e1 * g1 + e * g2)
}

/// Closed-form value, time derivative and Laplacian.
pub fn jet<T: Real>(case: &MmsCase<T>, grid: &Grid2D<T>, x: T, y: T, t: T) -> Jet<T> {
    let (lx, ly) = (grid.b - grid.a, grid.d - grid.c);
    let zero = Complex::new(T::zero(), T::zero());
    match *case {
        MmsCase::Zero => Jet { u: zero, u_t: zero, lap: zero },
        MmsCase::SineMode { amp, m, n, omega } => {
            let (fx, _, fx2) = sine_factor(x, grid.a, lx, m);
            let (fy, _, fy2) = sine_factor(y, grid.c, ly, n);
            let phase = Complex::from_polar(amp, -omega * t);
            Jet {
                u: phase * (fx * fy),
                u_t: phase * Complex::new(T::zero(), -omega) * (fx * fy),
                lap: phase * (fx2 * fy + fx * fy2),
            }
        }
        MmsCase::GaussianSine { amp, xc, yc, sigma, omega, beta, nu } => {
            let (fx, _, fx2) = gauss_sine_factor(x, grid.a, lx, xc, sigma);
            let (fy, _, fy2) = gauss_sine_factor(y, grid.c, ly, yc, sigma);
            let (snt, cst) = (nu * t).sin_cos();
            let env = T::one() + beta * snt;
            let rot = Complex::from_polar(amp, -omega * t);
            let time = rot * env;
            let time_t = rot * Complex::new(beta * nu * cst, -omega * env);
            Jet { u: time * (fx * fy), u_t: time_t * (fx * fy), lap: time * (fx2 * fy + fx * fy2) }
        }
    }
}

/// `r = i u_t + Δu + λ u ρ/(1+ρ) + iε u ρ`, `ρ = |u|²`, from a jet.
pub fn source_from_jet<T: Real>(j: &Jet<T>, params: &PhysicsParams<T>) -> Complex<T> {
    let i = Complex::new(T::zero(), T::one());
    let rho = j.u.norm_sqr();
    i * j.u_t + j.lap + j.u * (params.lambda * rho / (T::one() + rho)) + i * j.u * (params.epsilon * rho)
}

/// Source field injector for a catalog case.
#[derive(Debug, Clone, Copy)]
pub struct MmsSource<T> {
    pub case: MmsCase<T>,
    pub params: PhysicsParams<T>,
}

impl<T: Real> MmsSource<T> {
    pub fn new(case: MmsCase<T>, params: PhysicsParams<T>) -> Self {
        Self { case, params }
    }

    /// `u(·, t)` sampled on the interior, zero on the boundary.
    pub fn exact(&self, grid: &Grid2D<T>, t: T) -> ComplexField<T> {
        ComplexField::from_fn(*grid, |x, y| jet(&self.case, grid, x, y, t).u)
    }
}

impl<T: Real> Forcing<T> for MmsSource<T> {
    fn sample(&self, grid: &Grid2D<T>, t: T) -> ComplexField<T> {
        ComplexField::from_fn(*grid, |x, y| source_from_jet(&jet(&self.case, grid, x, y, t), &self.params))
    }
}

/// Builds the source injector for `case` (the grid is only checked for
/// consistency with the case's domain assumptions).
pub fn mms_source<T: Real>(case: MmsCase<T>, grid: &Grid2D<T>, params: PhysicsParams<T>) -> Result<MmsSource<T>> {
    if let MmsCase::GaussianSine { sigma, .. } = case {
        if !(sigma > T::zero()) {
            return Err(Error::InvalidArgument("Gaussian width must be positive".into()));
        }
    }
    let _ = grid;
    Ok(MmsSource::new(case, params))
}

/// Errors of one refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsLevel {
    pub h: f64,
    pub tau: f64,
    /// `max_n ‖u(t_n) - U^n‖_{2,h}`.
    pub err_2h: f64,
    /// `max_n |u(t_n) - U^n|_{1,h}`.
    pub err_1h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsStudy {
    pub levels: Vec<MmsLevel>,
    /// Observed orders between consecutive levels, `(‖·‖_{2,h}, |·|_{1,h})`.
    pub orders: Vec<(f64, f64)>,
}

/// Runs the forced CNFD scheme for every `h` in `hs` with `τ = tau_ratio·h`
/// up to `t_final` and records the maximum-in-time errors.
pub fn mms_study<T: Real>(
    case: MmsCase<T>,
    bounds: [T; 4],
    params: PhysicsParams<T>,
    hs: &[T],
    tau_ratio: T,
    t_final: T,
    configure: impl Fn(&mut CnfdConfig<T>),
) -> Result<MmsStudy> {
    let mut levels = Vec::new();
    for &h in hs {
        let grid = Grid2D::from_spacing(bounds, h, t_final, tau_ratio * h)?;
        let src = mms_source(case, &grid, params)?;
        let mut cfg = CnfdConfig::new(grid, params);
        configure(&mut cfg);
        let mut stepper = CnfdStepper::new(cfg)?.with_forcing(&src);
        let u0 = src.exact(&grid, T::zero());
        let mut e2 = T::zero();
        let mut e1 = T::zero();
        let mut failure = None;
        evolve::run(&mut stepper, &u0, &[], grid.n_steps, |_, t, u| match src.exact(&grid, t).sub(u) {
            Ok(diff) => {
                e2 = e2.max(ops::norm_2h(&diff));
                e1 = e1.max(ops::seminorm_1h(&diff));
            }
            Err(e) => failure = Some(e),
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        log::info!("MMS h = {h}: err_2h = {e2:e}, err_1h = {e1:e}");
        levels.push(MmsLevel { h: h.as_f64(), tau: grid.tau.as_f64(), err_2h: e2.as_f64(), err_1h: e1.as_f64() });
    }
    let orders = levels
        .windows(2)
        .map(|w| {
            let refine = (w[0].h / w[1].h).log2();
            Ok((
                metrics::observed_rate(w[0].err_2h, w[1].err_2h)? / refine,
                metrics::observed_rate(w[0].err_1h, w[1].err_1h)? / refine,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MmsStudy { levels, orders })
}
