//! Saturable nonlinearity `f(s) = s/(1+s)`, its potential
//! `F(ρ) = ρ - ln(1+ρ)`, the scheme's nonlinear averages and the discrete
//! energies.

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::ops;
use crate::scalar::{Complex, Real};

/// Coupling `λ` of the saturable term and cubic-loss coefficient `ε ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams<T> {
    pub lambda: T,
    pub epsilon: T,
}

impl<T: Real> PhysicsParams<T> {
    pub fn new(lambda: T, epsilon: T) -> Result<Self> {
        if !lambda.is_finite() || !epsilon.is_finite() {
            return Err(Error::InvalidArgument("lambda and epsilon must be finite".into()));
        }
        if epsilon < T::zero() {
            return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be >= 0")));
        }
        Ok(Self { lambda, epsilon })
    }
}

/// `f(s) = s/(1+s)` for `s ≥ 0`.
pub fn saturation<T: Real>(s: T) -> Result<T> {
    if !(s >= T::zero()) {
        return Err(Error::InvalidArgument(format!("f(s) needs s >= 0, got {s}")));
    }
    Ok(sat(s))
}

#[inline]
pub(crate) fn sat<T: Real>(s: T) -> T {
    s / (T::one() + s)
}

/// `F(ρ) = ρ - ln(1+ρ)`, evaluated with `ln_1p`.
pub fn potential<T: Real>(rho: T) -> Result<T> {
    if !(rho >= T::zero()) {
        return Err(Error::InvalidArgument(format!("F(rho) needs rho >= 0, got {rho}")));
    }
    Ok(pot(rho))
}

#[inline]
pub(crate) fn pot<T: Real>(rho: T) -> T {
    // Below ~1e-4 the difference ρ - ln1p(ρ) loses digits; the series
    // ρ²/2 - ρ³/3 + ρ⁴/4 - ρ⁵/5 is exact to rounding there.
    if rho < T::lit(1e-4) {
        let r2 = rho * rho;
        r2 * (T::lit(0.5) - rho * (T::lit(1.0 / 3.0) - rho * (T::lit(0.25) - rho * T::lit(0.2))))
    } else {
        rho - rho.ln_1p()
    }
}

/// Relative gap below which [`diff_quotient`] returns the midpoint value.
#[inline]
fn switch_threshold<T: Real>() -> T {
    T::lit(1e-7).max(T::epsilon().sqrt())
}

/// `(F(a) - F(b))/(a - b) = ∫₀¹ f(b + t(a-b)) dt` for `a, b ≥ 0`.
///
/// When `|a-b| ≤ 1e-7·max(1,a,b)` the midpoint value `f((a+b)/2)` is
/// returned. Otherwise the numerator is formed as
/// `(a-b) - ln1p((a-b)/(1+b))`.
#[inline]
pub fn diff_quotient<T: Real>(a: T, b: T) -> T {
    let d = a - b;
    let scale = T::one().max(a).max(b);
    if d.abs() <= switch_threshold::<T>() * scale {
        sat(T::lit(0.5) * (a + b))
    } else {
        T::one() - (d / (T::one() + b)).ln_1p() / d
    }
}

/// `ψ(z,w) = q(|z|²,|w|²)·(z+w)/2` with `q` the difference quotient of `F`.
#[inline]
pub fn psi<T: Real>(z: Complex<T>, w: Complex<T>) -> Complex<T> {
    let q = diff_quotient(z.norm_sqr(), w.norm_sqr());
    (z + w) * (T::lit(0.5) * q)
}

/// `φ(z,w) = |m|² m` with `m = (z+w)/2`.
#[inline]
pub fn phi<T: Real>(z: Complex<T>, w: Complex<T>) -> Complex<T> {
    let m = (z + w) * T::lit(0.5);
    m * m.norm_sqr()
}

/// `E_h(u) = |u|²_{1,h} - λ ‖F(|u|²)‖_{1,h}`.
pub fn energy<T: Real>(u: &ComplexField<T>, params: &PhysicsParams<T>) -> T {
    ops::seminorm_1h_sq(u) - params.lambda * potential_sum(u)
}

/// `‖F(|u|²)‖_{1,h}` over the norm index range.
pub fn potential_sum<T: Real>(u: &ComplexField<T>) -> T {
    ops::grid_sum(u, |z| pot(z.norm_sqr()))
}

/// `𝓔_h(u) = |u|²_{1,h}`.
pub fn kinetic_energy<T: Real>(u: &ComplexField<T>) -> T {
    ops::seminorm_1h_sq(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;

    #[test]
    fn saturation_values() {
        assert_eq!(saturation(0.0).unwrap(), 0.0);
        assert_eq!(saturation(1.0).unwrap(), 0.5);
        // 1e6/(1e6+1) = 0.999999000000999999...
        assert!((saturation(1e6f64).unwrap() - 0.999_999_000_001).abs() < 1e-15);
        assert!(saturation(-1e-3).is_err());
    }

    #[test]
    fn potential_values() {
        assert_eq!(potential(0.0).unwrap(), 0.0);
        assert!((potential(1.0).unwrap() - (1.0 - 2f64.ln())).abs() < 1e-15);
        let r: f64 = 1e-8;
        let series = r * r / 2.0 - r * r * r / 3.0;
        assert!((potential(r).unwrap() - series).abs() / series < 1e-6);
        assert!(potential(-1.0).is_err());
        // both branches agree at the series cutoff
        let lo = pot(1e-4f64 * (1.0 - 1e-12));
        let hi = pot(1e-4f64);
        assert!((lo - hi).abs() / hi < 1e-9);
    }

    #[test]
    fn quotient_limits() {
        assert_eq!(diff_quotient(1.0, 1.0), 0.5);
        assert!((diff_quotient(1.0, 0.0) - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((diff_quotient(0.0, 1.0) - (1.0 - 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn psi_phi_examples() {
        let z0 = Complex::new(0.0, 0.0);
        assert_eq!(psi(z0, z0), z0);
        assert_eq!(phi(z0, z0), z0);
        let z = Complex::new(0.3, -1.2);
        let expect = z * sat(z.norm_sqr());
        assert!((psi(z, z) - expect).norm() < 1e-15);
        let p = psi(Complex::new(1.0, 0.0), Complex::new(0.0, 1.0));
        assert!((p - Complex::new(0.25, 0.25)).norm() < 1e-15);
        assert_eq!(phi(Complex::new(2.0, 0.0), z0), Complex::new(1.0, 0.0));
        assert_eq!(phi(Complex::new(1.0, 1.0), Complex::new(1.0, -1.0)), Complex::new(1.0, 0.0));
    }

    #[test]
    fn energy_edge_cases() {
        let g = Grid2D::<f64>::new([0.0, 1.0, 0.0, 1.0], 6, 6, 1.0, 2).unwrap();
        let zero = ComplexField::zeros(g);
        let p = PhysicsParams::new(1.0, 0.0).unwrap();
        assert_eq!(energy(&zero, &p), 0.0);
        let u = ComplexField::from_fn(g, |x, y| Complex::new(x * y, x - y));
        let free = PhysicsParams::new(0.0, 0.3).unwrap();
        assert_eq!(energy(&u, &free), ops::seminorm_1h_sq(&u));
        let mut v = u.clone();
        let alpha = Complex::new(0.6, -1.1);
        v.scale(alpha);
        let ratio = kinetic_energy(&v) / kinetic_energy(&u);
        assert!((ratio - alpha.norm_sqr()).abs() < 1e-13);
    }

    #[test]
    fn negative_epsilon_rejected() {
        assert!(PhysicsParams::new(1.0, -0.1).is_err());
        assert!(PhysicsParams::new(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn single_precision_quotient_is_stable() {
        let q: f32 = diff_quotient(1.0, 1.0 + 1e-6);
        assert!((q - 0.5).abs() < 1e-6);
    }
}
