//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use satnls::grid::Grid2D;
use satnls::linsolve::LinearSystem;
use satnls::{Complex, ComplexField};

pub type C = Complex<f64>;

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `∫₀¹ g(t) dt` with 20-point Gauss–Legendre on pieces that shrink
/// geometrically toward both endpoints, so integrands with poles just
/// outside [0, 1] are still resolved.
pub fn integrate_unit(g: impl Fn(f64) -> f64) -> f64 {
    let rule = gauss_legendre(20);
    let mut breaks = vec![0.0];
    for k in (1..=40).rev() {
        breaks.push(0.5f64.powi(k + 1));
    }
    breaks.push(0.5);
    for k in 1..=40 {
        breaks.push(1.0 - 0.5f64.powi(k + 1));
    }
    breaks.push(1.0);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        total += half * rule.iter().map(|&(x, wt)| wt * g(mid + half * x)).sum::<f64>();
    }
    total
}

/// `∫₀¹ f(b + t(a-b)) dt` with `f(s) = s/(1+s)`.
pub fn quotient_by_quadrature(a: f64, b: f64) -> f64 {
    integrate_unit(|t| {
        let s = b + t * (a - b);
        s / (1.0 + s)
    })
}

/// Classical RK4 for the pointwise flow `z' = iλ z ρ/(1+ρ) - ε z ρ`.
pub fn rk4_flow(z0: C, t: f64, lambda: f64, eps: f64, steps: usize) -> C {
    let f = |z: C| {
        let rho = z.norm_sqr();
        z * C::new(-eps * rho, lambda * rho / (1.0 + rho))
    };
    let dt = t / steps as f64;
    let mut z = z0;
    for _ in 0..steps {
        let k1 = f(z);
        let k2 = f(z + k1 * (dt / 2.0));
        let k3 = f(z + k2 * (dt / 2.0));
        let k4 = f(z + k3 * dt);
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    z
}

/// Dense interior matrix of `σ I + κ δ² + diag(d)`, written straight from
/// the five-point stencil. Unknowns are ordered row by row.
pub fn dense_operator(g: &Grid2D<f64>, shift: C, kappa: f64, diag: &[C]) -> Vec<Vec<C>> {
    let (mx, my) = (g.nx - 1, g.ny - 1);
    let n = mx * my;
    let mut a = vec![vec![C::new(0.0, 0.0); n]; n];
    let (ax, ay) = (kappa / (g.dx * g.dx), kappa / (g.dy * g.dy));
    for ky in 0..my {
        for jx in 0..mx {
            let p = ky * mx + jx;
            a[p][p] = shift + diag[g.index(jx + 1, ky + 1)] - C::new(2.0 * (ax + ay), 0.0);
            if jx > 0 {
                a[p][p - 1] = C::new(ax, 0.0);
            }
            if jx + 1 < mx {
                a[p][p + 1] = C::new(ax, 0.0);
            }
            if ky > 0 {
                a[p][p - mx] = C::new(ay, 0.0);
            }
            if ky + 1 < my {
                a[p][p + mx] = C::new(ay, 0.0);
            }
        }
    }
    a
}

/// Largest entry-wise gap between the assembled operator (probed with unit
/// vectors) and the dense stencil matrix, relative to the largest diagonal.
pub fn assembly_gap(g: &Grid2D<f64>, shift: C, kappa: f64, diag: &[C]) -> f64 {
    let sys = LinearSystem::new(*g, shift, kappa, diag, ComplexField::zeros(*g)).unwrap();
    let dense = dense_operator(g, shift, kappa, diag);
    let nodes: Vec<usize> = (1..g.ny).flat_map(|k| (1..g.nx).map(move |j| g.index(j, k))).collect();
    let scale = (0..nodes.len()).map(|p| dense[p][p].norm()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for (q, &nq) in nodes.iter().enumerate() {
        let mut e = vec![C::new(0.0, 0.0); g.len()];
        e[nq] = C::new(1.0, 0.0);
        let mut col = vec![C::new(0.0, 0.0); g.len()];
        sys.apply(&e, &mut col);
        for (p, &np) in nodes.iter().enumerate() {
            worst = worst.max((col[np] - dense[p][q]).norm());
        }
        // nothing may leak onto the boundary
        for k in 0..=g.ny {
            for j in 0..=g.nx {
                if g.is_boundary(j, k) {
                    worst = worst.max(col[g.index(j, k)].norm());
                }
            }
        }
    }
    worst / scale
}

/// Complex field from raw parts with the boundary cleared.
pub fn field_from(g: Grid2D<f64>, parts: &[(f64, f64)]) -> ComplexField {
    let vals = parts.iter().map(|&(re, im)| C::new(re, im)).collect();
    let mut u = ComplexField::from_values(g, vals).unwrap();
    u.zero_boundary();
    u
}
