//! Conservative Crank–Nicolson finite-difference stepper.
//!
//! Each step solves
//!
//! ```text
//! i δ⁺_t U^n + δ² U^{n+1/2} + λ ψ(U^{n+1}, U^n) + i ε φ(U^{n+1}, U^n) = r^{n+1/2}
//! ```
//!
//! on interior nodes (`r` is an optional manufactured forcing, zero for the
//! physical problem). The nonlinearity is handled by fixed-point iteration:
//! the coefficients `q = (F(|U^{n,l}|²) - F(|U^n|²))/(|U^{n,l}|² - |U^n|²)`
//! and `m² = |(U^{n,l} + U^n)/2|²` are frozen at the previous iterate, which
//! leaves one linear system per iteration.

use std::time::Instant;

use log::warn;

use crate::error::{Error, Result};
use crate::evolve::{self, StepDiagnostics, Stepper, Trajectory};
use crate::field::ComplexField;
use crate::forcing::Forcing;
use crate::grid::Grid2D;
use crate::linsolve::{self, Krylov, LinearSystem, SolveStats};
use crate::ops;
use crate::saturable::{self, PhysicsParams};
use crate::scalar::{Complex, Real};

/// Inner linear solver used by each fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolverKind {
    /// Matrix-free BiCGStab.
    Krylov,
    /// Banded LU; grids up to 64×64 intervals only.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnfdConfig<T> {
    pub grid: Grid2D<T>,
    pub params: PhysicsParams<T>,
    /// Relative fixed-point increment accepted as converged.
    pub fp_tol: T,
    pub fp_max_iters: usize,
    /// Relative residual for each inner linear solve.
    pub lin_tol: T,
    pub lin_max_iters: usize,
    pub linear_solver: LinearSolverKind,
    pub snapshot_times: Vec<T>,
}

impl<T: Real> CnfdConfig<T> {
    /// Defaults: `fp_tol = 1e-8`, `lin_tol = 1e-10`, 50 fixed-point
    /// iterations, `10·max(J,K)` linear iterations.
    pub fn new(grid: Grid2D<T>, params: PhysicsParams<T>) -> Self {
        Self {
            grid,
            params,
            fp_tol: T::lit(1e-8),
            fp_max_iters: 50,
            lin_tol: T::lit(1e-10),
            lin_max_iters: 10 * grid.nx.max(grid.ny),
            linear_solver: LinearSolverKind::Krylov,
            snapshot_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v > T::zero() && v < T::one();
        if !unit(self.fp_tol) || !unit(self.lin_tol) {
            return Err(Error::InvalidArgument("fp_tol and lin_tol must lie in (0,1)".into()));
        }
        if self.lin_tol > self.fp_tol / T::lit(10.0) {
            return Err(Error::InvalidArgument(format!(
                "lin_tol {} must not exceed fp_tol/10 = {}",
                self.lin_tol,
                self.fp_tol / T::lit(10.0)
            )));
        }
        if self.fp_max_iters == 0 || self.lin_max_iters == 0 {
            return Err(Error::InvalidArgument("iteration limits must be >= 1".into()));
        }
        if self.linear_solver == LinearSolverKind::Direct
            && (self.grid.nx - 1) * (self.grid.ny - 1) > linsolve::DIRECT_MAX_UNKNOWNS
        {
            return Err(Error::InvalidArgument("direct linear solver limited to 64x64 grids".into()));
        }
        evolve::snapshot_steps(&self.grid, &self.snapshot_times, self.grid.n_steps)?;
        Ok(())
    }
}

fn check_inputs<T: Real>(cfg: &CnfdConfig<T>, fields: &[&ComplexField<T>]) -> Result<()> {
    for f in fields {
        if !f.grid().same_space(&cfg.grid) {
            return Err(Error::GridMismatch("field is not on the configured grid"));
        }
    }
    Ok(())
}

/// Pointwise scheme residual
/// `i(U^{n+1}-U^n)/τ + δ²U^{n+1/2} + λψ + iεφ - r^{n+1/2}` on interior
/// nodes, zero on the boundary.
pub fn cnfd_residual<T: Real>(
    next: &ComplexField<T>,
    cur: &ComplexField<T>,
    cfg: &CnfdConfig<T>,
    source: Option<&ComplexField<T>>,
) -> Result<ComplexField<T>> {
    check_inputs(cfg, &[next, cur])?;
    if let Some(s) = source {
        check_inputs(cfg, &[s])?;
    }
    let g = cfg.grid;
    let half = T::lit(0.5);
    let mut mid = next.clone();
    for (m, c) in mid.values_mut().iter_mut().zip(cur.values()) {
        *m = (*m + *c) * half;
    }
    let lap = ops::laplacian(&mid);
    let i = Complex::new(T::zero(), T::one());
    let inv_tau = T::one() / g.tau;
    let PhysicsParams { lambda, epsilon } = cfg.params;
    let mut out = ComplexField::zeros(g);
    for k in 1..g.ny {
        for j in 1..g.nx {
            let (z, w) = (next.at(j, k), cur.at(j, k));
            let mut r = i * (z - w) * inv_tau
                + lap.at(j, k)
                + saturable::psi(z, w) * lambda
                + i * saturable::phi(z, w) * epsilon;
            if let Some(s) = source {
                r -= s.at(j, k);
            }
            out.set(j, k, r);
        }
    }
    Ok(out)
}

/// Linear system for one fixed-point iteration:
/// `[i/τ + ½(δ² + λq + iεm²)] W = iU^n/τ - ½(δ² + λq + iεm²) U^n + r`,
/// with `q`, `m²` frozen at the iterate `ul`.
pub fn build_step_system<T: Real>(
    un: &ComplexField<T>,
    ul: &ComplexField<T>,
    cfg: &CnfdConfig<T>,
    source: Option<&ComplexField<T>>,
) -> Result<LinearSystem<T>> {
    check_inputs(cfg, &[un, ul])?;
    if let Some(s) = source {
        check_inputs(cfg, &[s])?;
    }
    let base = step_base(un, cfg, source);
    assemble(un, ul, &base, cfg)
}

/// Part of the right-hand side that does not change across fixed-point
/// iterations: `iU^n/τ - ½δ²U^n + r` on the interior.
fn step_base<T: Real>(un: &ComplexField<T>, cfg: &CnfdConfig<T>, source: Option<&ComplexField<T>>) -> ComplexField<T> {
    let g = cfg.grid;
    let half = T::lit(0.5);
    let i = Complex::new(T::zero(), T::one());
    let inv_tau = T::one() / g.tau;
    let mut base = ops::laplacian(un);
    for k in 1..g.ny {
        for j in 1..g.nx {
            let idx = g.index(j, k);
            let w = un.values()[idx];
            let mut b = i * w * inv_tau - base.values()[idx] * half;
            if let Some(s) = source {
                b += s.values()[idx];
            }
            base.values_mut()[idx] = b;
        }
    }
    base
}

fn assemble<T: Real>(
    un: &ComplexField<T>,
    ul: &ComplexField<T>,
    base: &ComplexField<T>,
    cfg: &CnfdConfig<T>,
) -> Result<LinearSystem<T>> {
    let g = cfg.grid;
    let half = T::lit(0.5);
    let PhysicsParams { lambda, epsilon } = cfg.params;
    let coef: Vec<Complex<T>> = un
        .values()
        .iter()
        .zip(ul.values())
        .map(|(&w, &z)| {
            let q = saturable::diff_quotient(z.norm_sqr(), w.norm_sqr());
            let m2 = ((z + w) * half).norm_sqr();
            Complex::new(lambda * q, epsilon * m2) * half
        })
        .collect();
    let mut rhs = base.clone();
    for ((r, c), w) in rhs.values_mut().iter_mut().zip(&coef).zip(un.values()) {
        *r -= *c * *w;
    }
    rhs.zero_boundary();
    let i = Complex::new(T::zero(), T::one());
    LinearSystem::new(g, i / g.tau, half, &coef, rhs)
}

/// Solves one step system with the configured inner solver.
pub fn solve_linear<T: Real>(
    sys: &LinearSystem<T>,
    kind: LinearSolverKind,
    guess: Option<&ComplexField<T>>,
    tol: T,
    max_iters: usize,
) -> Result<(ComplexField<T>, SolveStats)> {
    solve_with(&mut Krylov::default(), sys, kind, guess, tol, max_iters)
}

fn solve_with<T: Real>(
    krylov: &mut Krylov<T>,
    sys: &LinearSystem<T>,
    kind: LinearSolverKind,
    guess: Option<&ComplexField<T>>,
    tol: T,
    max_iters: usize,
) -> Result<(ComplexField<T>, SolveStats)> {
    match kind {
        LinearSolverKind::Krylov => krylov.solve(sys, guess, tol, max_iters),
        LinearSolverKind::Direct => {
            let w = linsolve::solve_direct(sys)?;
            let res = linsolve::relative_residual(sys, &w).as_f64();
            Ok((w, SolveStats { iterations: 1, rel_residual: res }))
        }
    }
}

/// Stepping session: owns the configuration, the optional forcing and the
/// reference mass used by the monotonicity check.
pub struct CnfdStepper<'a, T: Real> {
    cfg: CnfdConfig<T>,
    forcing: Option<&'a dyn Forcing<T>>,
    initial_mass: Option<T>,
    last_mass: Option<T>,
    krylov: Krylov<T>,
    /// Number of steps whose mass exceeded the monotonicity slack.
    pub mass_warnings: usize,
}

impl<'a, T: Real> CnfdStepper<'a, T> {
    pub fn new(cfg: CnfdConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            forcing: None,
            initial_mass: None,
            last_mass: None,
            krylov: Krylov::default(),
            mass_warnings: 0,
        })
    }

    /// Adds a source `r(x,y,t)` sampled at `t_{n+1/2}` each step.
    pub fn with_forcing(mut self, forcing: &'a dyn Forcing<T>) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn config(&self) -> &CnfdConfig<T> {
        &self.cfg
    }

    /// Advances `U^n` to `U^{n+1}`.
    pub fn advance(&mut self, un: &ComplexField<T>, n: usize) -> Result<(ComplexField<T>, StepDiagnostics)> {
        let started = Instant::now();
        check_inputs(&self.cfg, &[un])?;
        let cfg = &self.cfg;
        let source = self.forcing.map(|f| f.sample(&cfg.grid, cfg.grid.t(n) + T::lit(0.5) * cfg.grid.tau));
        let base = step_base(un, cfg, source.as_ref());
        let mut ul = un.clone();
        let mut lin_iters = 0;
        let mut last_inc = T::infinity();
        for l in 1..=cfg.fp_max_iters {
            let sys = assemble(un, &ul, &base, cfg)?;
            let (w, stats) =
                solve_with(&mut self.krylov, &sys, cfg.linear_solver, Some(&ul), cfg.lin_tol, cfg.lin_max_iters)?;
            lin_iters += stats.iterations;
            let inc = ops::norm_2h(&w.sub(&ul)?);
            let size = ops::norm_2h(&w);
            if !inc.is_finite() || !size.is_finite() {
                return Err(Error::NonFinite("fixed-point iterate"));
            }
            let rel = if size == T::zero() { inc } else { inc / size };
            last_inc = rel;
            ul = w;
            if rel <= cfg.fp_tol {
                let diag = self.finish(un, &ul, n, l, rel, lin_iters, started);
                return Ok((ul, diag));
            }
        }
        Err(Error::NonConvergence {
            solver: "CNFD fixed-point iteration",
            iterations: cfg.fp_max_iters,
            residual: last_inc.as_f64(),
            history: Vec::new(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &mut self,
        un: &ComplexField<T>,
        next: &ComplexField<T>,
        n: usize,
        fp_iters: usize,
        fp_residual: T,
        lin_iters: usize,
        started: Instant,
    ) -> StepDiagnostics {
        let prev = match self.last_mass {
            Some(m) => m,
            None => ops::norm_2h_sq(un),
        };
        let m0 = *self.initial_mass.get_or_insert(prev);
        let mass = ops::norm_2h_sq(next);
        let slack = T::lit(10.0) * self.cfg.fp_tol * m0;
        if self.forcing.is_none() && mass > prev + slack {
            self.mass_warnings += 1;
            warn!("step {n}: discrete mass grew from {prev:e} to {mass:e} (slack {slack:e})");
        }
        self.last_mass = Some(mass);
        StepDiagnostics {
            step: n,
            time: self.cfg.grid.t(n + 1).as_f64(),
            fp_iters,
            fp_residual: fp_residual.as_f64(),
            lin_iters,
            mass: mass.as_f64(),
            energy: saturable::energy(next, &self.cfg.params).as_f64(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }
}

impl<T: Real> Stepper<T> for CnfdStepper<'_, T> {
    fn grid(&self) -> &Grid2D<T> {
        &self.cfg.grid
    }

    fn step(&mut self, un: &ComplexField<T>, n: usize) -> Result<(ComplexField<T>, StepDiagnostics)> {
        self.advance(un, n)
    }
}

/// One CNFD step with a fresh session.
pub fn cnfd_step<T: Real>(un: &ComplexField<T>, cfg: &CnfdConfig<T>) -> Result<(ComplexField<T>, StepDiagnostics)> {
    CnfdStepper::new(cfg.clone())?.advance(un, 0)
}

/// Runs the configured `N` steps from `u0`, keeping snapshots at
/// `cfg.snapshot_times`.
pub fn run_cnfd<T: Real>(u0: &ComplexField<T>, cfg: &CnfdConfig<T>) -> Result<Trajectory<T>> {
    let mut stepper = CnfdStepper::new(cfg.clone())?;
    evolve::run(&mut stepper, u0, &cfg.snapshot_times, cfg.grid.n_steps, |_, _, _| {})
}

/// As [`run_cnfd`] with an explicit step count (may be 0).
pub fn run_cnfd_steps<T: Real>(u0: &ComplexField<T>, cfg: &CnfdConfig<T>, n_steps: usize) -> Result<Trajectory<T>> {
    let mut stepper = CnfdStepper::new(cfg.clone())?;
    let times: Vec<T> = cfg
        .snapshot_times
        .iter()
        .copied()
        .filter(|t| cfg.grid.step_of_time(*t).is_some_and(|s| s <= n_steps))
        .collect();
    evolve::run(&mut stepper, u0, &times, n_steps, |_, _, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    type C = Complex<f64>;

    fn unit_grid(n: usize, t_final: f64, steps: usize) -> Grid2D<f64> {
        Grid2D::new([0.0, 1.0, 0.0, 1.0], n, n, t_final, steps).unwrap()
    }

    fn bump(g: Grid2D<f64>) -> ComplexField<f64> {
        ComplexField::from_fn(g, |x, y| {
            let e = (-8.0 * ((x - 0.45).powi(2) + (y - 0.5).powi(2))).exp();
            C::new(1.5 * e, 0.7 * e * (3.0 * x).sin())
        })
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = unit_grid(12, 0.1, 4);
        let cfg = CnfdConfig::new(g, PhysicsParams::new(1.0, 0.2).unwrap());
        let tr = run_cnfd(&ComplexField::zeros(g), &cfg).unwrap();
        assert!(tr.last.values().iter().all(|z| z.norm() == 0.0));
        assert!(tr.diagnostics.iter().all(|d| d.mass == 0.0));
    }

    #[test]
    fn system_at_the_iterate_reproduces_the_scheme_residual() {
        // With q, m² frozen at W itself, A W - b is exactly the scheme
        // residual of the pair (W, U).
        let g = unit_grid(9, 0.5, 5);
        let cfg = CnfdConfig::new(g, PhysicsParams::new(1.3, 0.4).unwrap());
        let un = bump(g);
        let mut w = ComplexField::from_fn(g, |x, y| C::new((2.0 * x).cos() * y, x * x - y));
        w.zero_boundary();
        let src = ComplexField::from_fn(g, |x, y| C::new(x + y, x * y));
        let sys = build_step_system(&un, &w, &cfg, Some(&src)).unwrap();
        let mut aw = vec![C::new(0.0, 0.0); g.len()];
        sys.apply(w.values(), &mut aw);
        let res = cnfd_residual(&w, &un, &cfg, Some(&src)).unwrap();
        let scale = 1.0 / g.tau;
        for k in 1..g.ny {
            for j in 1..g.nx {
                let i = g.index(j, k);
                let lhs = aw[i] - sys.rhs.values()[i];
                assert!((lhs - res.values()[i]).norm() <= 1e-13 * scale, "node ({j},{k})");
            }
        }
    }

    #[test]
    fn converged_step_satisfies_the_scheme() {
        let g = unit_grid(24, 0.05, 5);
        let mut cfg = CnfdConfig::new(g, PhysicsParams::new(1.0, 0.3).unwrap());
        cfg.fp_tol = 1e-12;
        cfg.lin_tol = 1e-14;
        let un = bump(g);
        let (next, diag) = cnfd_step(&un, &cfg).unwrap();
        assert!(diag.fp_residual <= 1e-12);
        let res = cnfd_residual(&next, &un, &cfg, None).unwrap();
        let rel = ops::norm_2h(&res) / (ops::norm_2h(&un) / g.tau);
        assert!(rel <= 1e-10, "relative scheme residual {rel:e}");
    }

    #[test]
    fn lossless_run_conserves_mass_and_energy() {
        let g = unit_grid(20, 0.2, 20);
        let params = PhysicsParams::new(1.0, 0.0).unwrap();
        let cfg = CnfdConfig::new(g, params);
        let u0 = bump(g);
        let m0 = ops::norm_2h_sq(&u0);
        let e0 = saturable::energy(&u0, &params);
        let tr = run_cnfd(&u0, &cfg).unwrap();
        for d in &tr.diagnostics {
            assert!((d.mass - m0).abs() <= 1e-7 * m0, "mass drift at step {}", d.step);
            assert!((d.energy - e0).abs() <= 1e-6 * (1.0 + e0.abs()), "energy drift at step {}", d.step);
        }
    }

    #[test]
    fn lossy_run_loses_mass() {
        let g = unit_grid(20, 0.2, 20);
        let cfg = CnfdConfig::new(g, PhysicsParams::new(1.0, 0.5).unwrap());
        let u0 = bump(g);
        let tr = run_cnfd(&u0, &cfg).unwrap();
        let mut prev = ops::norm_2h_sq(&u0);
        for d in &tr.diagnostics {
            assert!(d.mass <= prev + 10.0 * cfg.fp_tol * ops::norm_2h_sq(&u0));
            prev = d.mass;
        }
        assert!(prev < ops::norm_2h_sq(&u0));
    }

    #[test]
    fn linear_problem_has_the_crank_nicolson_factor() {
        let n = 16;
        let g = unit_grid(n, 0.25, 10);
        let cfg = CnfdConfig::new(g, PhysicsParams::new(0.0, 0.0).unwrap());
        let (m, l) = (2.0, 1.0);
        let u0 = ComplexField::from_fn(g, |x, y| C::new((m * PI * x).sin() * (l * PI * y).sin(), 0.0));
        let lam = -4.0 / (g.dx * g.dx) * (m * PI * g.dx / 2.0).sin().powi(2)
            - 4.0 / (g.dy * g.dy) * (l * PI * g.dy / 2.0).sin().powi(2);
        let i = C::new(0.0, 1.0);
        let factor = (i / g.tau - lam / 2.0) / (i / g.tau + lam / 2.0);
        let tr = run_cnfd(&u0, &cfg).unwrap();
        let expect = factor.powi(g.n_steps as i32);
        for (a, b) in tr.last.values().iter().zip(u0.values()) {
            assert!((a - b * expect).norm() <= 1e-9, "{a} vs {}", b * expect);
        }
    }

    #[test]
    fn direct_and_krylov_steps_agree() {
        let g = unit_grid(16, 0.1, 4);
        let mut cfg = CnfdConfig::new(g, PhysicsParams::new(1.0, 0.1).unwrap());
        let u0 = bump(g);
        let a = run_cnfd(&u0, &cfg).unwrap().last;
        cfg.linear_solver = LinearSolverKind::Direct;
        let b = run_cnfd(&u0, &cfg).unwrap().last;
        let diff = ops::norm_2h(&a.sub(&b).unwrap()) / ops::norm_2h(&a);
        assert!(diff <= 1e-8, "{diff:e}");
    }

    #[test]
    fn zero_steps_returns_the_initial_state() {
        let g = unit_grid(8, 0.1, 4);
        let mut cfg = CnfdConfig::new(g, PhysicsParams::new(1.0, 0.1).unwrap());
        cfg.snapshot_times = vec![0.0, 0.1];
        let u0 = bump(g);
        let tr = run_cnfd_steps(&u0, &cfg, 0).unwrap();
        assert_eq!(tr.last.values(), u0.values());
        assert!(tr.diagnostics.is_empty());
        assert_eq!(tr.snapshots.len(), 1);
    }

    #[test]
    fn tolerance_ordering_is_enforced() {
        let g = unit_grid(8, 0.1, 4);
        let mut cfg = CnfdConfig::new(g, PhysicsParams::new(1.0, 0.1).unwrap());
        cfg.lin_tol = 1e-8;
        assert!(CnfdStepper::new(cfg).is_err());
    }
}
