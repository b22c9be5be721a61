//! Shared run loop for the time steppers: snapshot bookkeeping, per-step
//! diagnostics and the diagnostics CSV stream.

use std::io::Write;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid2D;
use crate::scalar::Real;

/// Per-step record. Values are stored as `f64` regardless of the solver
/// scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Index `n` of the step producing `U^{n+1}`.
    pub step: usize,
    /// `t_{n+1}`.
    pub time: f64,
    /// Fixed-point iterations (1 for explicit steppers).
    pub fp_iters: usize,
    /// Final fixed-point relative increment (0 for explicit steppers).
    pub fp_residual: f64,
    /// Total inner linear-solver iterations.
    pub lin_iters: usize,
    /// `‖U^{n+1}‖²_{2,h}`.
    pub mass: f64,
    /// `E_h(U^{n+1})`.
    pub energy: f64,
    pub wall_ms: f64,
}

/// One time integrator advancing `U^n → U^{n+1}`.
pub trait Stepper<T: Real> {
    fn grid(&self) -> &Grid2D<T>;
    fn step(&mut self, un: &ComplexField<T>, n: usize) -> Result<(ComplexField<T>, StepDiagnostics)>;
}

/// Snapshots at the requested lattice times plus all step diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub snapshots: Vec<(T, ComplexField<T>)>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub last: ComplexField<T>,
}

impl<T: Real> Trajectory<T> {
    /// Snapshot at time `t` (lattice-exact match within `1e-9`).
    pub fn at(&self, t: T) -> Option<&ComplexField<T>> {
        self.snapshots.iter().find(|(s, _)| (*s - t).abs() <= T::lit(1e-9) * T::one().max(t.abs())).map(|(_, u)| u)
    }
}

/// Maps snapshot times to step indices, rejecting times off the lattice or
/// beyond `n_steps`.
pub fn snapshot_steps<T: Real>(grid: &Grid2D<T>, times: &[T], n_steps: usize) -> Result<Vec<usize>> {
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        match grid.step_of_time(t) {
            Some(n) if n <= n_steps => steps.push(n),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "snapshot time {t} is not on the time lattice t_n = n*{} (n <= {n_steps})",
                    grid.tau
                )))
            }
        }
    }
    Ok(steps)
}

/// Runs `n_steps` steps from `u0`. `observe(n, t_n, U^n)` is called for
/// `n = 0..=n_steps`. A failing step aborts with [`Error::StepFailed`]
/// carrying the diagnostics gathered so far.
pub fn run<T: Real, S: Stepper<T>>(
    stepper: &mut S,
    u0: &ComplexField<T>,
    snapshot_times: &[T],
    n_steps: usize,
    mut observe: impl FnMut(usize, T, &ComplexField<T>),
) -> Result<Trajectory<T>> {
    let grid = *stepper.grid();
    u0.ensure_same_grid(&ComplexField::zeros(grid))?;
    let wanted = snapshot_steps(&grid, snapshot_times, n_steps)?;
    let mut snapshots = Vec::new();
    let mut diagnostics = Vec::with_capacity(n_steps);
    let take = |n: usize, u: &ComplexField<T>, snaps: &mut Vec<(T, ComplexField<T>)>| {
        for (i, &w) in wanted.iter().enumerate() {
            if w == n {
                snaps.push((snapshot_times[i], u.clone()));
            }
        }
    };
    take(0, u0, &mut snapshots);
    observe(0, T::zero(), u0);
    let mut u = u0.clone();
    for n in 0..n_steps {
        match stepper.step(&u, n) {
            Ok((next, diag)) => {
                diagnostics.push(diag);
                u = next;
            }
            Err(e) => return Err(Error::StepFailed { step: n, source: Box::new(e), diagnostics }),
        }
        take(n + 1, &u, &mut snapshots);
        observe(n + 1, grid.t(n + 1), &u);
    }
    snapshots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(Trajectory { snapshots, diagnostics, last: u })
}

pub const DIAGNOSTICS_HEADER: &str = "n,t_n,fp_iters,residual,mass,energy,wall_ms";

/// One CSV row per step: `n, t_n, fp_iters, residual, mass, energy, wall_ms`.
/// `n` is the index of the produced state, `t_n` its time.
pub fn write_diagnostics_csv(diags: &[StepDiagnostics], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    for d in diags {
        writeln!(
            w,
            "{},{:e},{},{:e},{:e},{:e},{:.3}",
            d.step + 1,
            d.time,
            d.fp_iters,
            d.fp_residual,
            d.mass,
            d.energy,
            d.wall_ms
        )?;
    }
    Ok(())
}
