//! Configuration and orchestration of the soliton experiments: ground
//! state, single-solver evolutions, CNFD/SSFM comparison, refinement
//! ladders and the manufactured-solution study. Everything here works in
//! `f64`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::aitem::{self, AitemConfig, GroundState};
use crate::cnfd::{CnfdConfig, CnfdStepper, LinearSolverKind};
use crate::error::{Error, Result};
use crate::evolve::{self, StepDiagnostics, Trajectory};
use crate::field::ComplexField;
use crate::grid::Grid2D;
use crate::io::{write_gnuplot_modulus, Snapshot};
use crate::metrics::{self, ConvergenceReport};
use crate::mms::{self, MmsCase, MmsStudy};
use crate::ops;
use crate::saturable::PhysicsParams;
use crate::soliton::{self, AmplitudeExtraction, AmplitudeProbe, Interpolation, SolitonParams};
use crate::spectral::SpectralWorkspace;
use crate::ssfm::{SsfmConfig, SsfmStepper};

/// Finest mesh size run by a ladder without `allow_large`.
pub const DEFAULT_FINEST_H: f64 = 0.0625;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Groundstate,
    EvolveCnfd,
    EvolveSsfm,
    Compare,
    ConvergenceTable,
    MmsStudy,
}

impl Mode {
    pub const ALL: [Mode; 6] =
        [Mode::Groundstate, Mode::EvolveCnfd, Mode::EvolveSsfm, Mode::Compare, Mode::ConvergenceTable, Mode::MmsStudy];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Groundstate => "groundstate",
            Mode::EvolveCnfd => "evolve-cnfd",
            Mode::EvolveSsfm => "evolve-ssfm",
            Mode::Compare => "compare",
            Mode::ConvergenceTable => "convergence-table",
            Mode::MmsStudy => "mms-study",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    /// `[a, b, c, d]` for `[a,b] × [c,d]`.
    pub bounds: [f64; 4],
    pub h: f64,
    pub tau: f64,
    pub t_final: f64,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self { bounds: [-40.0, 40.0, -40.0, 40.0], h: 0.0625, tau: 0.0078125, t_final: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub lambda: f64,
    pub epsilon: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { lambda: 1.0, epsilon: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolitonSection {
    pub a0: f64,
    pub x0: f64,
    pub y0: f64,
    pub d1: f64,
    pub d2: f64,
    pub alpha0: f64,
}

impl Default for SolitonSection {
    fn default() -> Self {
        Self { a0: 1.0, x0: -5.0, y0: 4.5, d1: 2.0, d2: -1.8, alpha0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundStateSection {
    pub power: f64,
    pub dt: f64,
    pub c: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for GroundStateSection {
    fn default() -> Self {
        let d = AitemConfig::<f64>::new(22.5);
        Self { power: d.target_power, dt: d.dt, c: d.c, tol: d.tol, max_iters: d.max_iters }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    Krylov,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnfdSection {
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub lin_tol: f64,
    /// Defaults to `10·max(J, K)` of each grid when absent.
    pub lin_max_iters: Option<usize>,
    pub linear_solver: SolverChoice,
}

impl Default for CnfdSection {
    fn default() -> Self {
        Self {
            fp_tol: 1e-8,
            fp_max_iters: 50,
            lin_tol: 1e-10,
            lin_max_iters: None,
            linear_solver: SolverChoice::Krylov,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderSection {
    /// `(h, τ)` pairs from coarse to fine.
    pub rungs: Vec<[f64; 2]>,
    /// Compute observed rates between consecutive rungs.
    pub rates: bool,
}

impl Default for LadderSection {
    fn default() -> Self {
        Self { rungs: (2..=5).map(|k| [0.5f64.powi(k), 0.5f64.powi(k + 3)]).collect(), rates: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationChoice {
    Bilinear,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeChoice {
    Mass,
    Peak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub snapshot_times: Vec<f64>,
    /// How the theoretical profile samples the shifted ground state.
    pub interpolation: InterpolationChoice,
    /// Amplitude extraction from numerical fields.
    pub amplitude: AmplitudeChoice,
    /// Emit `x y |u|` matrices next to each snapshot.
    pub gnuplot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            snapshot_times: (0..=5).map(f64::from).collect(),
            interpolation: InterpolationChoice::Bilinear,
            amplitude: AmplitudeChoice::Mass,
            gnuplot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsSection {
    /// Catalog name: `zero`, `sine-mode` or `gaussian-sine`.
    pub case: String,
    #[serde(default = "MmsSection::default_bounds")]
    pub bounds: [f64; 4],
    #[serde(default = "MmsSection::default_h")]
    pub h: Vec<f64>,
    #[serde(default = "MmsSection::default_tau_ratio")]
    pub tau_ratio: f64,
    #[serde(default = "MmsSection::default_t_final")]
    pub t_final: f64,
    #[serde(default = "MmsSection::default_lambda")]
    pub lambda: f64,
    #[serde(default = "MmsSection::default_epsilon")]
    pub epsilon: f64,
}

impl MmsSection {
    fn default_bounds() -> [f64; 4] {
        [0.0, 1.0, 0.0, 1.0]
    }
    fn default_h() -> Vec<f64> {
        vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
    }
    fn default_tau_ratio() -> f64 {
        0.25
    }
    fn default_t_final() -> f64 {
        1.0
    }
    fn default_lambda() -> f64 {
        1.0
    }
    fn default_epsilon() -> f64 {
        0.1
    }

    /// The catalog Gaussian study on the unit square.
    pub fn gaussian() -> Self {
        Self {
            case: "gaussian-sine".into(),
            bounds: Self::default_bounds(),
            h: Self::default_h(),
            tau_ratio: Self::default_tau_ratio(),
            t_final: Self::default_t_final(),
            lambda: Self::default_lambda(),
            epsilon: Self::default_epsilon(),
        }
    }
}

/// Parsed experiment description. Every section defaults to the reference
/// soliton experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub domain: DomainSection,
    pub physics: PhysicsSection,
    pub soliton: SolitonSection,
    pub groundstate: GroundStateSection,
    pub cnfd: CnfdSection,
    pub ladder: LadderSection,
    pub output: OutputSection,
    pub mms: Option<MmsSection>,
}

/// Parses and validates a configuration. `mode` (typically from the
/// command line) overrides a missing `mode` key and must agree with a
/// present one.
pub fn parse_config(text: &str, mode: Option<Mode>) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::new(text);
    let mut cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "<root>".to_owned() } else { path };
        Error::config(key, e.into_inner().message().trim().to_owned())
    })?;
    match (cfg.mode, mode) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::config("mode", format!("file requests `{a}` but `{b}` was given")))
        }
        (None, Some(b)) => cfg.mode = Some(b),
        (None, None) => return Err(Error::config("mode", "no mode given")),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `path` and calls [`parse_config`].
pub fn load_config(path: &Path, mode: Option<Mode>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, mode)
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

impl ExperimentConfig {
    /// Reference-run defaults for `mode`.
    pub fn reference(mode: Mode) -> Self {
        Self { mode: Some(mode), mms: (mode == Mode::MmsStudy).then(MmsSection::gaussian), ..Self::default() }
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or(Mode::Compare)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        positive("domain.h", d.h)?;
        positive("domain.tau", d.tau)?;
        positive("domain.t_final", d.t_final)?;
        self.grid().map_err(|e| Error::config("domain", e.to_string()))?;
        self.physics_params().map_err(|e| Error::config("physics", e.to_string()))?;
        self.soliton_params().validate().map_err(|e| Error::config("soliton", e.to_string()))?;
        self.aitem_config().validate().map_err(|e| Error::config("groundstate", e.to_string()))?;
        let c = &self.cnfd;
        for (k, v) in [("cnfd.fp_tol", c.fp_tol), ("cnfd.lin_tol", c.lin_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(k, format!("must lie in (0, 1), got {v}")));
            }
        }
        if c.lin_tol > c.fp_tol / 10.0 {
            return Err(Error::config("cnfd.lin_tol", "must not exceed fp_tol/10"));
        }
        if c.fp_max_iters == 0 || c.lin_max_iters == Some(0) {
            return Err(Error::config("cnfd", "iteration limits must be >= 1"));
        }
        for (i, &t) in self.output.snapshot_times.iter().enumerate() {
            if !(t >= 0.0 && t <= d.t_final * (1.0 + 1e-12)) {
                return Err(Error::config(
                    format!("output.snapshot_times[{i}]"),
                    format!("{t} is outside [0, {}]", d.t_final),
                ));
            }
        }
        match self.mode() {
            Mode::EvolveCnfd | Mode::EvolveSsfm | Mode::Compare => {
                self.check_lattice(d.tau, "domain.tau")?;
            }
            Mode::ConvergenceTable => self.validate_ladder()?,
            Mode::MmsStudy => self.validate_mms()?,
            Mode::Groundstate => {}
        }
        Ok(())
    }

    fn check_lattice(&self, tau: f64, key: &str) -> Result<()> {
        for &t in &self.output.snapshot_times {
            let n = (t / tau).round();
            if (n * tau - t).abs() > 1e-9 * tau {
                return Err(Error::config(key, format!("snapshot time {t} is not a multiple of tau = {tau}")));
            }
        }
        Ok(())
    }

    fn validate_ladder(&self) -> Result<()> {
        let rungs = &self.ladder.rungs;
        if rungs.is_empty() {
            return Err(Error::config("ladder.rungs", "at least one rung is required"));
        }
        for (i, &[h, tau]) in rungs.iter().enumerate() {
            let key = format!("ladder.rungs[{i}]");
            positive(&key, h)?;
            positive(&key, tau)?;
            Grid2D::from_spacing(self.domain.bounds, h, self.domain.t_final, tau)
                .map_err(|e| Error::config(&key, e.to_string()))?;
            self.check_lattice(tau, &key)?;
            if i > 0 && !(h < rungs[i - 1][0]) {
                return Err(Error::config(key, "mesh sizes must decrease along the ladder"));
            }
        }
        if self.ladder.rates {
            let ratio = rungs[0][1] / rungs[0][0];
            for (i, &[h, tau]) in rungs.iter().enumerate() {
                if !close(tau / h, ratio) {
                    return Err(Error::config(
                        format!("ladder.rungs[{i}]"),
                        format!(
                            "rates need tau proportional to h (tau/h = {} here, {ratio} on the first rung)",
                            tau / h
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    fn validate_mms(&self) -> Result<()> {
        let m = self.mms.as_ref().ok_or_else(|| Error::config("mms", "mms-study needs an [mms] block"))?;
        MmsCase::<f64>::from_name(&m.case).map_err(|e| Error::config("mms.case", e.to_string()))?;
        positive("mms.tau_ratio", m.tau_ratio)?;
        positive("mms.t_final", m.t_final)?;
        if m.h.len() < 2 {
            return Err(Error::config("mms.h", "at least two mesh sizes are needed"));
        }
        for (i, &h) in m.h.iter().enumerate() {
            Grid2D::from_spacing(m.bounds, h, m.t_final, m.tau_ratio * h)
                .map_err(|e| Error::config(format!("mms.h[{i}]"), e.to_string()))?;
        }
        PhysicsParams::new(m.lambda, m.epsilon).map_err(|e| Error::config("mms", e.to_string()))?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid2D<f64>> {
        let d = &self.domain;
        Grid2D::from_spacing(d.bounds, d.h, d.t_final, d.tau)
    }

    pub fn grid_for(&self, h: f64, tau: f64) -> Result<Grid2D<f64>> {
        Grid2D::from_spacing(self.domain.bounds, h, self.domain.t_final, tau)
    }

    pub fn physics_params(&self) -> Result<PhysicsParams<f64>> {
        PhysicsParams::new(self.physics.lambda, self.physics.epsilon)
    }

    pub fn soliton_params(&self) -> SolitonParams<f64> {
        let s = &self.soliton;
        SolitonParams { a0: s.a0, x0: s.x0, y0: s.y0, d1: s.d1, d2: s.d2, alpha0: s.alpha0 }
    }

    pub fn aitem_config(&self) -> AitemConfig<f64> {
        let g = &self.groundstate;
        AitemConfig { dt: g.dt, c: g.c, tol: g.tol, max_iters: g.max_iters, target_power: g.power, coupling: 1.0 }
    }

    pub fn cnfd_config(&self, grid: Grid2D<f64>) -> Result<CnfdConfig<f64>> {
        let mut cfg = CnfdConfig::new(grid, self.physics_params()?);
        let c = &self.cnfd;
        cfg.fp_tol = c.fp_tol;
        cfg.fp_max_iters = c.fp_max_iters;
        cfg.lin_tol = c.lin_tol;
        if let Some(m) = c.lin_max_iters {
            cfg.lin_max_iters = m;
        }
        cfg.linear_solver = match c.linear_solver {
            SolverChoice::Krylov => LinearSolverKind::Krylov,
            SolverChoice::Direct => LinearSolverKind::Direct,
        };
        cfg.snapshot_times = self.output.snapshot_times.clone();
        Ok(cfg)
    }

    pub fn ssfm_config(&self, grid: Grid2D<f64>) -> Result<SsfmConfig<f64>> {
        let mut cfg = SsfmConfig::new(grid, self.physics_params()?);
        cfg.snapshot_times = self.output.snapshot_times.clone();
        Ok(cfg)
    }

    pub fn amplitude_extraction(&self) -> AmplitudeExtraction {
        match self.output.amplitude {
            AmplitudeChoice::Mass => AmplitudeExtraction::Mass,
            AmplitudeChoice::Peak => AmplitudeExtraction::Peak,
        }
    }

    pub fn interpolation(&self) -> Interpolation {
        match self.output.interpolation {
            InterpolationChoice::Bilinear => Interpolation::Bilinear,
            InterpolationChoice::Spectral => Interpolation::Spectral,
        }
    }

    /// Ladder rungs that will run: those with `h ≥ finest`, where `finest`
    /// is `ladder_max_h` if given, and never below [`DEFAULT_FINEST_H`]
    /// unless `allow_large`.
    pub fn active_rungs(&self, ladder_max_h: Option<f64>, allow_large: bool) -> Vec<(f64, f64)> {
        let mut finest = ladder_max_h.unwrap_or(0.0);
        if !allow_large {
            finest = finest.max(DEFAULT_FINEST_H);
        }
        self.ladder.rungs.iter().filter(|[h, _]| *h >= finest * (1.0 - 1e-12)).map(|&[h, tau]| (h, tau)).collect()
    }
}

/// Which evolution solvers to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Solvers {
    pub cnfd: bool,
    pub ssfm: bool,
}

/// `(t_n, measured amplitude)` at every step.
pub type AmplitudeSeries = Vec<(f64, f64)>;

/// Output of [`run_soliton`]: the ground state, the initial condition and
/// the trajectories of the requested solvers.
pub struct SolitonRun {
    pub grid: Grid2D<f64>,
    pub ground: GroundState<f64>,
    pub u0: ComplexField<f64>,
    pub cnfd: Option<Trajectory<f64>>,
    pub ssfm: Option<Trajectory<f64>>,
    pub amp_cnfd: AmplitudeSeries,
    pub amp_ssfm: AmplitudeSeries,
    /// Largest boundary value SSFM discarded when projecting its periodic
    /// state back to Dirichlet data.
    pub ssfm_tail: f64,
    pub timings: BTreeMap<String, f64>,
}

/// AITEM ground state seeded with `sech` of the squared radius at the
/// soliton centre.
pub fn ground_state(cfg: &ExperimentConfig, ws: &mut SpectralWorkspace<f64>) -> Result<GroundState<f64>> {
    let grid = *ws.grid();
    let p = cfg.soliton_params();
    let seed = aitem::sech_seed(&grid, p.x0, p.y0);
    let gs = aitem::solve_ground_state(&seed, &cfg.aitem_config(), ws)?;
    info!(
        "ground state on h = {}: mu = {:.6}, P = {}, residual = {:e}, {} iterations",
        grid.dx, gs.mu, gs.power, gs.residual, gs.iterations
    );
    Ok(gs)
}

/// Ground state, initial condition and the requested evolutions on `grid`.
pub fn run_soliton(cfg: &ExperimentConfig, grid: Grid2D<f64>, solvers: Solvers) -> Result<SolitonRun> {
    let mut timings = BTreeMap::new();
    let mut ws = SpectralWorkspace::new(grid);
    let started = Instant::now();
    let ground = ground_state(cfg, &mut ws)?;
    timings.insert("groundstate".to_owned(), started.elapsed().as_secs_f64());
    let p = cfg.soliton_params();
    let u0 = soliton::build_initial_condition(&ground, &p, &grid)?;
    let probe = AmplitudeProbe::new(&ground, cfg.amplitude_extraction())?;
    let mut run = SolitonRun {
        grid,
        ground,
        u0,
        cnfd: None,
        ssfm: None,
        amp_cnfd: Vec::new(),
        amp_ssfm: Vec::new(),
        ssfm_tail: 0.0,
        timings,
    };
    if solvers.ssfm {
        let started = Instant::now();
        let mut stepper = SsfmStepper::with_workspace(cfg.ssfm_config(grid)?, ws)?;
        let mut amp = Vec::with_capacity(grid.n_steps + 1);
        let tr = evolve::run(&mut stepper, &run.u0, &cfg.output.snapshot_times, grid.n_steps, |_, t, u| {
            amp.push((t, probe.measure(u)))
        })?;
        run.ssfm_tail = stepper.max_boundary_tail;
        run.ssfm = Some(tr);
        run.amp_ssfm = amp;
        run.timings.insert("ssfm".to_owned(), started.elapsed().as_secs_f64());
    }
    if solvers.cnfd {
        let started = Instant::now();
        let mut stepper = CnfdStepper::new(cfg.cnfd_config(grid)?)?;
        let mut amp = Vec::with_capacity(grid.n_steps + 1);
        let tr = evolve::run(&mut stepper, &run.u0, &cfg.output.snapshot_times, grid.n_steps, |_, t, u| {
            amp.push((t, probe.measure(u)))
        })?;
        run.cnfd = Some(tr);
        run.amp_cnfd = amp;
        run.timings.insert("cnfd".to_owned(), started.elapsed().as_secs_f64());
    }
    Ok(run)
}

/// Amplitude and profile metrics at one snapshot time. Solver-specific
/// entries are `None` when that solver did not run.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMetrics {
    pub t: f64,
    pub a_th: f64,
    pub a_cnfd: Option<f64>,
    pub a_ssfm: Option<f64>,
    pub ea_cnfd: Option<f64>,
    pub ea_ssfm: Option<f64>,
    pub da: Option<f64>,
    pub e2_cnfd: Option<f64>,
    pub e1_cnfd: Option<f64>,
    pub e2_ssfm: Option<f64>,
    pub e1_ssfm: Option<f64>,
    pub d2: Option<f64>,
    pub d1: Option<f64>,
}

fn snapshot_at(tr: &Option<Trajectory<f64>>, t: f64) -> Result<Option<&ComplexField<f64>>> {
    match tr {
        None => Ok(None),
        Some(tr) => tr.at(t).map(Some).ok_or_else(|| Error::InvalidArgument(format!("no snapshot at t = {t}"))),
    }
}

/// Metrics at every configured snapshot time.
pub fn snapshot_metrics(run: &SolitonRun, cfg: &ExperimentConfig) -> Result<Vec<SnapshotMetrics>> {
    let p = cfg.soliton_params();
    let phys = cfg.physics_params()?;
    let mut ws = SpectralWorkspace::new(run.grid);
    let mut out = Vec::new();
    for &t in &cfg.output.snapshot_times {
        let a_th = soliton::amplitude_theory(t, &run.u0, &p, &phys);
        let th = soliton::theoretical_profile_modulus(&run.ground, &p, &phys, t, cfg.interpolation(), &mut ws)?;
        let uc = snapshot_at(&run.cnfd, t)?;
        let us = snapshot_at(&run.ssfm, t)?;
        let amp = |u: Option<&ComplexField<f64>>| -> Result<Option<f64>> {
            u.map(|u| soliton::measure_amplitude_by(u, &run.ground, cfg.amplitude_extraction())).transpose()
        };
        let (a_cnfd, a_ssfm) = (amp(uc)?, amp(us)?);
        let ea = |a: Option<f64>| a.map(|a| metrics::rel_amp_error(a, a_th)).transpose();
        let e2 = |u: Option<&ComplexField<f64>>| u.map(|u| metrics::rel_profile_error_2h(u, &th)).transpose();
        let e1 = |u: Option<&ComplexField<f64>>| u.map(|u| metrics::rel_profile_error_1h(u, &th)).transpose();
        let (da, d) = match (uc, us, a_cnfd, a_ssfm) {
            (Some(c), Some(s), Some(ac), Some(as_)) => {
                let da = metrics::rel_amp_diff(ac, as_)?;
                let d = if t > 0.0 { Some(metrics::rel_profile_diff(c, s)?) } else { None };
                (Some(da), d)
            }
            _ => (None, None),
        };
        out.push(SnapshotMetrics {
            t,
            a_th,
            a_cnfd,
            a_ssfm,
            ea_cnfd: ea(a_cnfd)?,
            ea_ssfm: ea(a_ssfm)?,
            da,
            e2_cnfd: e2(uc)?,
            e1_cnfd: e1(uc)?,
            e2_ssfm: e2(us)?,
            e1_ssfm: e1(us)?,
            d2: d.map(|d| d.0),
            d1: d.map(|d| d.1),
        });
    }
    Ok(out)
}

/// Everything a ladder keeps from one rung once the fields are dropped.
#[derive(Debug, Clone)]
pub struct RungResult {
    pub h: f64,
    pub tau: f64,
    pub ground: GroundState<f64>,
    /// `‖U⁰‖²_{2,h}`.
    pub initial_mass: f64,
    pub metrics: Vec<SnapshotMetrics>,
    pub cnfd_diagnostics: Vec<StepDiagnostics>,
    pub amp_cnfd: AmplitudeSeries,
    pub amp_ssfm: AmplitudeSeries,
    pub ssfm_tail: f64,
    pub timings: BTreeMap<String, f64>,
}

/// Profile-error metrics (numerical vs theoretical), in row order.
pub const ERROR_METRICS: [&str; 4] = ["E2h_CNFD", "E2h_SSFM", "E1h_CNFD", "E1h_SSFM"];
/// CNFD vs SSFM difference metrics, in row order.
pub const DIFFERENCE_METRICS: [&str; 2] = ["D2h", "D1h"];

/// Runs both solvers on one rung and reduces the result to metrics.
pub fn run_rung(cfg: &ExperimentConfig, h: f64, tau: f64) -> Result<RungResult> {
    info!("rung h = {h}, tau = {tau}");
    let grid = cfg.grid_for(h, tau)?;
    let run = run_soliton(cfg, grid, Solvers { cnfd: true, ssfm: true })?;
    let metrics = snapshot_metrics(&run, cfg)?;
    Ok(RungResult {
        h,
        tau,
        initial_mass: ops::norm_2h_sq(&run.u0),
        ground: run.ground,
        metrics,
        cnfd_diagnostics: run.cnfd.as_ref().map(|t| t.diagnostics.clone()).unwrap_or_default(),
        amp_cnfd: run.amp_cnfd,
        amp_ssfm: run.amp_ssfm,
        ssfm_tail: run.ssfm_tail,
        timings: run.timings,
    })
}

/// Profile-error and difference tables (with rates when requested) from
/// finished rungs.
/// Fails if any requested `(metric, t, h)` cell is missing.
pub fn build_tables(rungs: &[RungResult], with_rates: bool) -> Result<(ConvergenceReport, ConvergenceReport)> {
    let mut t1 = ConvergenceReport::default();
    let mut t2 = ConvergenceReport::default();
    for r in rungs {
        for m in r.metrics.iter().filter(|m| m.t > 0.0) {
            let cells = [
                (0, ERROR_METRICS[0], m.e2_cnfd),
                (0, ERROR_METRICS[1], m.e2_ssfm),
                (0, ERROR_METRICS[2], m.e1_cnfd),
                (0, ERROR_METRICS[3], m.e1_ssfm),
                (1, DIFFERENCE_METRICS[0], m.d2),
                (1, DIFFERENCE_METRICS[1], m.d1),
            ];
            for (table, name, value) in cells {
                let v = value
                    .ok_or_else(|| Error::InvalidArgument(format!("missing {name} at t = {}, h = {}", m.t, r.h)))?;
                let report = if table == 0 { &mut t1 } else { &mut t2 };
                report.push(name, m.t, r.h, r.tau, v);
            }
        }
    }
    if with_rates {
        t1.compute_rates(&ERROR_METRICS)?;
        t2.compute_rates(&DIFFERENCE_METRICS)?;
    }
    Ok((t1, t2))
}

/// Options from the command line that are not part of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Finest ladder mesh size to run.
    pub ladder_max_h: Option<f64>,
    /// Permit rungs finer than [`DEFAULT_FINEST_H`].
    pub allow_large: bool,
}

/// Summary returned by [`run_experiment`].
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// Human-readable summary (tables, orders, ground-state record).
    pub summary: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    run: ManifestRun,
    versions: BTreeMap<&'static str, String>,
    timings: BTreeMap<String, f64>,
    notes: Vec<String>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct ManifestRun {
    mode: String,
    status: String,
    error: Option<String>,
    files: Vec<String>,
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
    notes: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_owned(), files: Vec::new(), timings: BTreeMap::new(), notes: Vec::new() })
    }

    /// Writes through a temporary file and renames, so a file is either
    /// complete or absent.
    fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut buf = Vec::new();
        fill(&mut buf).map_err(|e| Error::io(&path, e))?;
        let tmp = path.with_extension("partial");
        fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    fn snapshot(&mut self, stem: &str, u: &ComplexField<f64>, t: f64, gnuplot: bool) -> Result<()> {
        let snap = Snapshot::from_field(u, t);
        self.write(&format!("{stem}.fld"), |w| snap.write_to(w))?;
        if gnuplot {
            self.write(&format!("{stem}.dat"), |w| write_gnuplot_modulus(u, w))?;
        }
        Ok(())
    }

    fn merge_timings(&mut self, prefix: &str, t: &BTreeMap<String, f64>) {
        for (k, v) in t {
            self.timings.insert(format!("{prefix}{k}"), *v);
        }
    }
}

/// Runs the configured mode, writing artifacts below `opts.out_dir`.
/// A manifest is written even when a stage fails; the error is then
/// returned after the partial artifacts are on disk.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut art = Artifacts::new(&opts.out_dir)?;
    let started = Instant::now();
    let result = dispatch(cfg, opts, &mut art);
    art.timings.insert("total".to_owned(), started.elapsed().as_secs_f64());
    let error = result.as_ref().err().map(|e| e.to_string());
    let manifest = Manifest {
        run: ManifestRun {
            mode: cfg.mode().to_string(),
            status: if error.is_none() { "ok".into() } else { "failed".into() },
            error,
            files: art
                .files
                .iter()
                .filter_map(|p| p.strip_prefix(&art.dir).ok())
                .map(|p| p.display().to_string())
                .collect(),
        },
        versions: BTreeMap::from([("satnls", env!("CARGO_PKG_VERSION").to_owned()), ("scalar", "f64".to_owned())]),
        timings: art.timings.clone(),
        notes: art.notes.clone(),
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidArgument(format!("manifest: {e}")))?;
    art.write("manifest.toml", |w| w.write_all(text.as_bytes()))?;
    let summary = result?;
    Ok(RunOutcome { files: art.files, summary })
}

fn dispatch(cfg: &ExperimentConfig, opts: &RunOptions, art: &mut Artifacts) -> Result<String> {
    match cfg.mode() {
        Mode::Groundstate => run_groundstate(cfg, art),
        Mode::EvolveCnfd => run_evolve(cfg, art, Solvers { cnfd: true, ssfm: false }),
        Mode::EvolveSsfm => run_evolve(cfg, art, Solvers { cnfd: false, ssfm: true }),
        Mode::Compare => run_evolve(cfg, art, Solvers { cnfd: true, ssfm: true }),
        Mode::ConvergenceTable => run_ladder(cfg, opts, art),
        Mode::MmsStudy => run_mms(cfg, art),
    }
}

/// Sidecar text for a ground state.
pub fn ground_state_record(gs: &GroundState<f64>, cfg: &ExperimentConfig) -> String {
    let g = gs.v.grid();
    let a = cfg.aitem_config();
    format!(
        "mu = {:.10e}\npower = {:.10e}\nresidual = {:.6e}\nprojected_residual = {:.6e}\n\
         boundary_tail = {:.6e}\niterations = {}\nh = {}\nbounds = [{}, {}, {}, {}]\n\
         center = [{}, {}]\naitem.dt = {}\naitem.c = {}\naitem.tol = {:e}\naitem.max_iters = {}\n\
         aitem.target_power = {}\n",
        gs.mu,
        gs.power,
        gs.residual,
        gs.projected_residual,
        gs.boundary_tail,
        gs.iterations,
        g.dx,
        g.a,
        g.b,
        g.c,
        g.d,
        cfg.soliton.x0,
        cfg.soliton.y0,
        a.dt,
        a.c,
        a.tol,
        a.max_iters,
        a.target_power
    )
}

fn run_groundstate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String> {
    let grid = cfg.grid()?;
    let mut ws = SpectralWorkspace::new(grid);
    let started = Instant::now();
    let gs = ground_state(cfg, &mut ws)?;
    art.timings.insert("groundstate".into(), started.elapsed().as_secs_f64());
    let field = ComplexField::from_real(&gs.v);
    art.snapshot("groundstate", &field, 0.0, cfg.output.gnuplot)?;
    let record = ground_state_record(&gs, cfg);
    art.write("groundstate.txt", |w| w.write_all(record.as_bytes()))?;
    art.notes.push(format!("mu = {} at h = {} (grid-converged value; compare across resolutions)", gs.mu, grid.dx));
    Ok(record)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.10e}")).unwrap_or_default()
}

fn write_metrics_csv(rows: &[SnapshotMetrics], w: &mut Vec<u8>) -> std::io::Result<()> {
    writeln!(w, "t,A_th,A_cnfd,A_ssfm,EA_cnfd,EA_ssfm,DA,E2h_cnfd,E2h_ssfm,E1h_cnfd,E1h_ssfm,D2h,D1h")?;
    for m in rows {
        writeln!(
            w,
            "{},{:.10e},{},{},{},{},{},{},{},{},{},{},{}",
            m.t,
            m.a_th,
            fmt_opt(m.a_cnfd),
            fmt_opt(m.a_ssfm),
            fmt_opt(m.ea_cnfd),
            fmt_opt(m.ea_ssfm),
            fmt_opt(m.da),
            fmt_opt(m.e2_cnfd),
            fmt_opt(m.e2_ssfm),
            fmt_opt(m.e1_cnfd),
            fmt_opt(m.e1_ssfm),
            fmt_opt(m.d2),
            fmt_opt(m.d1)
        )?;
    }
    Ok(())
}

fn write_amplitude_csv(
    series: &AmplitudeSeries,
    u0: &ComplexField<f64>,
    cfg: &ExperimentConfig,
    w: &mut Vec<u8>,
) -> std::io::Result<()> {
    let p = cfg.soliton_params();
    let phys = cfg.physics_params().map_err(std::io::Error::other)?;
    let ratio = soliton::quartic_ratio(u0);
    writeln!(w, "n,t,amplitude,amplitude_theory,rel_error")?;
    for (n, &(t, a)) in series.iter().enumerate() {
        let th = p.a0 / (1.0 + 2.0 * phys.epsilon * ratio * p.a0.powi(4) * t).sqrt();
        writeln!(w, "{n},{t},{a:.12e},{th:.12e},{:.6e}", (a - th).abs() / th)?;
    }
    Ok(())
}

fn write_solver_outputs(
    art: &mut Artifacts,
    prefix: &str,
    solver: &str,
    tr: &Trajectory<f64>,
    amp: &AmplitudeSeries,
    run: &SolitonRun,
    cfg: &ExperimentConfig,
) -> Result<()> {
    for (t, u) in &tr.snapshots {
        art.snapshot(&format!("{prefix}{solver}_t{t}"), u, *t, cfg.output.gnuplot)?;
    }
    art.write(&format!("{prefix}{solver}_amplitude.csv"), |w| write_amplitude_csv(amp, &run.u0, cfg, w))?;
    art.write(&format!("{prefix}{solver}_diagnostics.csv"), |w| evolve::write_diagnostics_csv(&tr.diagnostics, w))
}

fn run_evolve(cfg: &ExperimentConfig, art: &mut Artifacts, solvers: Solvers) -> Result<String> {
    let grid = cfg.grid()?;
    let run = run_soliton(cfg, grid, solvers)?;
    art.merge_timings("", &run.timings);
    let gs_field = ComplexField::from_real(&run.ground.v);
    art.snapshot("groundstate", &gs_field, 0.0, false)?;
    let record = ground_state_record(&run.ground, cfg);
    art.write("groundstate.txt", |w| w.write_all(record.as_bytes()))?;
    if let Some(tr) = &run.cnfd {
        write_solver_outputs(art, "", "cnfd", tr, &run.amp_cnfd, &run, cfg)?;
    }
    if let Some(tr) = &run.ssfm {
        write_solver_outputs(art, "", "ssfm", tr, &run.amp_ssfm, &run, cfg)?;
        art.notes.push(format!(
            "SSFM runs on the periodic J x K cell; largest boundary value discarded: {:e}",
            run.ssfm_tail
        ));
    }
    let rows = snapshot_metrics(&run, cfg)?;
    art.write("metrics.csv", |w| write_metrics_csv(&rows, w))?;
    let mut summary = String::new();
    for m in &rows {
        summary += &format!(
            "t = {:<4} A_th = {:.6} EA_cnfd = {} EA_ssfm = {} DA = {} D2h = {}\n",
            m.t,
            m.a_th,
            fmt_opt(m.ea_cnfd),
            fmt_opt(m.ea_ssfm),
            fmt_opt(m.da),
            fmt_opt(m.d2)
        );
    }
    Ok(summary)
}

fn run_ladder(cfg: &ExperimentConfig, opts: &RunOptions, art: &mut Artifacts) -> Result<String> {
    let rungs = cfg.active_rungs(opts.ladder_max_h, opts.allow_large);
    let skipped = cfg.ladder.rungs.len() - rungs.len();
    if skipped > 0 {
        art.notes.push(format!("{skipped} finer rung(s) skipped (ladder cap; pass --allow-large to run them)"));
    }
    if rungs.is_empty() {
        return Err(Error::config("ladder.rungs", "no rung is coarse enough for the ladder cap"));
    }
    art.notes.push("SSFM uses the same (h, tau) as CNFD on every rung".to_owned());
    let mut results = Vec::new();
    for (h, tau) in rungs {
        let r = run_rung(cfg, h, tau)?;
        let prefix = format!("rung_h{h}_");
        art.merge_timings(&prefix, &r.timings);
        art.write(&format!("{prefix}metrics.csv"), |w| write_metrics_csv(&r.metrics, w))?;
        art.notes.push(format!("h = {h}: mu = {}, SSFM tail = {:e}", r.ground.mu, r.ssfm_tail));
        results.push(r);
    }
    let (t1, t2) = build_tables(&results, cfg.ladder.rates)?;
    art.write("profile_errors.csv", |w| t1.write_csv(w))?;
    art.write("profile_differences.csv", |w| t2.write_csv(w))?;
    let text = format!(
        "Relative profile errors against the theoretical soliton\n{}\n\
         CNFD versus SSFM profile differences\n{}",
        t1.render_table(&ERROR_METRICS),
        t2.render_table(&DIFFERENCE_METRICS)
    );
    art.write("tables.txt", |w| w.write_all(text.as_bytes()))?;
    Ok(text)
}

/// Runs the manufactured-solution study described by `[mms]`.
pub fn mms_from_config(m: &MmsSection) -> Result<MmsStudy> {
    let case = MmsCase::from_name(&m.case)?;
    let params = PhysicsParams::new(m.lambda, m.epsilon)?;
    mms::mms_study(case, m.bounds, params, &m.h, m.tau_ratio, m.t_final, |_| {})
}

fn run_mms(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<String> {
    let m = cfg.mms.as_ref().ok_or_else(|| Error::config("mms", "mms-study needs an [mms] block"))?;
    let started = Instant::now();
    let study = mms_from_config(m)?;
    art.timings.insert("mms".into(), started.elapsed().as_secs_f64());
    let mut text = String::from("h,tau,err_2h,err_1h,order_2h,order_1h\n");
    for (i, l) in study.levels.iter().enumerate() {
        let (o2, o1) = match i.checked_sub(1).and_then(|j| study.orders.get(j)) {
            Some(&(a, b)) => (format!("{a:.6}"), format!("{b:.6}")),
            None => (String::new(), String::new()),
        };
        text += &format!("{},{},{:.10e},{:.10e},{o2},{o1}\n", l.h, l.tau, l.err_2h, l.err_1h);
    }
    art.write("mms.csv", |w| w.write_all(text.as_bytes()))?;
    Ok(text)
}
