//! Config-driven experiments: single runs, μ-sweeps toward the energetic and
//! balanced-viscosity limits, and trajectory comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Deserialize;

use crate::bvcurve::{fmt17, BvCurve};
use crate::error::{usage, Error, Result};
use crate::model::{CustomPolynomial, DoubleWell, EnergyModel, Quadratic, State, StateSpace, TwoWell2d};
use crate::solvers::{certify, solve, CertificateReport, DiscreteTrajectory, Scheme, TimePartition};
use crate::verify::{check_bv, check_energetic, check_ve, default_tolerance, CheckOptions, VerificationReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub scheme: SchemeConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Drift rate `c` of the quadratic model.
    pub rate: Option<f64>,
    /// Load rate `ℓ'` of the well models.
    pub load_rate: Option<f64>,
    pub stiffness: Option<f64>,
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub h: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub horizon: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// `energetic`, `viscous` or `visco-energetic`.
    pub kind: String,
    pub epsilon: Option<f64>,
    pub mu: Option<f64>,
    /// Concepts to verify (`energetic`, `bv`, `ve`); defaults to the one
    /// matching the scheme.
    pub checks: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub state: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mu: Vec<f64>,
    /// Viscosity of the balanced-viscosity reference (run with `τ = ε²`).
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// When set, the step for parameter μ is refined to at most
    /// `tau_scale / μ` by an integer factor.
    pub tau_scale: Option<f64>,
    /// When set, the grid spacing for μ is refined to at most `h_scale / μ`.
    pub h_scale: Option<f64>,
    /// Verify every VE_μ run (expensive).
    #[serde(default)]
    pub verify: bool,
}

fn default_epsilon() -> f64 {
    1e-2
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_c_tol")]
    pub c_tol: f64,
    /// Absolute tolerance overriding `c_tol (h + 2τ)`.
    pub tol: Option<f64>,
    pub jump_rel: Option<f64>,
    #[serde(default = "default_fraction")]
    pub certificate_fraction: f64,
}

fn default_c_tol() -> f64 {
    10.0
}

fn default_fraction() -> f64 {
    0.1
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            c_tol: default_c_tol(),
            tol: None,
            jump_rel: None,
            certificate_fraction: default_fraction(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("ris-sim-out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("{name} must be a positive number, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(usage(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        positive("grid.h", self.grid.h)?;
        positive("time.horizon", self.time.horizon)?;
        positive("time.tau", self.time.tau)?;
        positive("tolerances.c_tol", self.tolerances.c_tol)?;
        if let Some(t) = self.tolerances.tol {
            positive("tolerances.tol", t)?;
        }
        if let Some(t) = self.tolerances.jump_rel {
            positive("tolerances.jump_rel", t)?;
        }
        let f = self.tolerances.certificate_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(usage(format!("tolerances.certificate_fraction must lie in (0, 1], got {f}")));
        }
        self.scheme()?;
        let space = self.space()?;
        let model = self.model()?;
        if model.dim() != space.dim() {
            return Err(usage(format!(
                "model '{}' needs a {}-dimensional grid",
                model.name(),
                model.dim()
            )));
        }
        self.initial_state(&space)?;
        if let Some(checks) = &self.scheme.checks {
            for c in checks {
                if !matches!(c.as_str(), "energetic" | "bv" | "ve") {
                    return Err(usage(format!("scheme.checks: unknown concept '{c}'")));
                }
            }
        }
        if let Some(sw) = &self.sweep {
            positive("sweep.epsilon", sw.epsilon)?;
            for &m in &sw.mu {
                positive("sweep.mu entries", m)?;
            }
            if sw.mu.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(usage("sweep.mu must be sorted in increasing order"));
            }
            if let Some(s) = sw.tau_scale {
                positive("sweep.tau_scale", s)?;
            }
            if let Some(s) = sw.h_scale {
                positive("sweep.h_scale", s)?;
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<Box<dyn EnergyModel>> {
        let m = &self.model;
        let horizon = self.time.horizon;
        let reject = |fields: &[(&str, bool)]| -> Result<()> {
            for (name, present) in fields {
                if *present {
                    return Err(usage(format!("model.{name} does not apply to model '{}'", m.name)));
                }
            }
            Ok(())
        };
        let dim = self.grid.lower.len();
        match m.name.as_str() {
            "quadratic" => {
                reject(&[
                    ("load_rate", m.load_rate.is_some()),
                    ("stiffness", m.stiffness.is_some()),
                    ("coefficients", m.coefficients.is_some()),
                ])?;
                let mut q = Quadratic::new(m.rate.unwrap_or(1.0), horizon);
                q.dim = dim;
                Ok(Box::new(q))
            }
            "double-well" => {
                reject(&[
                    ("rate", m.rate.is_some()),
                    ("stiffness", m.stiffness.is_some()),
                    ("coefficients", m.coefficients.is_some()),
                ])?;
                Ok(Box::new(DoubleWell::new(m.load_rate.unwrap_or(1.0), horizon)))
            }
            "two-well-2d" => {
                reject(&[("rate", m.rate.is_some()), ("coefficients", m.coefficients.is_some())])?;
                Ok(Box::new(TwoWell2d {
                    load_rate: m.load_rate.unwrap_or(1.0),
                    stiffness: m.stiffness.unwrap_or(1.0),
                    horizon,
                }))
            }
            "custom-polynomial" => {
                reject(&[("rate", m.rate.is_some()), ("stiffness", m.stiffness.is_some())])?;
                let coefficients = m
                    .coefficients
                    .clone()
                    .ok_or_else(|| usage("model.coefficients is required for 'custom-polynomial'"))?;
                Ok(Box::new(CustomPolynomial {
                    coefficients,
                    load_rate: m.load_rate.unwrap_or(0.0),
                    horizon,
                }))
            }
            other => Err(usage(format!("unknown model '{other}'"))),
        }
    }

    pub fn space_with_h(&self, h: f64) -> Result<StateSpace> {
        let g = &self.grid;
        if g.lower.len() != g.upper.len() {
            return Err(usage("grid.lower and grid.upper must have the same length"));
        }
        let conf = |e: Error| match e {
            Error::Config(msg) => usage(format!("grid: {msg}")),
            other => other,
        };
        match g.lower.len() {
            1 => StateSpace::line(g.lower[0], g.upper[0], h).map_err(conf),
            2 => StateSpace::plane([g.lower[0], g.lower[1]], [g.upper[0], g.upper[1]], h, g.seed).map_err(conf),
            n => Err(usage(format!("grids have 1 or 2 dimensions, got {n}"))),
        }
    }

    pub fn space(&self) -> Result<StateSpace> {
        self.space_with_h(self.grid.h)
    }

    pub fn initial_state(&self, space: &StateSpace) -> Result<State> {
        let u = State::from_coords(&self.initial.state).map_err(|_| usage("initial.state must have 1 or 2 coordinates"))?;
        if self.initial.state.len() != space.dim() || !space.contains(&u) {
            return Err(usage(format!("initial state {u} lies outside the grid bounds")));
        }
        Ok(space.point(space.nearest(&u)))
    }

    pub fn scheme(&self) -> Result<Scheme> {
        let s = &self.scheme;
        match s.kind.as_str() {
            "energetic" => Ok(Scheme::Energetic),
            "viscous" => {
                let e = s.epsilon.ok_or_else(|| usage("scheme.epsilon is required for 'viscous'"))?;
                positive("scheme.epsilon", e)?;
                Ok(Scheme::Viscous { epsilon: e })
            }
            "visco-energetic" | "ve" => {
                let mu = s.mu.ok_or_else(|| usage("scheme.mu is required for 'visco-energetic'"))?;
                if !(mu > 0.0) {
                    return Err(usage(format!("scheme.mu must be positive (μ > 0 is a fixed parameter), got {mu}")));
                }
                Ok(Scheme::ViscoEnergetic { mu })
            }
            other => Err(usage(format!("unknown scheme '{other}'"))),
        }
    }

    fn options(&self, h: f64, tau: f64) -> CheckOptions {
        let t = &self.tolerances;
        let mut o = CheckOptions::new(t.tol.unwrap_or_else(|| default_tolerance(t.c_tol, h, tau, tau)));
        o.jump_rel_tol = t.jump_rel;
        o
    }
}

/// Artifacts of one solver run.
#[derive(Debug)]
pub struct RunOutcome {
    pub trajectory: DiscreteTrajectory,
    /// Interpolant with consecutive jump records merged.
    pub curve: BvCurve,
    pub reports: Vec<VerificationReport>,
    pub certificate: CertificateReport,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.certificate.passed() && self.reports.iter().all(|r| r.passed())
    }

    pub fn jump_time(&self) -> Option<f64> {
        self.curve.jumps().first().map(|j| j.t)
    }
}

/// Solve with `scheme` on `space` and return the trajectory together with its
/// coalesced interpolant.
pub fn simulate(
    model: &dyn EnergyModel,
    space: &StateSpace,
    scheme: Scheme,
    horizon: f64,
    tau: f64,
    u0: &State,
) -> Result<(DiscreteTrajectory, BvCurve)> {
    let partition = TimePartition::uniform(horizon, tau)?;
    let u0 = space.snap(u0)?;
    let traj = solve(model, space, scheme, &partition, &u0)?;
    let curve = traj.interpolant()?.coalesce_jumps()?;
    Ok((traj, curve))
}

/// Verify `curve` against `concept` (`energetic`, `bv` or `ve`).
pub fn verify_concept(
    model: &dyn EnergyModel,
    space: &StateSpace,
    curve: &BvCurve,
    concept: &str,
    mu: Option<f64>,
    opts: &CheckOptions,
) -> Result<VerificationReport> {
    match concept {
        "energetic" => check_energetic(model, space, curve, opts),
        "bv" => check_bv(model, space, curve, opts),
        "ve" => {
            let mu = mu.ok_or_else(|| usage("concept 've' needs μ"))?;
            check_ve(model, space, curve, mu, opts)
        }
        other => Err(usage(format!("unknown concept '{other}'"))),
    }
}

fn write_artifacts(dir: &Path, stem: &str, traj: &DiscreteTrajectory, curve: &BvCurve) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let tpath = dir.join(format!("{stem}_trajectory.csv"));
    traj.write_csv(fs::File::create(&tpath)?)?;
    curve.save(&dir.join(format!("{stem}_curve.csv")))?;
    Ok(tpath)
}

/// Run the configured scheme, verify the requested concepts, recheck a
/// random fraction of the steps exhaustively, and write all artifacts.
pub fn run_single(cfg: &RunConfig) -> Result<RunOutcome> {
    let model = cfg.model()?;
    let space = cfg.space()?;
    let scheme = cfg.scheme()?;
    let u0 = cfg.initial_state(&space)?;
    info!("running {scheme} on '{}' with {} grid points", model.name(), space.len());
    let (trajectory, curve) = simulate(model.as_ref(), &space, scheme, cfg.time.horizon, cfg.time.tau, &u0)?;
    let certificate = certify(
        model.as_ref(),
        &space,
        &trajectory,
        cfg.tolerances.certificate_fraction,
        cfg.grid.seed,
    )?;
    let checks = cfg.scheme.checks.clone().unwrap_or_else(|| {
        vec![match scheme {
            Scheme::Energetic => "energetic".to_string(),
            Scheme::Viscous { .. } => "bv".to_string(),
            Scheme::ViscoEnergetic { .. } => "ve".to_string(),
        }]
    });
    let mu = match scheme {
        Scheme::ViscoEnergetic { mu } => Some(mu),
        _ => cfg.scheme.mu,
    };
    let opts = cfg.options(space.h(), cfg.time.tau);
    let mut reports = Vec::new();
    for c in &checks {
        reports.push(verify_concept(model.as_ref(), &space, &curve, c, mu, &opts)?);
    }
    let dir = &cfg.output.dir;
    write_artifacts(dir, "run", &trajectory, &curve)?;
    for r in &reports {
        fs::write(dir.join(format!("report_{}.txt", r.concept)), r.to_text())?;
        r.write_csv(fs::File::create(dir.join(format!("report_{}.csv", r.concept)))?)?;
    }
    Ok(RunOutcome { trajectory, curve, reports, certificate })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub sup_distance: f64,
    pub max_energy_gap: f64,
}

/// Sup-distance and energy gap between two curves on a common sample grid,
/// ignoring samples within `delta` of a jump of either curve.
pub fn compare_trajectories(model: &dyn EnergyModel, a: &BvCurve, b: &BvCurve, delta: f64) -> Result<Comparison> {
    if a.len() != b.len() || a.times().iter().zip(b.times()).any(|(x, y)| (x - y).abs() > 1e-12 * (1.0 + x.abs())) {
        return Err(usage("compared curves must share their sample grid"));
    }
    let jumps: Vec<f64> = a.jumps().iter().chain(b.jumps()).map(|j| j.t).collect();
    Ok(compare_values(model, a.times(), a.values(), b.values(), &jumps, delta))
}

/// Compare two curves after resampling both at `0, dt, 2dt, …` up to the
/// common horizon; jump times come from the original curves.
pub fn compare_resampled(model: &dyn EnergyModel, a: &BvCurve, b: &BvCurve, dt: f64, delta: f64) -> Result<Comparison> {
    let end = a.end().min(b.end());
    let n = (end / dt + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|k| (k as f64 * dt).min(end)).collect();
    let va = times.iter().map(|&t| a.value_at(t)).collect::<Result<Vec<_>>>()?;
    let vb = times.iter().map(|&t| b.value_at(t)).collect::<Result<Vec<_>>>()?;
    let jumps: Vec<f64> = a.jumps().iter().chain(b.jumps()).map(|j| j.t).collect();
    Ok(compare_values(model, &times, &va, &vb, &jumps, delta))
}

fn compare_values(model: &dyn EnergyModel, times: &[f64], a: &[State], b: &[State], jumps: &[f64], delta: f64) -> Comparison {
    let mut out = Comparison { sup_distance: 0.0, max_energy_gap: 0.0 };
    for (k, &t) in times.iter().enumerate() {
        if jumps.iter().any(|&j| (t - j).abs() <= delta) {
            continue;
        }
        out.sup_distance = out.sup_distance.max(a[k].dist(&b[k]));
        out.max_energy_gap = out.max_energy_gap.max((model.energy(t, &a[k]) - model.energy(t, &b[k])).abs());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// μ ↓ 0 toward the energetic solution.
    Down,
    /// μ ↑ ∞ toward the balanced-viscosity solution.
    Up,
}

impl Direction {
    pub fn reference_tag(self) -> &'static str {
        match self {
            Direction::Down => "energetic",
            Direction::Up => "bv",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub mu: f64,
    pub h: f64,
    pub tau: f64,
    pub trajectory_path: PathBuf,
    pub jump_times: Vec<f64>,
    pub comparison: Comparison,
    pub verified: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub reference: String,
    pub reference_jump_times: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Number of times the sup-distance grows by more than one grid step as μ
    /// moves toward the limit.
    pub trend_inversions: usize,
}

impl SweepResult {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("mu,h,tau,jump_time,sup_distance,max_energy_gap,verified,trajectory\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                fmt17(r.mu),
                fmt17(r.h),
                fmt17(r.tau),
                r.jump_times.first().map_or(String::new(), |&t| fmt17(t)),
                fmt17(r.comparison.sup_distance),
                fmt17(r.comparison.max_energy_gap),
                r.verified.map_or("".into(), |v| v.to_string()),
                r.trajectory_path.display()
            );
        }
        s
    }
}

/// Refine `base` by the smallest integer factor that brings it to at most
/// `target`.
pub fn refine_to(base: f64, target: f64) -> f64 {
    if base <= target {
        base
    } else {
        base / (base / target).ceil()
    }
}

/// Step and grid spacing used for parameter `μ` in a sweep.
pub fn resolution_for(cfg: &RunConfig, mu: f64) -> (f64, f64) {
    let sw = cfg.sweep.as_ref();
    let tau = match sw.and_then(|s| s.tau_scale) {
        Some(c) => refine_to(cfg.time.tau, c / mu),
        None => cfg.time.tau,
    };
    let h = match sw.and_then(|s| s.h_scale) {
        Some(c) => refine_to(cfg.grid.h, c / mu),
        None => cfg.grid.h,
    };
    (tau, h)
}

/// The reference for a sweep: the energetic scheme for `Down`, the viscous
/// scheme with `τ = ε²` for `Up`.
pub fn reference_run(cfg: &RunConfig, direction: Direction) -> Result<(DiscreteTrajectory, BvCurve)> {
    let model = cfg.model()?;
    let space = cfg.space()?;
    let u0 = cfg.initial_state(&space)?;
    match direction {
        Direction::Down => simulate(model.as_ref(), &space, Scheme::Energetic, cfg.time.horizon, cfg.time.tau, &u0),
        Direction::Up => {
            let eps = cfg.sweep.as_ref().map_or(default_epsilon(), |s| s.epsilon);
            simulate(
                model.as_ref(),
                &space,
                Scheme::Viscous { epsilon: eps },
                cfg.time.horizon,
                eps * eps,
                &u0,
            )
        }
    }
}

/// Run VE_μ for every μ in the sweep list and compare with the reference.
pub fn run_mu_sweep(cfg: &RunConfig, direction: Direction) -> Result<SweepResult> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| usage("a sweep needs a [sweep] table"))?;
    if sw.mu.len() < 2 || sw.mu[sw.mu.len() - 1] / sw.mu[0] < 1e3 * (1.0 - 1e-12) {
        return Err(usage("sweep.mu must span at least three decades"));
    }
    let model = cfg.model()?;
    let dir = cfg.output.dir.clone();
    let (ref_traj, ref_curve) = reference_run(cfg, direction)?;
    write_artifacts(&dir, &format!("reference_{}", direction.reference_tag()), &ref_traj, &ref_curve)?;
    let delta = 5.0 * cfg.time.tau;
    let rows = crate::par::map_slice(&sw.mu, |&mu| -> Result<SweepRow> {
        let (tau, h) = resolution_for(cfg, mu);
        let space = cfg.space_with_h(h)?;
        let u0 = cfg.initial_state(&space)?;
        let (traj, curve) = simulate(model.as_ref(), &space, Scheme::ViscoEnergetic { mu }, cfg.time.horizon, tau, &u0)?;
        let comparison = compare_resampled(model.as_ref(), &curve, &ref_curve, cfg.time.tau, delta)?;
        let verified = if sw.verify {
            let opts = cfg.options(h, tau);
            Some(check_ve(model.as_ref(), &space, &curve, mu, &opts)?.passed())
        } else {
            None
        };
        let path = write_artifacts(&dir, &format!("mu_{}", fmt17(mu)), &traj, &curve)?;
        Ok(SweepRow {
            mu,
            h,
            tau,
            trajectory_path: path,
            jump_times: curve.jumps().iter().map(|j| j.t).collect(),
            comparison,
            verified,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let dists: Vec<f64> = match direction {
        Direction::Down => rows.iter().rev().map(|r| r.comparison.sup_distance).collect(),
        Direction::Up => rows.iter().map(|r| r.comparison.sup_distance).collect(),
    };
    let step = cfg.grid.h;
    let trend_inversions = dists.windows(2).filter(|w| w[1] > w[0] + step).count();
    let result = SweepResult {
        reference: direction.reference_tag().to_string(),
        reference_jump_times: ref_curve.jumps().iter().map(|j| j.t).collect(),
        rows,
        trend_inversions,
    };
    fs::write(dir.join(format!("sweep_{}.csv", direction.reference_tag())), result.to_csv_string())?;
    Ok(result)
}
