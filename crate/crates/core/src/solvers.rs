//! Time-incremental minimization schemes and their interpolants.

use std::fmt;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bvcurve::{fmt17, BvCurve, JumpRecord};
use crate::error::{domain, Error, Result};
use crate::model::{
    check_time, grid_argmin, grid_min_value_exhaustive, tie_tolerance, EnergyModel, GridMin, Penalty,
    State, StateSpace,
};

#[derive(Clone, Debug, PartialEq)]
pub struct TimePartition {
    nodes: Vec<f64>,
}

impl TimePartition {
    /// `0 = t_0 < … < t_N = T` with `N = ⌈T/τ⌉` equal steps.
    pub fn uniform(horizon: f64, tau: f64) -> Result<Self> {
        if !(horizon > 0.0 && tau > 0.0) {
            return Err(domain(format!("need T > 0 and τ > 0, got T={horizon}, τ={tau}")));
        }
        let n = ((horizon / tau) - 1e-9).ceil().max(1.0) as usize;
        let nodes = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        Ok(TimePartition { nodes })
    }

    pub fn custom(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(domain("a partition needs at least two nodes starting at 0"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("partition nodes must be strictly increasing"));
        }
        Ok(TimePartition { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Largest step `τ`.
    pub fn fineness(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    Energetic,
    Viscous { epsilon: f64 },
    ViscoEnergetic { mu: f64 },
}

impl Scheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Scheme::Energetic => Ok(()),
            Scheme::Viscous { epsilon } if epsilon > 0.0 => Ok(()),
            Scheme::ViscoEnergetic { mu } if mu > 0.0 => Ok(()),
            Scheme::Viscous { epsilon } => Err(domain(format!("ε must be positive, got {epsilon}"))),
            Scheme::ViscoEnergetic { mu } => Err(domain(format!("μ must be positive, got {mu}"))),
        }
    }

    /// Penalty on `d(U_{n−1}, U)` for a step of length `tau`.
    pub fn penalty(&self, tau: f64) -> Penalty {
        match *self {
            Scheme::Energetic => Penalty::metric(),
            Scheme::Viscous { epsilon } => Penalty::augmented(epsilon / tau),
            Scheme::ViscoEnergetic { mu } => Penalty::augmented(mu),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Energetic => write!(f, "energetic"),
            Scheme::Viscous { epsilon } => write!(f, "viscous(eps={epsilon})"),
            Scheme::ViscoEnergetic { mu } => write!(f, "visco-energetic(mu={mu})"),
        }
    }
}

/// One step of the energetic scheme: a global grid minimizer of
/// `E(t_n, ·) + d(u_prev, ·)`.
pub fn energetic_step(model: &dyn EnergyModel, space: &StateSpace, t: f64, u_prev: &State) -> GridMin {
    grid_argmin(model, space, t, u_prev, Penalty::metric())
}

/// One step of the viscous scheme: minimizes
/// `E(t_n, ·) + d(u_prev, ·) + (ε / 2τ) d²(u_prev, ·)`.
pub fn viscous_step(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    u_prev: &State,
    epsilon: f64,
    tau: f64,
) -> Result<GridMin> {
    if !(epsilon > 0.0 && tau > 0.0) {
        return Err(domain(format!("viscous step needs ε > 0 and τ > 0, got {epsilon}, {tau}")));
    }
    Ok(grid_argmin(model, space, t, u_prev, Penalty::augmented(epsilon / tau)))
}

/// One step of the visco-energetic scheme: minimizes
/// `E(t_n, ·) + d(u_prev, ·) + (μ/2) d²(u_prev, ·)`.
pub fn ve_step(model: &dyn EnergyModel, space: &StateSpace, t: f64, u_prev: &State, mu: f64) -> Result<GridMin> {
    if !(mu > 0.0) {
        return Err(domain(format!("μ must be positive, got {mu}")));
    }
    Ok(grid_argmin(model, space, t, u_prev, Penalty::augmented(mu)))
}

#[derive(Clone, Copy, Debug)]
pub struct StepRecord {
    /// Minimal objective `E(t_n, U_n) + φ(d(U_{n−1}, U_n))`.
    pub objective: f64,
    pub runner_up_gap: f64,
    /// `d(U_{n−1}, U_n)`.
    pub dissipation: f64,
    /// Trapezoid approximation of `∫ P(r, U_{n−1}) dr` over the step.
    pub work: f64,
    /// `E(t_n,U_n) + d(U_{n−1},U_n) − E(t_{n−1},U_{n−1}) − work`; should be
    /// at most the quadrature error.
    pub energy_residual: f64,
}

#[derive(Clone, Debug)]
pub struct DiscreteTrajectory {
    pub partition: TimePartition,
    pub states: Vec<State>,
    pub scheme: Scheme,
    pub dim: usize,
    pub h: f64,
    pub steps: Vec<StepRecord>,
}

impl DiscreteTrajectory {
    pub fn times(&self) -> &[f64] {
        self.partition.nodes()
    }

    /// Largest per-step discrete energy residual.
    pub fn max_energy_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.energy_residual).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max(10h, 5 · median step displacement)`.
    pub fn jump_threshold(&self) -> f64 {
        let mut d: Vec<f64> = self.steps.iter().map(|s| s.dissipation).collect();
        let median = if d.is_empty() {
            0.0
        } else {
            d.sort_by(f64::total_cmp);
            let m = d.len() / 2;
            if d.len() % 2 == 1 {
                d[m]
            } else {
                0.5 * (d[m - 1] + d[m])
            }
        };
        (10.0 * self.h).max(5.0 * median)
    }

    /// Index `n` of the first step whose displacement exceeds the jump
    /// threshold.
    pub fn first_jump_step(&self) -> Option<usize> {
        let thr = self.jump_threshold();
        self.steps.iter().position(|s| s.dissipation > thr).map(|k| k + 1)
    }

    /// Piecewise interpolant: steps above the jump threshold become jump
    /// records at `t_n` (left `U_{n−1}`, value and right limit `U_n`), the
    /// remaining motion is kept continuous between nodes.
    pub fn interpolant(&self) -> Result<BvCurve> {
        let thr = self.jump_threshold();
        let t = self.times();
        let jumps = self
            .steps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.dissipation > thr)
            .map(|(k, _)| JumpRecord::new(t[k + 1], self.states[k], self.states[k + 1], self.states[k + 1]))
            .collect();
        BvCurve::new(self.dim, t.to_vec(), self.states.clone(), jumps)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["n".to_string(), "t_n".to_string()];
        header.extend((1..=self.dim).map(|i| format!("U_{i}")));
        header.push("objective".into());
        header.push("runner_up_gap".into());
        out.write_record(&header)?;
        for (n, (&t, u)) in self.times().iter().zip(&self.states).enumerate() {
            let mut row = vec![n.to_string(), fmt17(t)];
            row.extend(u.coords(self.dim).iter().map(|&x| fmt17(x)));
            match n.checked_sub(1).map(|k| self.steps[k]) {
                Some(s) => {
                    row.push(fmt17(s.objective));
                    row.push(fmt17(s.runner_up_gap));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn trapezoid_work(model: &dyn EnergyModel, a: f64, b: f64, u: &State) -> f64 {
    0.5 * (b - a) * (model.power(a, u) + model.power(b, u))
}

/// Run `scheme` over `partition` from the grid state `u0`.
pub fn solve(
    model: &dyn EnergyModel,
    space: &StateSpace,
    scheme: Scheme,
    partition: &TimePartition,
    u0: &State,
) -> Result<DiscreteTrajectory> {
    scheme.validate()?;
    if model.dim() != space.dim() {
        return Err(domain(format!(
            "model '{}' is {}-dimensional but the grid is {}-dimensional",
            model.name(),
            model.dim(),
            space.dim()
        )));
    }
    check_time(model, partition.horizon())?;
    let i0 = space
        .index_of(u0)
        .ok_or_else(|| domain(format!("initial state {u0} is not a grid point")))?;
    let nodes = partition.nodes();
    let mut states = Vec::with_capacity(nodes.len());
    let mut steps = Vec::with_capacity(nodes.len() - 1);
    states.push(space.point(i0));
    for n in 1..nodes.len() {
        let (a, b) = (nodes[n - 1], nodes[n]);
        let prev = states[n - 1];
        let m = grid_argmin(model, space, b, &prev, scheme.penalty(b - a));
        let dissipation = prev.dist(&m.state);
        let work = trapezoid_work(model, a, b, &prev);
        let energy_residual = model.energy(b, &m.state) + dissipation - model.energy(a, &prev) - work;
        steps.push(StepRecord {
            objective: m.value,
            runner_up_gap: m.runner_up_gap(),
            dissipation,
            work,
            energy_residual,
        });
        states.push(m.state);
    }
    Ok(DiscreteTrajectory {
        partition: partition.clone(),
        states,
        scheme,
        dim: space.dim(),
        h: space.h(),
        steps,
    })
}

#[derive(Clone, Debug, Default)]
pub struct CertificateReport {
    pub checked: usize,
    pub failures: Vec<usize>,
    /// Largest `objective(U_n) − exhaustive minimum` seen.
    pub worst_excess: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Recheck a seeded random `fraction` of the steps (at least one) against an
/// exhaustive scan of the whole grid.
pub fn certify(
    model: &dyn EnergyModel,
    space: &StateSpace,
    traj: &DiscreteTrajectory,
    fraction: f64,
    seed: u64,
) -> Result<CertificateReport> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("certificate fraction must lie in (0, 1], got {fraction}")));
    }
    let total = traj.steps.len();
    if total == 0 {
        return Ok(CertificateReport::default());
    }
    let count = ((fraction * total as f64).ceil() as usize).clamp(1, total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, count).into_vec();
    picks.sort_unstable();
    let nodes = traj.times();
    let results = crate::par::map_slice(&picks, |&k| {
        let (a, b) = (nodes[k], nodes[k + 1]);
        let prev = traj.states[k];
        let pen = traj.scheme.penalty(b - a);
        let best = grid_min_value_exhaustive(model, space, b, &prev, pen);
        let ours = model.energy(b, &traj.states[k + 1]) + pen.eval(prev.dist(&traj.states[k + 1]));
        (k + 1, ours - best)
    });
    let mut report = CertificateReport {
        checked: count,
        failures: Vec::new(),
        worst_excess: f64::NEG_INFINITY,
    };
    for (n, excess) in results {
        report.worst_excess = report.worst_excess.max(excess);
        if excess > tie_tolerance(excess.abs()) * 10.0 && excess > 0.0 {
            report.failures.push(n);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DoubleWell, Quadratic};

    struct Constant;
    impl EnergyModel for Constant {
        fn name(&self) -> &str {
            "constant"
        }
        fn dim(&self) -> usize {
            1
        }
        fn energy(&self, _t: f64, _u: &State) -> f64 {
            2.0
        }
        fn horizon(&self) -> f64 {
            1.0
        }
        fn power_constant(&self) -> f64 {
            1.0
        }
    }

    /// `E(t, u) = ½ (u − c)²` frozen in time.
    struct Bowl(f64);
    impl EnergyModel for Bowl {
        fn name(&self) -> &str {
            "bowl"
        }
        fn dim(&self) -> usize {
            1
        }
        fn energy(&self, _t: f64, u: &State) -> f64 {
            0.5 * (u.x() - self.0).powi(2)
        }
        fn horizon(&self) -> f64 {
            1.0
        }
        fn power_constant(&self) -> f64 {
            1.0
        }
    }

    fn brute(model: &dyn EnergyModel, space: &StateSpace, t: f64, from: f64, pen: Penalty) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..space.len() {
            let p = space.point(i);
            let v = model.energy(t, &p) + pen.eval((p.x() - from).abs());
            if v < best.0 - 1e-12 {
                best = (v, p.x());
            }
        }
        best.1
    }

    #[test]
    fn uniform_partition() {
        let p = TimePartition::uniform(1.0, 0.3).unwrap();
        assert_eq!(p.steps(), 4);
        assert_eq!(p.horizon(), 1.0);
        assert!(TimePartition::custom(vec![0.0, 0.5, 0.4]).is_err());
        assert_eq!(TimePartition::uniform(2.0, 1e-3).unwrap().steps(), 2000);
    }

    #[test]
    fn energetic_step_examples() {
        let s = StateSpace::line(-2.0, 2.0, 1e-3).unwrap();
        let q = Quadratic::new(1.0, 1.0);
        let t = 0.5;
        assert!((energetic_step(&q, &s, t, &State::scalar(0.5)).state.x() - 0.5).abs() < 1e-12);
        let c = Constant;
        assert_eq!(energetic_step(&c, &s, 0.3, &State::scalar(0.7)).state.x(), s.snap(&State::scalar(0.7)).unwrap().x());
        let fine = StateSpace::line(-2.0, 2.0, 1e-4).unwrap();
        let dw = DoubleWell::new(1.0, 2.0);
        let got = energetic_step(&dw, &fine, 2.0, &State::scalar(-1.0)).state.x();
        let oracle = brute(&dw, &fine, 2.0, -1.0, Penalty::metric());
        assert!((got - oracle).abs() < 1e-12);
        assert!(got > 1.0);
    }

    #[test]
    fn viscous_step_examples() {
        let s = StateSpace::line(-2.0, 2.0, 1e-3).unwrap();
        let p = State::scalar(0.25);
        assert_eq!(viscous_step(&Constant, &s, 0.1, &p, 0.1, 0.1).unwrap().state, p);
        assert!(viscous_step(&Bowl(0.0), &s, 0.1, &State::scalar(0.0), 1.0, 0.1).unwrap().state.x().abs() < 1e-12);
        let got = viscous_step(&Bowl(1.0), &s, 0.1, &State::scalar(0.0), 1.0, 1.0).unwrap().state.x();
        assert!(got.abs() < 1e-12);
        assert_eq!(got, brute(&Bowl(1.0), &s, 0.1, 0.0, Penalty::augmented(1.0)));
    }

    #[test]
    fn ve_step_examples() {
        let s = StateSpace::line(-2.0, 2.0, 1e-3).unwrap();
        assert_eq!(ve_step(&Constant, &s, 0.1, &State::scalar(1.0), 5.0).unwrap().state.x(), 1.0);
        // tiny μ reproduces the energetic minimizer
        let dw = DoubleWell::new(1.0, 2.0);
        for &t in &[0.3, 0.9, 1.1, 1.7] {
            for &x in &[-1.0, -0.5, 0.4, 1.2] {
                let u = State::scalar(x);
                let e = energetic_step(&dw, &s, t, &u).state;
                let v = ve_step(&dw, &s, t, &u, 1e-9).unwrap().state;
                assert_eq!(e, v, "t={t} x={x}");
            }
        }
        // ½U² + |U − 1| + ½(U − 1)²: the slope 2U − 2 stays negative below 1
        let fine = StateSpace::line(-2.0, 2.0, 1e-5).unwrap();
        let got = ve_step(&Bowl(0.0), &fine, 0.0, &State::scalar(1.0), 1.0).unwrap().state.x();
        assert!((got - brute(&Bowl(0.0), &fine, 0.0, 1.0, Penalty::augmented(1.0))).abs() < 1e-12);
        assert!((got - 1.0).abs() < 1e-12);
        assert!(ve_step(&Constant, &s, 0.1, &State::scalar(1.0), 0.0).is_err());
    }

    #[test]
    fn constant_energy_gives_constant_trajectory() {
        let s = StateSpace::line(-1.0, 1.0, 1e-2).unwrap();
        let p = TimePartition::uniform(1.0, 0.1).unwrap();
        for scheme in [Scheme::Energetic, Scheme::Viscous { epsilon: 0.1 }, Scheme::ViscoEnergetic { mu: 3.0 }] {
            let tr = solve(&Constant, &s, scheme, &p, &State::scalar(0.3)).unwrap();
            assert!(tr.states.iter().all(|u| (u.x() - 0.3).abs() < 1e-12));
            assert!(tr.interpolant().unwrap().jumps().is_empty());
        }
    }

    #[test]
    fn quadratic_play_operator() {
        let s = StateSpace::line(-0.5, 2.5, 1e-3).unwrap();
        let q = Quadratic::new(2.0, 1.0);
        let p = TimePartition::uniform(1.0, 1e-2).unwrap();
        let tr = solve(&q, &s, Scheme::Energetic, &p, &State::scalar(0.0)).unwrap();
        for (&t, u) in tr.times().iter().zip(&tr.states) {
            assert!((u.x() - (2.0 * t - 1.0).max(0.0)).abs() <= 1e-3 + 2e-2 + 1e-12);
        }
        assert!(tr.max_energy_residual() < 1e-9);
        let cert = certify(&q, &s, &tr, 0.2, 7).unwrap();
        assert!(cert.passed());
    }

    #[test]
    fn double_well_energetic_jumps_once_near_maxwell_time() {
        let s = StateSpace::line(-2.0, 2.0, 1e-3).unwrap();
        let dw = DoubleWell::new(1.0, 2.0);
        let p = TimePartition::uniform(2.0, 1e-2).unwrap();
        let tr = solve(&dw, &s, Scheme::Energetic, &p, &State::scalar(-1.0)).unwrap();
        let c = tr.interpolant().unwrap();
        assert_eq!(c.jumps().len(), 1);
        assert!((c.jumps()[0].t - 1.0).abs() < 0.05);
    }

    #[test]
    fn interpolant_threshold_rules() {
        let s = StateSpace::line(0.0, 1.0, 1e-2).unwrap();
        let p = TimePartition::uniform(1.0, 0.25).unwrap();
        let mk = |xs: &[f64]| DiscreteTrajectory {
            partition: p.clone(),
            states: xs.iter().map(|&x| State::scalar(x)).collect(),
            scheme: Scheme::Energetic,
            dim: 1,
            h: s.h(),
            steps: xs
                .windows(2)
                .map(|w| StepRecord {
                    objective: 0.0,
                    runner_up_gap: 0.0,
                    dissipation: (w[1] - w[0]).abs(),
                    work: 0.0,
                    energy_residual: 0.0,
                })
                .collect(),
        };
        assert_eq!(mk(&[0.0, 0.0, 0.5, 0.5, 0.5]).interpolant().unwrap().jumps().len(), 1);
        assert!(mk(&[0.0, 0.01, 0.02, 0.03, 0.04]).interpolant().unwrap().jumps().is_empty());
    }

    #[test]
    fn trajectory_csv_layout() {
        let s = StateSpace::line(-1.0, 1.0, 0.5).unwrap();
        let p = TimePartition::uniform(1.0, 0.5).unwrap();
        let tr = solve(&Bowl(0.0), &s, Scheme::Energetic, &p, &State::scalar(0.5)).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,t_n,U_1,objective,runner_up_gap"));
        assert_eq!(text.lines().count(), 4);
    }
}
