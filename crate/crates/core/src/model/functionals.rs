use std::cmp::Ordering;

use log::warn;

use super::energy::EnergyModel;
use super::space::{State, StateSpace};
use crate::error::{domain, Error, Result};
use crate::par;

/// Dissipation penalty `φ(r) = linear · r + (quadratic / 2) · r²` added to the
/// energy in every incremental minimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalty {
    pub linear: f64,
    pub quadratic: f64,
}

impl Penalty {
    /// `φ(r) = r`: the plain distance.
    pub const fn metric() -> Self {
        Penalty { linear: 1.0, quadratic: 0.0 }
    }

    /// `φ(r) = r + (κ/2) r²`.
    pub const fn augmented(kappa: f64) -> Self {
        Penalty { linear: 1.0, quadratic: kappa }
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.linear * r + 0.5 * self.quadratic * r * r
    }

    /// Largest `r ≥ 0` with `φ(r) ≤ budget`.
    fn radius_for_budget(&self, budget: f64) -> f64 {
        if budget < 0.0 {
            return 0.0;
        }
        if self.quadratic > 0.0 {
            let a = self.linear;
            (-a + (a * a + 2.0 * self.quadratic * budget).sqrt()) / self.quadratic
        } else if self.linear > 0.0 {
            budget / self.linear
        } else {
            f64::INFINITY
        }
    }

    /// Largest `r` with `φ(r) − lip · r ≤ slack`.
    fn radius_for_lipschitz(&self, lip: f64, slack: f64) -> f64 {
        let excess = lip - self.linear;
        if self.quadratic > 0.0 {
            (excess + (excess * excess + 2.0 * self.quadratic * slack).sqrt()) / self.quadratic
        } else if excess < 0.0 {
            slack / -excess
        } else {
            f64::INFINITY
        }
    }
}

/// Result of minimizing `v ↦ E(t, v) + φ(d(u, v))` over the grid.
#[derive(Clone, Debug)]
pub struct GridMin {
    pub index: usize,
    pub state: State,
    pub value: f64,
    /// Best objective among scanned competitors other than the chosen one
    /// (`+∞` if the scan contained no other point).
    pub runner_up: f64,
    pub scanned: usize,
}

impl GridMin {
    pub fn runner_up_gap(&self) -> f64 {
        self.runner_up - self.value
    }
}

pub(crate) fn tie_tolerance(value: f64) -> f64 {
    1e-12 * (1.0 + value.abs())
}

/// Exact global grid minimization of `E(t, ·) + φ(d(from, ·))`.
///
/// Only points that can possibly beat `v = from` are scanned: the ball radius
/// is derived from the model's energy floor and Lipschitz bound when
/// available. Among minimizers (up to a relative tolerance of 1e-12) the one
/// closest to `from` wins, then the lexicographically smallest.
pub fn grid_argmin(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    from: &State,
    penalty: Penalty,
) -> GridMin {
    let e_from = model.energy(t, from);
    let slack = tie_tolerance(e_from) + 1e-15;
    let mut radius = f64::INFINITY;
    if let Some(floor) = model.energy_floor(t, space) {
        radius = radius.min(penalty.radius_for_budget(e_from - floor + slack));
    }
    if let Some(lip) = model.slope_bound(t, space) {
        radius = radius.min(penalty.radius_for_lipschitz(lip, slack));
    }
    let window = if radius.is_finite() {
        space.window(from, radius + space.h())
    } else {
        space.full_window()
    };
    scan_window(model, space, t, from, penalty, &window)
}

/// Same minimization over the whole grid with no pruning.
pub fn grid_argmin_exhaustive(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    from: &State,
    penalty: Penalty,
) -> GridMin {
    scan_window(model, space, t, from, penalty, &space.full_window())
}

/// Minimal value of `E(t, ·) + φ(d(from, ·))` over the whole grid, scanned
/// without pruning and without storing the objective.
pub fn grid_min_value_exhaustive(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    from: &State,
    penalty: Penalty,
) -> f64 {
    par::min_f64(0..space.len(), |i| {
        let p = space.point(i);
        model.energy(t, &p) + penalty.eval(from.dist(&p))
    })
}

fn scan_window(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    from: &State,
    penalty: Penalty,
    window: &super::space::Window,
) -> GridMin {
    let values = par::map_collect(0..window.len(), |k| {
        let p = space.point(window.index(k));
        model.energy(t, &p) + penalty.eval(from.dist(&p))
    });
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = best + tie_tolerance(best);
    let mut chosen: Option<(usize, State, f64)> = None;
    for (k, &v) in values.iter().enumerate() {
        if v > cutoff {
            continue;
        }
        let i = window.index(k);
        let p = space.point(i);
        let d = from.dist(&p);
        let better = match &chosen {
            None => true,
            Some((_, q, dq)) => match d.total_cmp(dq) {
                Ordering::Less => true,
                Ordering::Equal => p.lex_cmp(q) == Ordering::Less,
                Ordering::Greater => false,
            },
        };
        if better {
            chosen = Some((k, p, d));
        }
    }
    let (k_best, state, _) = chosen.expect("non-empty scan window");
    let runner_up = values
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != k_best)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    GridMin {
        index: window.index(k_best),
        state,
        value: values[k_best],
        runner_up,
        scanned: values.len(),
    }
}

/// `F(t, u) = E(t, u) + d(x_o, u)`.
pub fn perturbed_energy(model: &dyn EnergyModel, t: f64, u: &State) -> Result<f64> {
    check_time(model, t)?;
    Ok(model.energy(t, u) + model.reference_point().dist(u))
}

pub(crate) fn check_time(model: &dyn EnergyModel, t: f64) -> Result<()> {
    let big_t = model.horizon();
    if !(t >= -1e-12 * big_t && t <= big_t * (1.0 + 1e-12)) {
        return Err(domain(format!("time {t} outside [0, {big_t}]")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlopeMethod {
    Analytic,
    DifferenceQuotient,
    Duality,
}

#[derive(Clone, Copy, Debug)]
pub struct SlopeEstimate {
    pub value: f64,
    pub method: SlopeMethod,
    /// Neighbourhood radius or the step `τ` that produced the value.
    pub mesh: f64,
    /// A negative radicand was clamped to zero.
    pub clamped: bool,
}

/// Discrete metric slope: the largest descent rate
/// `(E(t,u) − E(t,v))₊ / d(u,v)` over grid points `v ≠ u` in the ball of
/// radius `radius` (default `3h`) around `u`.
pub fn slope_difference_quotient(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    u: &State,
    radius: Option<f64>,
) -> Result<SlopeEstimate> {
    let r = radius.unwrap_or(3.0 * space.h());
    let e_u = model.energy(t, u);
    let win = space.window(u, r);
    let mut best = 0.0f64;
    let mut seen = false;
    for k in 0..win.len() {
        let v = space.point(win.index(k));
        let d = u.dist(&v);
        if d == 0.0 || d > r * (1.0 + 1e-12) {
            continue;
        }
        seen = true;
        best = best.max((e_u - model.energy(t, &v)).max(0.0) / d);
    }
    if !seen {
        return Err(Error::Config(format!(
            "empty slope neighbourhood of radius {r} around {u}"
        )));
    }
    Ok(SlopeEstimate {
        value: best,
        method: SlopeMethod::DifferenceQuotient,
        mesh: r,
        clamped: false,
    })
}

/// Analytic slope when the model provides one, otherwise the difference
/// quotient over the default `3h` ball.
pub fn slope(model: &dyn EnergyModel, space: &StateSpace, t: f64, u: &State) -> Result<f64> {
    match model.analytic_slope(t, u) {
        Some(s) => Ok(s),
        None => Ok(slope_difference_quotient(model, space, t, u, None)?.value),
    }
}

/// Shape `ψ` of the dissipation in the generalized Moreau–Yosida transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsiShape {
    /// `ψ(r) = r²/2`
    Quadratic,
    /// `ψ(r) = r + r²/2`
    ViscoEnergetic,
}

impl PsiShape {
    /// `τ ψ(r/τ)` written as a [`Penalty`].
    pub fn scaled_penalty(self, tau: f64) -> Penalty {
        match self {
            PsiShape::Quadratic => Penalty { linear: 0.0, quadratic: 1.0 / tau },
            PsiShape::ViscoEnergetic => Penalty { linear: 1.0, quadratic: 1.0 / tau },
        }
    }
}

/// `Y_τ^ψ(t, u) = min_v [τ ψ(d(u,v)/τ) + E(t,v)]`, with `v = u` always
/// admissible.
pub fn moreau_yosida(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    u: &State,
    tau: f64,
    shape: PsiShape,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(domain(format!("Moreau–Yosida step must be positive, got {tau}")));
    }
    check_time(model, t)?;
    let m = grid_argmin(model, space, t, u, shape.scaled_penalty(tau));
    Ok(m.value.min(model.energy(t, u)))
}

/// Geometric ladder of `n` steps from `hi` down to `lo`.
pub fn tau_ladder(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![hi];
    }
    let ratio = (lo / hi).powf(1.0 / (n - 1) as f64);
    (0..n).map(|k| hi * ratio.powi(k as i32)).collect()
}

/// Slope estimate from the duality formula: the supremum over the ladder of
/// `√(2 (E − Y_τ) / τ)`. For the quadratic shape this estimates `|DE|`; for
/// the visco-energetic shape it estimates `(|DE| − 1)₊`.
pub fn slope_via_duality(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    u: &State,
    shape: PsiShape,
    taus: Option<&[f64]>,
) -> Result<SlopeEstimate> {
    let default_ladder;
    let taus = match taus {
        Some(ts) => ts,
        None => {
            default_ladder = tau_ladder(1e-1, 1e-3, 8);
            &default_ladder
        }
    };
    if taus.is_empty() || taus.windows(2).any(|w| !(w[1] < w[0])) || taus.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Config("τ ladder must be strictly decreasing and positive".into()));
    }
    let e_u = model.energy(t, u);
    let mut best = SlopeEstimate {
        value: 0.0,
        method: SlopeMethod::Duality,
        mesh: taus[0],
        clamped: false,
    };
    let mut clamped = false;
    for &tau in taus {
        let y = moreau_yosida(model, space, t, u, tau, shape)?;
        let rad = 2.0 * (e_u - y) / tau;
        let v = if rad < 0.0 {
            clamped = true;
            0.0
        } else {
            rad.sqrt()
        };
        if v > best.value {
            best.value = v;
            best.mesh = tau;
        }
    }
    if clamped {
        warn!("negative radicand clamped to zero in duality slope at t={t}, u={u}");
    }
    best.clamped = clamped;
    Ok(best)
}

/// Residual stability `R(t, u) = E(t,u) − inf_v [E(t,v) + d(u,v) + (μ/2) d²(u,v)]`.
pub fn residual(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    u: &State,
    mu: f64,
) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(domain(format!("μ must be positive, got {mu}")));
    }
    Ok(residual_with(model, space, t, u, Penalty::augmented(mu)).0)
}

/// Residual for an arbitrary penalty together with the minimizing state.
pub(crate) fn residual_with(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    u: &State,
    penalty: Penalty,
) -> (f64, GridMin) {
    let e_u = model.energy(t, u);
    let m = grid_argmin(model, space, t, u, penalty);
    ((e_u - m.value).max(0.0), m)
}

/// `sup_v [E(t,u) − E(t,v) − d(u,v)]₊` over the grid: zero iff `u` is
/// globally stable at time `t`.
pub fn d_stability_gap(model: &dyn EnergyModel, space: &StateSpace, t: f64, u: &State) -> f64 {
    residual_with(model, space, t, u, Penalty::metric()).0
}
