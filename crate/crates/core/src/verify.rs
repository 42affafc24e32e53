//! Certificates for the three solution concepts on sampled curves.

use std::fmt::Write as _;
use std::io::Write;

use crate::bvcurve::{fmt17, BvCurve, JumpCost};
use crate::error::{domain, Result};
use crate::jumpcost::{VeJumpCost, ViscousJumpCost};
use crate::model::{d_stability_gap, residual, slope, EnergyModel, State, StateSpace};
use crate::par;

/// `C_tol (h + τ + quadrature step)`.
pub fn default_tolerance(c_tol: f64, h: f64, tau: f64, quad_step: f64) -> f64 {
    c_tol * (h + tau + quad_step)
}

#[derive(Clone, Copy, Debug)]
pub struct CheckOptions {
    /// Absolute tolerance for stability, balance and localized inequalities.
    pub tol: f64,
    /// When set, a jump passes iff `|drop − cost| ≤ jump_rel_tol · |drop|`;
    /// otherwise the absolute `tol` applies.
    pub jump_rel_tol: Option<f64>,
    /// Number of dyadic levels for the localized energy inequality.
    pub dyadic_levels: u32,
}

impl CheckOptions {
    pub fn new(tol: f64) -> Self {
        CheckOptions { tol, jump_rel_tol: None, dyadic_levels: 4 }
    }

    fn jump_passes(&self, gap: f64, drop: f64) -> (bool, f64) {
        match self.jump_rel_tol {
            Some(r) => (gap <= r * drop.abs(), r * drop.abs()),
            None => (gap <= self.tol, self.tol),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionEntry {
    pub name: String,
    pub max_violation: f64,
    pub worst_time: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpEntry {
    pub t: f64,
    pub left: State,
    pub right: State,
    pub energy_drop: f64,
    pub cost: f64,
    /// `|energy_drop − cost|`.
    pub gap: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub concept: String,
    pub entries: Vec<ConditionEntry>,
    /// `(t_k, |LHS − RHS|)` of the energy balance at every sample.
    pub energy_balance_residual: Vec<(f64, f64)>,
    pub jump_entries: Vec<JumpEntry>,
    pub metadata: Vec<(String, String)>,
}

impl VerificationReport {
    fn new(concept: &str, space: &StateSpace, curve: &BvCurve, opts: &CheckOptions) -> Self {
        let metadata = vec![
            ("h".to_string(), fmt17(space.h())),
            ("samples".to_string(), curve.len().to_string()),
            ("jumps".to_string(), curve.jumps().len().to_string()),
            ("tol".to_string(), fmt17(opts.tol)),
        ];
        VerificationReport {
            concept: concept.to_string(),
            entries: Vec::new(),
            energy_balance_residual: Vec::new(),
            jump_entries: Vec::new(),
            metadata,
        }
    }

    fn push(&mut self, name: &str, (max_violation, worst_time): (f64, f64), tol: f64) {
        self.entries.push(ConditionEntry {
            name: name.to_string(),
            max_violation,
            worst_time,
            tol,
            pass: max_violation <= tol,
        });
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass) && self.jump_entries.iter().all(|j| j.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "concept: {}", self.concept);
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "{k}: {v}");
        }
        for e in &self.entries {
            let _ = writeln!(
                s,
                "[{}] {}: max_violation={} worst_time={} tol={}",
                if e.pass { "PASS" } else { "FAIL" },
                e.name,
                fmt17(e.max_violation),
                fmt17(e.worst_time),
                fmt17(e.tol)
            );
        }
        for j in &self.jump_entries {
            let _ = writeln!(
                s,
                "[{}] jump t={} {} -> {}: drop={} cost={} gap={} tol={}",
                if j.pass { "PASS" } else { "FAIL" },
                fmt17(j.t),
                j.left,
                j.right,
                fmt17(j.energy_drop),
                fmt17(j.cost),
                fmt17(j.gap),
                fmt17(j.tol)
            );
        }
        let _ = writeln!(s, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }

    /// Rows `condition, max_violation, worst_time, tol, pass`; jumps appear
    /// as `jump@<t>`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["condition", "max_violation", "worst_time", "tol", "pass"])?;
        for e in &self.entries {
            out.write_record([
                e.name.clone(),
                fmt17(e.max_violation),
                fmt17(e.worst_time),
                fmt17(e.tol),
                e.pass.to_string(),
            ])?;
        }
        for j in &self.jump_entries {
            out.write_record([
                format!("jump@{}", fmt17(j.t)),
                fmt17(j.gap),
                fmt17(j.t),
                fmt17(j.tol),
                j.pass.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Largest value of `f` over the listed samples together with its time;
/// ties keep the earliest sample.
fn worst(times: &[f64], values: &[f64]) -> (f64, f64) {
    let mut best = (0.0, times.first().copied().unwrap_or(0.0));
    for (&t, &v) in times.iter().zip(values) {
        if v > best.0 {
            best = (v, t);
        }
    }
    best
}

/// Cumulative `∫_{t_0}^{t_k} P(s, u(s)) ds` by the trapezoid rule, using the
/// left limit at the right end of each sample interval.
fn cumulative_work(model: &dyn EnergyModel, curve: &BvCurve) -> Vec<f64> {
    let t = curve.times();
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for k in 1..curve.len() {
        let a = model.power(t[k - 1], &curve.right_limit(k - 1));
        let b = model.power(t[k], &curve.left_limit(k));
        acc += 0.5 * (t[k] - t[k - 1]) * (a + b);
        out.push(acc);
    }
    out
}

/// Cumulative `Var_{d,e}(u; [t_0, t_k])` with the jump costs evaluated once
/// per jump record.
fn cumulative_augmented(curve: &BvCurve, e: Option<&dyn JumpCost>) -> Result<Vec<f64>> {
    let base = curve.variation_function().values;
    let Some(e) = e else { return Ok(base) };
    let mut extra = vec![0.0; curve.len()];
    let mut carried = 0.0;
    for k in 0..curve.len() {
        if let Some(j) = curve.jump_at_sample(k) {
            let left = e.cost(j.t, &j.left, &j.at)? - j.left.dist(&j.at);
            let right = e.cost(j.t, &j.at, &j.right)? - j.at.dist(&j.right);
            extra[k] = carried + if k == 0 { 0.0 } else { left };
            carried = extra[k] + right;
        } else {
            extra[k] = carried;
        }
    }
    Ok(base.iter().zip(&extra).map(|(a, b)| a + b).collect())
}

/// Energy balance `E(t, u(t)) + Var_{d,e}(u; [t_0, t]) = E(t_0, u(t_0)) + ∫ P`
/// at every sample; returns `|LHS − RHS|` and the signed upper-estimate
/// residual `LHS − RHS` per sample.
fn balance_series(
    model: &dyn EnergyModel,
    curve: &BvCurve,
    var: &[f64],
    work: &[f64],
) -> Vec<f64> {
    let t = curve.times();
    let e0 = model.energy(t[0], &curve.values()[0]);
    (0..curve.len())
        .map(|k| model.energy(t[k], &curve.values()[k]) + var[k] - e0 - work[k])
        .collect()
}

/// Localized inequality `E(t,u(t)) + Var_{d,e}[s,t] ≤ E(s,u(s)) + ∫_s^t P` on
/// dyadic intervals snapped to sample indices; positive part of LHS − RHS.
fn localized(
    model: &dyn EnergyModel,
    curve: &BvCurve,
    var: &[f64],
    work: &[f64],
    levels: u32,
) -> (f64, f64) {
    let t = curve.times();
    let n = curve.len() - 1;
    let mut out = (0.0, t[0]);
    for level in 0..=levels {
        let parts = 1usize << level;
        for p in 0..parts {
            let a = p * n / parts;
            let b = (p + 1) * n / parts;
            if b <= a {
                continue;
            }
            let lhs = model.energy(t[b], &curve.values()[b]) + var[b] - var[a];
            let rhs = model.energy(t[a], &curve.values()[a]) + work[b] - work[a];
            let v = lhs - rhs;
            if v > out.0 {
                out = (v, t[b]);
            }
        }
    }
    out
}

fn off_jump_samples(curve: &BvCurve) -> Vec<usize> {
    (0..curve.len()).filter(|&k| curve.jump_at_sample(k).is_none()).collect()
}

fn stability_entry<F>(report: &mut VerificationReport, curve: &BvCurve, idx: &[usize], name: &str, tol: f64, f: F) -> Result<()>
where
    F: Fn(f64, &State) -> Result<f64> + Sync + Send,
{
    let vals = par::map_slice(idx, |&k| f(curve.times()[k], &curve.values()[k]));
    let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = idx.iter().map(|&k| curve.times()[k]).collect();
    report.push(name, worst(&times, &vals), tol);
    Ok(())
}

fn balance_entries(
    report: &mut VerificationReport,
    model: &dyn EnergyModel,
    curve: &BvCurve,
    e: Option<&dyn JumpCost>,
    opts: &CheckOptions,
) -> Result<()> {
    let work = cumulative_work(model, curve);
    let var = cumulative_augmented(curve, e)?;
    let signed = balance_series(model, curve, &var, &work);
    let abs: Vec<f64> = signed.iter().map(|v| v.abs()).collect();
    report.energy_balance_residual = curve.times().iter().copied().zip(abs.iter().copied()).collect();
    report.push("energy_balance", worst(curve.times(), &abs), opts.tol);
    if e.is_some() {
        report.push(
            "localized_inequality",
            localized(model, curve, &var, &work, opts.dyadic_levels),
            opts.tol,
        );
    }
    Ok(())
}

fn jump_entries(
    report: &mut VerificationReport,
    model: &dyn EnergyModel,
    curve: &BvCurve,
    e: &dyn JumpCost,
    opts: &CheckOptions,
) -> Result<()> {
    for j in curve.jumps() {
        let drop = model.energy(j.t, &j.left) - model.energy(j.t, &j.right);
        let cost = e.cost(j.t, &j.left, &j.right)?;
        let gap = (drop - cost).abs();
        let (pass, tol) = opts.jump_passes(gap, drop);
        report.jump_entries.push(JumpEntry {
            t: j.t,
            left: j.left,
            right: j.right,
            energy_drop: drop,
            cost,
            gap,
            tol,
            pass,
        });
    }
    Ok(())
}

/// Global stability and the energy balance with the plain variation.
pub fn check_energetic(
    model: &dyn EnergyModel,
    space: &StateSpace,
    curve: &BvCurve,
    opts: &CheckOptions,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new("energetic", space, curve, opts);
    let all: Vec<usize> = (0..curve.len()).collect();
    stability_entry(&mut report, curve, &all, "global_stability", opts.tol, |t, u| {
        Ok(d_stability_gap(model, space, t, u))
    })?;
    balance_entries(&mut report, model, curve, None, opts)?;
    Ok(report)
}

/// Local stability off jumps, the balance with the viscous jump cost, the
/// jump conditions and the localized energy inequality.
pub fn check_bv(
    model: &dyn EnergyModel,
    space: &StateSpace,
    curve: &BvCurve,
    opts: &CheckOptions,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new("bv", space, curve, opts);
    let idx = off_jump_samples(curve);
    stability_entry(&mut report, curve, &idx, "local_stability", opts.tol, |t, u| {
        Ok((slope(model, space, t, u)? - 1.0).max(0.0))
    })?;
    let v = ViscousJumpCost { model, space };
    balance_entries(&mut report, model, curve, Some(&v), opts)?;
    jump_entries(&mut report, model, curve, &v, opts)?;
    Ok(report)
}

/// D-stability off jumps, the balance with `c_μ`, and the jump conditions.
pub fn check_ve(
    model: &dyn EnergyModel,
    space: &StateSpace,
    curve: &BvCurve,
    mu: f64,
    opts: &CheckOptions,
) -> Result<VerificationReport> {
    if !(mu > 0.0) {
        return Err(domain(format!("μ must be positive, got {mu}")));
    }
    let mut report = VerificationReport::new("ve", space, curve, opts);
    report.metadata.push(("mu".into(), fmt17(mu)));
    let idx = off_jump_samples(curve);
    stability_entry(&mut report, curve, &idx, "d_stability", opts.tol, |t, u| {
        residual(model, space, t, u, mu)
    })?;
    let c = VeJumpCost { model, space, mu };
    balance_entries(&mut report, model, curve, Some(&c), opts)?;
    jump_entries(&mut report, model, curve, &c, opts)?;
    Ok(report)
}

/// Signed `E(t,u(t)) + Var_{d,e}(u;[s,t]) − E(s,u(s)) − ∫_s^t P(r,u(r)) dr`,
/// with `e = d` when no cost is given. The integral uses the trapezoid rule
/// on the samples in `[s, t]`.
pub fn upper_energy_estimate(
    model: &dyn EnergyModel,
    curve: &BvCurve,
    s: f64,
    t: f64,
    e: Option<&dyn JumpCost>,
) -> Result<f64> {
    let var = match e {
        Some(e) => curve.augmented_variation(e, s, t)?,
        None => curve.total_variation(s, t)?,
    };
    let mut nodes = vec![s];
    nodes.extend(curve.times().iter().copied().filter(|&r| r > s && r < t));
    nodes.push(t);
    let mut work = 0.0;
    for w in nodes.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let a = right_value(curve, w[0])?;
        let b = left_value(curve, w[1])?;
        work += 0.5 * (w[1] - w[0]) * (model.power(w[0], &a) + model.power(w[1], &b));
    }
    let us = curve.value_at(s)?;
    let ut = curve.value_at(t)?;
    Ok(model.energy(t, &ut) + var - model.energy(s, &us) - work)
}

fn right_value(curve: &BvCurve, t: f64) -> Result<State> {
    Ok(match curve.jumps().iter().find(|j| j.t == t) {
        Some(j) => j.right,
        None => curve.value_at(t)?,
    })
}

fn left_value(curve: &BvCurve, t: f64) -> Result<State> {
    Ok(match curve.jumps().iter().find(|j| j.t == t) {
        Some(j) => j.left,
        None => curve.value_at(t)?,
    })
}

/// Sampling smoke test of the chain-rule inequality
/// `−d/dt E(t,u(t)) + P(t,u(t)) ≤ |u'|(t) · |DE|(t,u(t))` on a jump-free
/// curve; returns the largest violation and where it occurred.
pub fn chain_rule_smoke(model: &dyn EnergyModel, space: &StateSpace, curve: &BvCurve) -> Result<(f64, f64)> {
    if !curve.jumps().is_empty() {
        return Err(domain("chain-rule check needs a curve without jump records"));
    }
    if curve.len() < 3 {
        return Err(domain("chain-rule check needs at least three samples"));
    }
    let t = curve.times();
    let u = curve.values();
    let mut out = (0.0, t[0]);
    for k in 1..curve.len() - 1 {
        let de = (model.energy(t[k + 1], &u[k + 1]) - model.energy(t[k - 1], &u[k - 1])) / (t[k + 1] - t[k - 1]);
        let lhs = -de + model.power(t[k], &u[k]);
        let rhs = curve.metric_derivative(t[k])? * slope(model, space, t[k], &u[k])?;
        if lhs - rhs > out.0 {
            out = (lhs - rhs, t[k]);
        }
    }
    Ok(out)
}
