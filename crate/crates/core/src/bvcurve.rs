//! Curves of bounded variation with explicit jump records, their pointwise
//! total variation and the augmented variation induced by a jump cost.
//!
//! A curve is stored as samples `(t_k, u(t_k))`. Between consecutive samples
//! the curve is continuous and is read as the straight segment joining the
//! right limit at `t_k` to the left limit at `t_{k+1}`; a [`JumpRecord`] at a
//! sample time carries the left limit, the value and the right limit there.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{domain, Error, Result};
use crate::model::State;

pub const MAX_JUMPS: usize = 10_000;

/// Format a float with 17 significant digits (exact round-trip).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpRecord {
    pub t: f64,
    pub left: State,
    pub at: State,
    pub right: State,
}

impl JumpRecord {
    pub fn new(t: f64, left: State, at: State, right: State) -> Self {
        JumpRecord { t, left, at, right }
    }

    /// `d(u⁻, u) + d(u, u⁺)`.
    pub fn dissipation(&self) -> f64 {
        self.left.dist(&self.at) + self.at.dist(&self.right)
    }
}

/// Jump dissipation cost `e(t, a, b) ≥ d(a, b)`.
pub trait JumpCost {
    fn cost(&self, t: f64, a: &State, b: &State) -> Result<f64>;
    fn tag(&self) -> &str;
}

/// `e = d`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DistanceCost;

impl JumpCost for DistanceCost {
    fn cost(&self, _t: f64, a: &State, b: &State) -> Result<f64> {
        Ok(a.dist(b))
    }

    fn tag(&self) -> &str {
        "d"
    }
}

/// `e = d + (μ/2) d²`, the cost of a direct two-point transition between
/// stable states.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticGapCost {
    pub mu: f64,
}

impl JumpCost for QuadraticGapCost {
    fn cost(&self, _t: f64, a: &State, b: &State) -> Result<f64> {
        let d = a.dist(b);
        Ok(d + 0.5 * self.mu * d * d)
    }

    fn tag(&self) -> &str {
        "d+gap"
    }
}

#[derive(Clone, Debug)]
pub struct BvCurve {
    dim: usize,
    times: Vec<f64>,
    values: Vec<State>,
    jumps: Vec<JumpRecord>,
    /// `jump_at[k]` indexes `jumps` when sample `k` carries a jump.
    jump_at: Vec<Option<usize>>,
}

impl BvCurve {
    pub fn new(dim: usize, times: Vec<f64>, values: Vec<State>, jumps: Vec<JumpRecord>) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(domain(format!("curve dimension must be 1 or 2, got {dim}")));
        }
        if times.is_empty() || times.len() != values.len() {
            return Err(domain("curve needs one value per sample time and at least one sample"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("sample times must be strictly increasing"));
        }
        if jumps.len() > MAX_JUMPS {
            return Err(domain(format!("at most {MAX_JUMPS} jump records are supported")));
        }
        let mut values = values;
        let mut jump_at = vec![None; times.len()];
        let mut jumps = jumps;
        jumps.sort_by(|a, b| a.t.total_cmp(&b.t));
        for (j, rec) in jumps.iter().enumerate() {
            if rec.left == rec.right && rec.left == rec.at {
                return Err(domain(format!("jump record at t={} does not move", rec.t)));
            }
            let k = locate(&times, rec.t)
                .ok_or_else(|| domain(format!("jump time {} is not a sample time", rec.t)))?;
            if jump_at[k].is_some() {
                return Err(domain(format!("two jump records at t={}", rec.t)));
            }
            jump_at[k] = Some(j);
            values[k] = rec.at;
        }
        Ok(BvCurve { dim, times, values, jumps, jump_at })
    }

    /// A curve without jump records.
    pub fn continuous(dim: usize, times: Vec<f64>, values: Vec<State>) -> Result<Self> {
        Self::new(dim, times, values, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[State] {
        &self.values
    }

    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn jump_at_sample(&self, k: usize) -> Option<&JumpRecord> {
        self.jump_at[k].map(|j| &self.jumps[j])
    }

    /// `u(t_k−)`.
    pub fn left_limit(&self, k: usize) -> State {
        self.jump_at_sample(k).map_or(self.values[k], |j| j.left)
    }

    /// `u(t_k+)`.
    pub fn right_limit(&self, k: usize) -> State {
        self.jump_at_sample(k).map_or(self.values[k], |j| j.right)
    }

    /// Check that consecutive samples (off jumps) are at most `bound` apart.
    pub fn check_modulus(&self, bound: f64) -> Result<()> {
        for k in 1..self.len() {
            let d = self.right_limit(k - 1).dist(&self.left_limit(k));
            if d > bound {
                return Err(domain(format!(
                    "continuity modulus {bound} exceeded between t={} and t={} (distance {d})",
                    self.times[k - 1],
                    self.times[k]
                )));
            }
        }
        Ok(())
    }

    fn check_interval(&self, t0: f64, t1: f64) -> Result<()> {
        if t1 < t0 {
            return Err(domain(format!("interval end {t1} precedes start {t0}")));
        }
        let tol = 1e-12 * (1.0 + self.end().abs());
        if t0 < self.start() - tol || t1 > self.end() + tol {
            return Err(domain(format!(
                "interval [{t0}, {t1}] outside the curve's domain [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        Ok(())
    }

    /// Value `u(t)`: the stored value at sample times, linear interpolation
    /// between the neighbouring one-sided limits elsewhere.
    pub fn value_at(&self, t: f64) -> Result<State> {
        self.check_interval(t, t)?;
        if let Some(k) = locate(&self.times, t) {
            return Ok(self.values[k]);
        }
        let k = self.times.partition_point(|&s| s < t);
        let (a, b) = (self.times[k - 1], self.times[k]);
        Ok(self
            .right_limit(k - 1)
            .lerp(&self.left_limit(k), (t - a) / (b - a)))
    }

    /// Ordered points whose consecutive distances sum to the total variation
    /// on `[t0, t1]`, honouring the half-jump rule at the endpoints.
    fn trace(&self, t0: f64, t1: f64) -> Result<Vec<State>> {
        self.check_interval(t0, t1)?;
        let mut pts = Vec::new();
        if t0 == t1 {
            pts.push(self.value_at(t0)?);
            return Ok(pts);
        }
        match locate(&self.times, t0) {
            Some(k) => {
                pts.push(self.values[k]);
                pts.push(self.right_limit(k));
            }
            None => pts.push(self.value_at(t0)?),
        }
        let first = self.times.partition_point(|&s| s <= t0);
        let last = self.times.partition_point(|&s| s < t1);
        for k in first..last {
            if locate(&self.times, self.times[k]).is_some() && within(self.times[k], t0) {
                continue;
            }
            pts.push(self.left_limit(k));
            pts.push(self.values[k]);
            pts.push(self.right_limit(k));
        }
        match locate(&self.times, t1) {
            Some(k) => {
                pts.push(self.left_limit(k));
                pts.push(self.values[k]);
            }
            None => pts.push(self.value_at(t1)?),
        }
        Ok(pts)
    }

    /// Pointwise total variation on `[t0, t1]`.
    pub fn total_variation(&self, t0: f64, t1: f64) -> Result<f64> {
        let pts = self.trace(t0, t1)?;
        Ok(pts.windows(2).map(|w| w[0].dist(&w[1])).sum())
    }

    /// The variation function `V_u(t) = Var(u; [t_first, t])` at every sample.
    pub fn variation_function(&self) -> VariationFunction {
        let mut values = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        values.push(0.0);
        for k in 1..self.len() {
            acc += self.right_limit(k - 1).dist(&self.left_limit(k));
            acc += self.left_limit(k).dist(&self.values[k]);
            values.push(acc);
            // the right half of a jump at t_k belongs to (t_k, ·]
            acc += self.values[k].dist(&self.right_limit(k));
        }
        // the right half of a jump at the first sample
        if self.len() > 1 {
            let extra = self.values[0].dist(&self.right_limit(0));
            for v in values.iter_mut().skip(1) {
                *v += extra;
            }
        }
        VariationFunction {
            times: self.times.clone(),
            values,
        }
    }

    /// Jumps strictly inside `(t0, t1)` plus boundary half-jumps, evaluated
    /// with `half(t, a, b)` on each one-sided piece.
    fn jump_sum<F>(&self, t0: f64, t1: f64, mut half: F) -> Result<f64>
    where
        F: FnMut(f64, &State, &State) -> Result<f64>,
    {
        self.check_interval(t0, t1)?;
        if t0 == t1 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for rec in &self.jumps {
            if within(rec.t, t0) {
                total += half(rec.t, &rec.at, &rec.right)?;
            } else if within(rec.t, t1) {
                total += half(rec.t, &rec.left, &rec.at)?;
            } else if rec.t > t0 && rec.t < t1 {
                total += half(rec.t, &rec.left, &rec.at)? + half(rec.t, &rec.at, &rec.right)?;
            }
        }
        Ok(total)
    }

    /// Jump contribution `Jmp_d` to the total variation on `[t0, t1]`.
    pub fn jump_variation_d(&self, t0: f64, t1: f64) -> Result<f64> {
        self.jump_sum(t0, t1, |_, a, b| Ok(a.dist(b)))
    }

    /// Diffuse part of the variation: total variation minus jump contribution.
    pub fn diffuse_variation(&self, t0: f64, t1: f64) -> Result<f64> {
        Ok(self.total_variation(t0, t1)? - self.jump_variation_d(t0, t1)?)
    }

    /// Incremental jump variation `Jmp_{Δe}` with `Δe = e − d`.
    pub fn incremental_jump_variation(&self, e: &dyn JumpCost, t0: f64, t1: f64) -> Result<f64> {
        self.jump_sum(t0, t1, |t, a, b| {
            let c = e.cost(t, a, b)?;
            let d = a.dist(b);
            if c < d - 1e-12 * (1.0 + d) {
                return Err(Error::Contract(format!(
                    "jump cost '{}' = {c} below distance {d} at t={t}",
                    e.tag()
                )));
            }
            Ok(c - d)
        })
    }

    /// Augmented total variation `Var_{d,e} = Var_d + Jmp_{Δe}`.
    pub fn augmented_variation(&self, e: &dyn JumpCost, t0: f64, t1: f64) -> Result<f64> {
        Ok(self.total_variation(t0, t1)? + self.incremental_jump_variation(e, t0, t1)?)
    }

    /// The same quantity written as diffuse part plus the whole-cost jump sum.
    pub fn augmented_variation_split(&self, e: &dyn JumpCost, t0: f64, t1: f64) -> Result<f64> {
        let jmp_e = self.jump_sum(t0, t1, |t, a, b| e.cost(t, a, b))?;
        Ok(self.diffuse_variation(t0, t1)? + jmp_e)
    }

    /// `|Var_{d,e}[a,c] − Var_{d,e}[a,b] − Var_{d,e}[b,c]|`.
    pub fn additivity_check(&self, e: &dyn JumpCost, a: f64, b: f64, c: f64) -> Result<f64> {
        if !(a <= b && b <= c) {
            return Err(domain(format!("additivity needs a ≤ b ≤ c, got {a}, {b}, {c}")));
        }
        let whole = self.augmented_variation(e, a, c)?;
        let left = self.augmented_variation(e, a, b)?;
        let right = self.augmented_variation(e, b, c)?;
        Ok((whole - left - right).abs())
    }

    /// Central difference `d(u(t−δ), u(t+δ)) / 2δ` with `δ` the local sample
    /// step; one-sided at the ends of the domain.
    pub fn metric_derivative(&self, t: f64) -> Result<f64> {
        if !self.jumps.is_empty() {
            return Err(domain("metric derivative needs a curve without jump records"));
        }
        if self.len() < 2 {
            return Err(domain("metric derivative needs at least two samples"));
        }
        self.check_interval(t, t)?;
        let k = self.times.partition_point(|&s| s < t).min(self.len() - 1);
        let delta = if k == 0 {
            self.times[1] - self.times[0]
        } else {
            self.times[k] - self.times[k - 1]
        };
        let a = (t - delta).max(self.start());
        let b = (t + delta).min(self.end());
        Ok(self.value_at(a)?.dist(&self.value_at(b)?) / (b - a))
    }

    /// Mark every step `k → k+1` with `d(u_k, u_{k+1}) > κ · max(h, Δt · lip)`
    /// as a jump at `t_{k+1}` (left = `u_k`, at = right = `u_{k+1}`).
    pub fn detect_jumps(&self, kappa: f64, h: f64, lip: f64) -> Result<BvCurve> {
        let mut jumps = Vec::new();
        for k in 0..self.len().saturating_sub(1) {
            let a = self.right_limit(k);
            let b = self.left_limit(k + 1);
            let dt = self.times[k + 1] - self.times[k];
            if a.dist(&b) > kappa * h.max(dt * lip) {
                jumps.push(JumpRecord::new(self.times[k + 1], a, self.values[k + 1], self.values[k + 1]));
            }
        }
        BvCurve::new(self.dim, self.times.clone(), self.values.clone(), jumps)
    }

    /// Merge runs of jump records at consecutive samples into one jump placed
    /// at the first time of the run; the intermediate samples are dropped.
    pub fn coalesce_jumps(&self) -> Result<BvCurve> {
        let mut times = Vec::with_capacity(self.len());
        let mut values = Vec::with_capacity(self.len());
        let mut jumps = Vec::new();
        let mut k = 0;
        while k < self.len() {
            match self.jump_at_sample(k) {
                Some(first) => {
                    let mut last = *first;
                    let mut m = k;
                    while m + 1 < self.len() {
                        match self.jump_at_sample(m + 1) {
                            Some(next) => {
                                last = *next;
                                m += 1;
                            }
                            None => break,
                        }
                    }
                    times.push(self.times[k]);
                    if m == k {
                        values.push(first.at);
                        jumps.push(*first);
                    } else {
                        values.push(last.right);
                        if first.left != last.right {
                            jumps.push(JumpRecord::new(self.times[k], first.left, last.right, last.right));
                        }
                    }
                    k = m + 1;
                }
                None => {
                    times.push(self.times[k]);
                    values.push(self.values[k]);
                    k += 1;
                }
            }
        }
        BvCurve::new(self.dim, times, values, jumps)
    }

    /// Jump-free curve sampled at `times` via [`BvCurve::value_at`].
    pub fn resample(&self, times: &[f64]) -> Result<BvCurve> {
        let values = times.iter().map(|&t| self.value_at(t)).collect::<Result<Vec<_>>>()?;
        BvCurve::continuous(self.dim, times.to_vec(), values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for prefix in ["u", "is_jump", "left", "at", "right"] {
            if prefix == "is_jump" {
                header.push(prefix.into());
            } else {
                header.extend((1..=self.dim).map(|i| format!("{prefix}_{i}")));
            }
        }
        out.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![fmt17(self.times[k])];
            row.extend(self.values[k].coords(self.dim).iter().map(|&x| fmt17(x)));
            let jump = self.jump_at_sample(k);
            row.push(if jump.is_some() { "1" } else { "0" }.into());
            let (l, a, r) = jump.map_or((self.values[k], self.values[k], self.values[k]), |j| {
                (j.left, j.at, j.right)
            });
            for s in [l, a, r] {
                row.extend(s.coords(self.dim).iter().map(|&x| fmt17(x)));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<BvCurve> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers()?.clone();
        let dim = header.iter().filter(|h| h.starts_with("u_")).count();
        if header.get(0) != Some("t") || !(dim == 1 || dim == 2) || header.len() != 2 + 4 * dim {
            return Err(domain("curve CSV header must be t,u_1..,is_jump,left_1..,at_1..,right_1.."));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| domain(format!("not a number in curve CSV: '{s}'")))
        };
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut jumps = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(domain(format!("curve CSV row {} has {} fields", line + 2, rec.len())));
            }
            let f: Vec<&str> = rec.iter().collect();
            let t = num(f[0])?;
            let state = |off: usize| -> Result<State> {
                let c = (0..dim).map(|i| num(f[off + i])).collect::<Result<Vec<_>>>()?;
                State::from_coords(&c)
            };
            times.push(t);
            values.push(state(1)?);
            match f[1 + dim] {
                "1" => jumps.push(JumpRecord::new(t, state(2 + dim)?, state(2 + 2 * dim)?, state(2 + 3 * dim)?)),
                "0" => {}
                other => return Err(domain(format!("is_jump must be 0 or 1, got '{other}'"))),
            }
        }
        BvCurve::new(dim, times, values, jumps)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<BvCurve> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Monotone map `t ↦ V_u(t)` sampled at the curve's sample times.
#[derive(Clone, Debug)]
pub struct VariationFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl VariationFunction {
    pub fn at_sample(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

fn within(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

/// Index of the sample equal to `t` (up to a relative 1e-12).
fn locate(times: &[f64], t: f64) -> Option<usize> {
    let k = times.partition_point(|&s| s < t);
    [k.checked_sub(1), Some(k)]
        .into_iter()
        .flatten()
        .find(|&i| i < times.len() && within(times[i], t))
}
