use super::space::{State, StateSpace};

/// A time-dependent energy functional on a discretized state space.
pub trait EnergyModel: Send + Sync {
    fn name(&self) -> &str;

    /// Dimension of the states the model expects (1 or 2).
    fn dim(&self) -> usize;

    fn energy(&self, t: f64, u: &State) -> f64;

    /// Partial time derivative of the energy. The default is a central
    /// difference with step `1e-6 * T`, one-sided at the ends of `[0, T]`.
    fn power(&self, t: f64, u: &State) -> f64 {
        let big_t = self.horizon();
        let dt = 1e-6 * big_t;
        let a = (t - dt).max(0.0);
        let b = (t + dt).min(big_t);
        (self.energy(b, u) - self.energy(a, u)) / (b - a)
    }

    /// Metric slope in closed form, when known.
    fn analytic_slope(&self, _t: f64, _u: &State) -> Option<f64> {
        None
    }

    fn reference_point(&self) -> State {
        State::default()
    }

    fn horizon(&self) -> f64;

    fn power_constant(&self) -> f64;

    /// A lower bound for `energy(t, ·)` over the box of `space`.
    fn energy_floor(&self, _t: f64, _space: &StateSpace) -> Option<f64> {
        None
    }

    /// An upper bound for the Lipschitz constant of `energy(t, ·)` on the box.
    fn slope_bound(&self, _t: f64, _space: &StateSpace) -> Option<f64> {
        None
    }
}

fn x_range(space: &StateSpace) -> (f64, f64) {
    (space.lower()[0], space.upper()[0])
}

/// `E(t, u) = ½ |u − (c t, 0)|²`: the convex benchmark whose rate-independent
/// evolution is the play operator.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub rate: f64,
    pub horizon: f64,
    pub dim: usize,
}

impl Quadratic {
    pub fn new(rate: f64, horizon: f64) -> Self {
        Quadratic { rate, horizon, dim: 1 }
    }

    fn target(&self, t: f64) -> State {
        State::planar(self.rate * t, 0.0)
    }
}

impl EnergyModel for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn energy(&self, t: f64, u: &State) -> f64 {
        let dx = u.x() - self.rate * t;
        0.5 * (dx * dx + u.y() * u.y())
    }

    fn power(&self, t: f64, u: &State) -> f64 {
        -self.rate * (u.x() - self.rate * t)
    }

    fn analytic_slope(&self, t: f64, u: &State) -> Option<f64> {
        Some(u.dist(&self.target(t)))
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn power_constant(&self) -> f64 {
        self.rate.abs().max(1.0) * (1.0 + self.rate.abs())
    }

    fn energy_floor(&self, _t: f64, _space: &StateSpace) -> Option<f64> {
        Some(0.0)
    }

    fn slope_bound(&self, t: f64, space: &StateSpace) -> Option<f64> {
        let c = self.target(t);
        let (lo, hi) = (space.lower(), space.upper());
        let corners = [
            State::planar(lo[0], lo[1]),
            State::planar(lo[0], hi[1]),
            State::planar(hi[0], lo[1]),
            State::planar(hi[0], hi[1]),
        ];
        Some(corners.iter().map(|p| p.dist(&c)).fold(0.0, f64::max))
    }
}

/// Real roots of `x³ − x − q = 0`.
fn depressed_cubic_roots(q: f64) -> Vec<f64> {
    // p = −1
    let disc = 4.0 - 27.0 * q * q;
    if disc > 0.0 {
        let m = 2.0 / 3f64.sqrt();
        let phi = ((3.0 * 3f64.sqrt() / 2.0) * q).clamp(-1.0, 1.0).acos() / 3.0;
        (0..3)
            .map(|k| m * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos())
            .collect()
    } else {
        let s = (q * q / 4.0 - 1.0 / 27.0).max(0.0).sqrt();
        vec![(q / 2.0 + s).cbrt() + (q / 2.0 - s).cbrt()]
    }
}

/// `W(x) − ℓ x` with `W(x) = (x² − 1)² / 4`, minimized over `[a, b]`.
fn tilted_well_min(load: f64, a: f64, b: f64) -> f64 {
    let f = |x: f64| 0.25 * (x * x - 1.0).powi(2) - load * x;
    let mut m = f(a).min(f(b));
    for r in depressed_cubic_roots(load) {
        if r > a && r < b {
            m = m.min(f(r));
        }
    }
    m
}

/// `max |x³ − x − ℓ|` over `[a, b]`.
fn tilted_well_lipschitz(load: f64, a: f64, b: f64) -> f64 {
    let g = |x: f64| (x * x * x - x - load).abs();
    let c = 1.0 / 3f64.sqrt();
    let mut m = g(a).max(g(b));
    for x in [-c, c] {
        if x > a && x < b {
            m = m.max(g(x));
        }
    }
    m
}

/// Bistable benchmark `E(t, u) = (u² − 1)² / 4 − ℓ(t) u` with linear load
/// `ℓ(t) = rate · t`.
#[derive(Clone, Debug)]
pub struct DoubleWell {
    pub load_rate: f64,
    pub horizon: f64,
}

impl DoubleWell {
    pub fn new(load_rate: f64, horizon: f64) -> Self {
        DoubleWell { load_rate, horizon }
    }

    pub fn load(&self, t: f64) -> f64 {
        self.load_rate * t
    }

    /// `W'(u) = u³ − u`.
    pub fn well_derivative(u: f64) -> f64 {
        u * u * u - u
    }
}

impl EnergyModel for DoubleWell {
    fn name(&self) -> &str {
        "double-well"
    }

    fn dim(&self) -> usize {
        1
    }

    fn energy(&self, t: f64, u: &State) -> f64 {
        let x = u.x();
        let w = x * x - 1.0;
        0.25 * w * w - self.load(t) * x
    }

    fn power(&self, _t: f64, u: &State) -> f64 {
        -self.load_rate * u.x()
    }

    fn analytic_slope(&self, t: f64, u: &State) -> Option<f64> {
        Some((Self::well_derivative(u.x()) - self.load(t)).abs())
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn power_constant(&self) -> f64 {
        self.load_rate.abs().max(1.0)
    }

    fn energy_floor(&self, t: f64, space: &StateSpace) -> Option<f64> {
        let (a, b) = x_range(space);
        let m = tilted_well_min(self.load(t), a, b);
        Some(m - 1e-12 * (1.0 + m.abs()))
    }

    fn slope_bound(&self, t: f64, space: &StateSpace) -> Option<f64> {
        let (a, b) = x_range(space);
        Some(tilted_well_lipschitz(self.load(t), a, b))
    }
}

/// Two-dimensional bistable model
/// `E(t, x, y) = (x² − 1)² / 4 + (k/2) y² − ℓ(t) x`.
#[derive(Clone, Debug)]
pub struct TwoWell2d {
    pub load_rate: f64,
    pub stiffness: f64,
    pub horizon: f64,
}

impl EnergyModel for TwoWell2d {
    fn name(&self) -> &str {
        "two-well-2d"
    }

    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, t: f64, u: &State) -> f64 {
        let (x, y) = (u.x(), u.y());
        let w = x * x - 1.0;
        0.25 * w * w + 0.5 * self.stiffness * y * y - self.load_rate * t * x
    }

    fn power(&self, _t: f64, u: &State) -> f64 {
        -self.load_rate * u.x()
    }

    fn analytic_slope(&self, t: f64, u: &State) -> Option<f64> {
        let gx = DoubleWell::well_derivative(u.x()) - self.load_rate * t;
        let gy = self.stiffness * u.y();
        Some(gx.hypot(gy))
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn power_constant(&self) -> f64 {
        self.load_rate.abs().max(1.0)
    }

    fn energy_floor(&self, t: f64, space: &StateSpace) -> Option<f64> {
        let (lo, hi) = (space.lower(), space.upper());
        let mx = tilted_well_min(self.load_rate * t, lo[0], hi[0]);
        let my = if lo[1] <= 0.0 && hi[1] >= 0.0 {
            0.0
        } else {
            0.5 * self.stiffness * lo[1].abs().min(hi[1].abs()).powi(2)
        };
        let m = mx + my;
        Some(m - 1e-12 * (1.0 + m.abs()))
    }

    fn slope_bound(&self, t: f64, space: &StateSpace) -> Option<f64> {
        let (lo, hi) = (space.lower(), space.upper());
        let gx = tilted_well_lipschitz(self.load_rate * t, lo[0], hi[0]);
        let gy = self.stiffness.abs() * lo[1].abs().max(hi[1].abs());
        Some(gx.hypot(gy))
    }
}

/// `E(t, u) = Σ_k c_k u^k − ℓ(t) u` in one dimension.
#[derive(Clone, Debug)]
pub struct CustomPolynomial {
    /// Coefficients `c_0, c_1, …` of increasing degree.
    pub coefficients: Vec<f64>,
    pub load_rate: f64,
    pub horizon: f64,
}

impl CustomPolynomial {
    fn poly(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn poly_derivative(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
    }
}

impl EnergyModel for CustomPolynomial {
    fn name(&self) -> &str {
        "custom-polynomial"
    }

    fn dim(&self) -> usize {
        1
    }

    fn energy(&self, t: f64, u: &State) -> f64 {
        self.poly(u.x()) - self.load_rate * t * u.x()
    }

    fn power(&self, _t: f64, u: &State) -> f64 {
        -self.load_rate * u.x()
    }

    fn analytic_slope(&self, t: f64, u: &State) -> Option<f64> {
        Some((self.poly_derivative(u.x()) - self.load_rate * t).abs())
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn power_constant(&self) -> f64 {
        self.load_rate.abs().max(1.0)
    }

    fn slope_bound(&self, t: f64, space: &StateSpace) -> Option<f64> {
        let (a, b) = x_range(space);
        let r = a.abs().max(b.abs());
        let g: f64 = self
            .coefficients
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c.abs() * r.powi(k as i32 - 1))
            .sum();
        Some(g + (self.load_rate * t).abs())
    }
}
