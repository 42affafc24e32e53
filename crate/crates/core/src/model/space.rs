use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A point of the discretized state space. One-dimensional states keep the
/// second coordinate at zero.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct State(pub [f64; 2]);

impl State {
    pub const fn scalar(x: f64) -> Self {
        State([x, 0.0])
    }

    pub const fn planar(x: f64, y: f64) -> Self {
        State([x, y])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn coords(&self, dim: usize) -> &[f64] {
        &self.0[..dim]
    }

    pub fn from_coords(c: &[f64]) -> Result<Self> {
        match c.len() {
            1 => Ok(State::scalar(c[0])),
            2 => Ok(State::planar(c[0], c[1])),
            n => Err(Error::Domain(format!("states have 1 or 2 coordinates, got {n}"))),
        }
    }

    /// Euclidean distance.
    #[inline]
    pub fn dist(&self, other: &State) -> f64 {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        if dy == 0.0 {
            dx.abs()
        } else {
            dx.hypot(dy)
        }
    }

    pub fn lerp(&self, other: &State, s: f64) -> State {
        State([
            self.0[0] + s * (other.0[0] - self.0[0]),
            self.0[1] + s * (other.0[1] - self.0[1]),
        ])
    }

    /// Lexicographic order on coordinates (x first).
    pub fn lex_cmp(&self, other: &State) -> Ordering {
        self.0[0]
            .total_cmp(&other.0[0])
            .then(self.0[1].total_cmp(&other.0[1]))
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0[1] == 0.0 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "({}, {})", self.0[0], self.0[1])
        }
    }
}

/// Rectangular block of grid indices, used to restrict scans to a ball.
#[derive(Clone, Debug)]
pub struct Window {
    x0: usize,
    nx_win: usize,
    y0: usize,
    ny_win: usize,
    stride: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.nx_win * self.ny_win
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid index of the `k`-th window entry (row-major, x fastest).
    #[inline]
    pub fn index(&self, k: usize) -> usize {
        let iy = self.y0 + k / self.nx_win;
        let ix = self.x0 + k % self.nx_win;
        iy * self.stride + ix
    }
}

/// Uniform grid over a box in one or two dimensions, with Euclidean distance.
///
/// Points are never materialized; `point(i)` recomputes them from the index.
#[derive(Clone, Debug)]
pub struct StateSpace {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    counts: [usize; 2],
    h: f64,
    /// Radius for short graph edges used by path solvers.
    edge_radius: f64,
    /// Random long-range candidate edges per node (two-dimensional grids only).
    long_edges: usize,
    seed: u64,
}

fn axis_count(lo: f64, hi: f64, h: f64) -> Result<usize> {
    if !(lo.is_finite() && hi.is_finite() && h.is_finite()) || h <= 0.0 || hi < lo {
        return Err(Error::Config(format!(
            "invalid axis [{lo}, {hi}] with spacing {h}"
        )));
    }
    let cells = (hi - lo) / h;
    let n = cells.round();
    if (cells - n).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "axis length {} is not a multiple of h = {h}",
            hi - lo
        )));
    }
    Ok(n as usize + 1)
}

impl StateSpace {
    pub fn line(lo: f64, hi: f64, h: f64) -> Result<Self> {
        let n = axis_count(lo, hi, h)?;
        Ok(StateSpace {
            dim: 1,
            lo: [lo, 0.0],
            hi: [hi, 0.0],
            counts: [n, 1],
            h,
            edge_radius: (50.0 * h).min(1.0),
            long_edges: 0,
            seed: 0,
        })
    }

    pub fn plane(lo: [f64; 2], hi: [f64; 2], h: f64, seed: u64) -> Result<Self> {
        let nx = axis_count(lo[0], hi[0], h)?;
        let ny = axis_count(lo[1], hi[1], h)?;
        Ok(StateSpace {
            dim: 2,
            lo,
            hi,
            counts: [nx, ny],
            h,
            edge_radius: 1.5 * h,
            long_edges: 8,
            seed,
        })
    }

    /// Override the short-edge radius of the path graph.
    pub fn with_edge_radius(mut self, r: f64) -> Self {
        self.edge_radius = r.max(self.h);
        self
    }

    pub fn with_long_edges(mut self, n: usize) -> Self {
        self.long_edges = n;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lower(&self) -> [f64; 2] {
        self.lo
    }

    pub fn upper(&self) -> [f64; 2] {
        self.hi
    }

    pub fn edge_radius(&self) -> f64 {
        self.edge_radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Largest distance between two states of the box.
    pub fn diameter(&self) -> f64 {
        (self.hi[0] - self.lo[0]).hypot(self.hi[1] - self.lo[1])
    }

    #[inline]
    pub fn point(&self, i: usize) -> State {
        if self.counts[1] == 1 {
            return State([self.lo[0] + i as f64 * self.h, self.lo[1]]);
        }
        let ix = i % self.counts[0];
        let iy = i / self.counts[0];
        State([
            self.lo[0] + ix as f64 * self.h,
            self.lo[1] + iy as f64 * self.h,
        ])
    }

    pub fn contains(&self, u: &State) -> bool {
        let eps = 1e-9 * self.h;
        (0..self.dim).all(|k| u.0[k] >= self.lo[k] - eps && u.0[k] <= self.hi[k] + eps)
            && (self.dim == 2 || u.0[1] == 0.0)
    }

    fn axis_index(&self, k: usize, x: f64) -> usize {
        let f = ((x - self.lo[k]) / self.h).round();
        f.clamp(0.0, (self.counts[k] - 1) as f64) as usize
    }

    /// Index of the grid point nearest to `u` (clamped into the box).
    pub fn nearest(&self, u: &State) -> usize {
        let ix = self.axis_index(0, u.0[0]);
        let iy = if self.dim == 2 { self.axis_index(1, u.0[1]) } else { 0 };
        iy * self.counts[0] + ix
    }

    /// Index of `u` if it is a grid point (up to rounding).
    pub fn index_of(&self, u: &State) -> Option<usize> {
        if !self.contains(u) {
            return None;
        }
        let i = self.nearest(u);
        (self.point(i).dist(u) <= 1e-7 * self.h).then_some(i)
    }

    /// Snap a state onto the grid, failing if it lies outside the box.
    pub fn snap(&self, u: &State) -> Result<State> {
        if !self.contains(u) {
            return Err(Error::Domain(format!("state {u} lies outside the grid bounds")));
        }
        Ok(self.point(self.nearest(u)))
    }

    /// Index block covering the closed ball of radius `r` around `c`.
    pub fn window(&self, c: &State, r: f64) -> Window {
        let r = if r.is_finite() { r } else { self.diameter() + self.h };
        let range = |k: usize| -> (usize, usize) {
            if k >= self.dim {
                return (0, 1);
            }
            let a = ((c.0[k] - r - self.lo[k]) / self.h).floor().max(0.0);
            let b = ((c.0[k] + r - self.lo[k]) / self.h).ceil();
            let last = (self.counts[k] - 1) as f64;
            if b < 0.0 || a > last {
                return (0, 0);
            }
            let a = a as usize;
            let b = b.min(last) as usize;
            (a, b + 1 - a)
        };
        let (x0, nx_win) = range(0);
        let (y0, ny_win) = range(1);
        Window {
            x0,
            nx_win,
            y0,
            ny_win,
            stride: self.counts[0],
        }
    }

    pub fn full_window(&self) -> Window {
        Window {
            x0: 0,
            nx_win: self.counts[0],
            y0: 0,
            ny_win: self.counts[1],
            stride: self.counts[0],
        }
    }

    /// Local stencil of node `i`: adjacent grid points (two in 1D, up to eight
    /// in 2D).
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let p = self.point(i);
        let r = self.h * (self.dim as f64).sqrt() * (1.0 + 1e-9);
        let win = self.window(&p, r);
        (0..win.len())
            .map(|k| win.index(k))
            .filter(|&j| j != i && self.point(j).dist(&p) <= r)
            .collect()
    }

    /// Outgoing edges of node `i` in the path graph: every grid point within
    /// the edge radius, plus (in 2D) a fixed number of seeded pseudo-random
    /// long-range targets.
    pub fn path_edges(&self, i: usize) -> Vec<usize> {
        let p = self.point(i);
        let win = self.window(&p, self.edge_radius);
        let mut out: Vec<usize> = (0..win.len())
            .map(|k| win.index(k))
            .filter(|&j| j != i && self.point(j).dist(&p) <= self.edge_radius * (1.0 + 1e-12))
            .collect();
        if self.dim == 2 && self.long_edges > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            for _ in 0..self.long_edges {
                let j = rng.gen_range(0..self.len());
                if j != i {
                    out.push(j);
                }
            }
        }
        out
    }
}
