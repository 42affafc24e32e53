//! Jump costs by shortest paths on the grid graph: the viscous cost `v` and
//! the visco-energetic cost `c_μ`, plus the structure of optimal transitions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::io::Write;

use crate::bvcurve::{fmt17, JumpCost};
use crate::error::{domain, Error, Result};
use crate::model::{check_time, residual_with, slope, EnergyModel, Penalty, State, StateSpace};

/// A finite transition `θ_0, …, θ_M` at frozen time `t`.
#[derive(Clone, Debug)]
pub struct TransitionChain {
    pub t: f64,
    /// Abstract parameters `r_i = i / M` (`r_0 = 0` for a singleton).
    pub params: Vec<f64>,
    pub states: Vec<State>,
    /// `R(t, θ_i)` for visco-energetic chains, zero for viscous paths.
    pub residuals: Vec<f64>,
    /// `d(θ_i, θ_{i+1})`, one entry fewer than `states`.
    pub edges: Vec<f64>,
}

impl TransitionChain {
    fn build(t: f64, states: Vec<State>, residuals: Vec<f64>) -> Self {
        let m = states.len().saturating_sub(1);
        let params = (0..states.len())
            .map(|i| if m == 0 { 0.0 } else { i as f64 / m as f64 })
            .collect();
        let edges = states.windows(2).map(|w| w[0].dist(&w[1])).collect();
        TransitionChain { t, params, states, residuals, edges }
    }

    /// Chain through `states` with residuals evaluated for parameter `μ`.
    pub fn with_residuals(
        model: &dyn EnergyModel,
        space: &StateSpace,
        t: f64,
        states: Vec<State>,
        mu: f64,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(domain("a transition chain needs at least one state"));
        }
        if !(mu > 0.0) {
            return Err(domain(format!("μ must be positive, got {mu}")));
        }
        check_time(model, t)?;
        let residuals = crate::par::map_slice(&states, |u| {
            residual_with(model, space, t, u, Penalty::augmented(mu)).0
        });
        Ok(Self::build(t, states, residuals))
    }

    pub fn start(&self) -> State {
        self.states[0]
    }

    pub fn end(&self) -> State {
        *self.states.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `self` followed by `other`, which must start where `self` ends.
    pub fn concat(&self, other: &TransitionChain) -> Result<TransitionChain> {
        if self.end() != other.start() || self.t != other.t {
            return Err(domain("chains can only be joined end to start at the same time"));
        }
        let mut states = self.states.clone();
        states.extend_from_slice(&other.states[1..]);
        let mut residuals = self.residuals.clone();
        residuals.extend_from_slice(&other.residuals[1..]);
        Ok(Self::build(self.t, states, residuals))
    }

    /// Rows `i, r_i, θ_i, R_i, d_edge_i, kind`; `d_edge_i` is the length of
    /// the edge arriving at node `i` and `kind` its classification.
    pub fn write_csv<W: Write>(&self, w: W, kinds: &[NodeKind]) -> Result<()> {
        let dim = if self.states.iter().any(|s| s.y() != 0.0) { 2 } else { 1 };
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["i".to_string(), "r_i".to_string()];
        header.extend((1..=dim).map(|k| format!("theta_{k}")));
        header.extend(["R_i".to_string(), "d_edge_i".to_string(), "kind".to_string()]);
        out.write_record(&header)?;
        for (i, s) in self.states.iter().enumerate() {
            let mut row = vec![i.to_string(), fmt17(self.params[i])];
            row.extend(s.coords(dim).iter().map(|&x| fmt17(x)));
            row.push(fmt17(self.residuals[i]));
            row.push(fmt17(if i == 0 { 0.0 } else { self.edges[i - 1] }));
            let kind = kinds.get(i).copied().unwrap_or(NodeKind::Slide);
            row.push(kind.as_str().into());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CostBreakdown {
    /// `Σ d(θ_i, θ_{i+1})`.
    pub var_term: f64,
    /// `Σ (μ/2) d²(θ_i, θ_{i+1})`.
    pub gap_term: f64,
    /// `Σ_{i<M} R(t, θ_i)`.
    pub residual_term: f64,
    /// `∫ |θ'| (|DE| ∨ 1)` for viscous paths, zero otherwise.
    pub bv_integral_term: f64,
    /// Partition-supremum value of the same integral, when computed.
    pub partition_sup: Option<f64>,
    pub total: f64,
    pub chain: TransitionChain,
}

impl CostBreakdown {
    pub fn report(&self, kind: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "cost kind: {kind}");
        let _ = writeln!(s, "time: {}", fmt17(self.chain.t));
        let _ = writeln!(s, "from: {}", self.chain.start());
        let _ = writeln!(s, "to: {}", self.chain.end());
        let _ = writeln!(s, "nodes: {}", self.chain.len());
        if kind == "v" {
            let _ = writeln!(s, "bv_integral: {}", fmt17(self.bv_integral_term));
            if let Some(p) = self.partition_sup {
                let _ = writeln!(s, "partition_sup: {}", fmt17(p));
            }
            let _ = writeln!(s, "path_length: {}", fmt17(self.var_term));
        } else {
            let _ = writeln!(s, "var: {}", fmt17(self.var_term));
            let _ = writeln!(s, "gap: {}", fmt17(self.gap_term));
            let _ = writeln!(s, "residual: {}", fmt17(self.residual_term));
        }
        let _ = writeln!(s, "total: {}", fmt17(self.total));
        s
    }
}

/// Cost of a finite chain: `Σ [d + (μ/2) d²](θ_i, θ_{i+1}) + Σ_{i<M} R(t, θ_i)`.
pub fn ve_chain_cost(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    states: &[State],
    mu: f64,
) -> Result<CostBreakdown> {
    let chain = TransitionChain::with_residuals(model, space, t, states.to_vec(), mu)?;
    Ok(breakdown_of(chain, mu))
}

fn breakdown_of(chain: TransitionChain, mu: f64) -> CostBreakdown {
    let var_term: f64 = chain.edges.iter().sum();
    let gap_term: f64 = chain.edges.iter().map(|d| 0.5 * mu * d * d).sum();
    let m = chain.len() - 1;
    let residual_term: f64 = chain.residuals[..m].iter().sum();
    CostBreakdown {
        var_term,
        gap_term,
        residual_term,
        bv_integral_term: 0.0,
        partition_sup: None,
        total: var_term + gap_term + residual_term,
        chain,
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `a` to `b`; `expand(p)` lists `(q, weight)` for the edges
/// leaving `p` and is called once per settled node.
fn shortest_path<F>(n: usize, a: usize, b: usize, mut expand: F) -> Result<(f64, Vec<usize>)>
where
    F: FnMut(usize) -> Vec<(usize, f64)>,
{
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[a] = 0.0;
    heap.push(Entry { cost: 0.0, node: a });
    while let Some(Entry { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == b {
            let mut path = vec![b];
            let mut k = b;
            while k != a {
                k = prev[k];
                path.push(k);
            }
            path.reverse();
            return Ok((cost, path));
        }
        for (q, w) in expand(node) {
            let c = cost + w;
            if !done[q] && c < dist[q] {
                dist[q] = c;
                prev[q] = node;
                heap.push(Entry { cost: c, node: q });
            }
        }
    }
    Err(Error::Internal(format!("node {b} unreachable from node {a}")))
}

fn grid_index(space: &StateSpace, u: &State) -> Result<usize> {
    space
        .index_of(u)
        .ok_or_else(|| domain(format!("state {u} is not a grid point")))
}

/// Visco-energetic jump cost `c_μ(t, a, b)`: the cheapest finite chain on
/// the grid graph, edges weighted by `D = d + (μ/2) d²` plus the residual of
/// the node they leave. Besides the short path edges, every node links to
/// its own `E + D` minimizer and directly to `b`.
pub fn ve_cost(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    a: &State,
    b: &State,
    mu: f64,
) -> Result<CostBreakdown> {
    if !(mu > 0.0) {
        return Err(domain(format!("μ must be positive, got {mu}")));
    }
    check_time(model, t)?;
    let ia = grid_index(space, a)?;
    let ib = grid_index(space, b)?;
    let pb = space.point(ib);
    let pen = Penalty::augmented(mu);
    let mut residual_of = vec![f64::NAN; space.len()];
    let (_, path) = shortest_path(space.len(), ia, ib, |p| {
        let pp = space.point(p);
        let (r, m) = residual_with(model, space, t, &pp, pen);
        residual_of[p] = r;
        let mut targets = space.path_edges(p);
        targets.push(m.index);
        targets.push(ib);
        targets
            .into_iter()
            .filter(|&q| q != p)
            .map(|q| {
                let d = pp.dist(&if q == ib { pb } else { space.point(q) });
                (q, pen.eval(d) + r)
            })
            .collect()
    })?;
    let states: Vec<State> = path.iter().map(|&i| space.point(i)).collect();
    let residuals = path
        .iter()
        .map(|&i| {
            if residual_of[i].is_nan() {
                residual_with(model, space, t, &space.point(i), pen).0
            } else {
                residual_of[i]
            }
        })
        .collect();
    Ok(breakdown_of(TransitionChain::build(t, states, residuals), mu))
}

/// `|DE| ∨ 1`.
fn viscous_weight(model: &dyn EnergyModel, space: &StateSpace, t: f64, u: &State) -> Result<f64> {
    Ok(slope(model, space, t, u)?.max(1.0))
}

/// `∫ |θ'| (|DE|(t, θ) ∨ 1)` along a sampled continuous path, by the
/// midpoint rule, together with the partition value
/// `Σ d(θ_i, θ_{i+1}) · min(g_i, g_{i+1})` with `g = |DE| ∨ 1` at the nodes.
pub fn bv_path_cost(model: &dyn EnergyModel, space: &StateSpace, t: f64, path: &[State]) -> Result<CostBreakdown> {
    if path.is_empty() {
        return Err(domain("a path needs at least one state"));
    }
    check_time(model, t)?;
    let g = path
        .iter()
        .map(|u| viscous_weight(model, space, t, u))
        .collect::<Result<Vec<_>>>()?;
    let mut integral = 0.0;
    let mut partition = 0.0;
    for (i, w) in path.windows(2).enumerate() {
        let d = w[0].dist(&w[1]);
        integral += d * viscous_weight(model, space, t, &w[0].lerp(&w[1], 0.5))?;
        partition += d * g[i].min(g[i + 1]);
    }
    let chain = TransitionChain::build(t, path.to_vec(), vec![0.0; path.len()]);
    let var_term = chain.edges.iter().sum();
    Ok(CostBreakdown {
        var_term,
        gap_term: 0.0,
        residual_term: 0.0,
        bv_integral_term: integral,
        partition_sup: Some(partition),
        total: integral,
        chain,
    })
}

/// Viscous jump cost `v(t, a, b)`: shortest path over the local stencil
/// with edge weight `d(p, q) · max(1, (|DE|(p) + |DE|(q)) / 2)`.
pub fn viscous_cost(
    model: &dyn EnergyModel,
    space: &StateSpace,
    t: f64,
    a: &State,
    b: &State,
) -> Result<CostBreakdown> {
    check_time(model, t)?;
    let ia = grid_index(space, a)?;
    let ib = grid_index(space, b)?;
    let mut slopes = vec![f64::NAN; space.len()];
    let mut failure = None;
    let mut slope_at = |i: usize, slopes: &mut Vec<f64>| -> f64 {
        if slopes[i].is_nan() {
            slopes[i] = match slope(model, space, t, &space.point(i)) {
                Ok(s) => s,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            };
        }
        slopes[i]
    };
    let (total, path) = shortest_path(space.len(), ia, ib, |p| {
        let sp = slope_at(p, &mut slopes);
        let pp = space.point(p);
        space
            .neighbors(p)
            .into_iter()
            .map(|q| {
                let sq = slope_at(q, &mut slopes);
                (q, pp.dist(&space.point(q)) * (0.5 * (sp + sq)).max(1.0))
            })
            .collect()
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let states: Vec<State> = path.iter().map(|&i| space.point(i)).collect();
    let chain = TransitionChain::build(t, states, vec![0.0; path.len()]);
    let var_term = chain.edges.iter().sum();
    Ok(CostBreakdown {
        var_term,
        gap_term: 0.0,
        residual_term: 0.0,
        bv_integral_term: total,
        partition_sup: None,
        total,
        chain,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Slide,
    Jump,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Slide => "slide",
            NodeKind::Jump => "jump",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TransitionPiece {
    /// Nodes `first..=last` reached by short steps from stable predecessors.
    Sliding { first: usize, last: usize },
    /// Node reached by a long step or from an unstable predecessor, with the
    /// excess of its `E + D` value over the grid minimum from the predecessor.
    Jump { node: usize, argmin_gap: f64, passes: bool },
}

/// Split a chain into sliding runs and pure-jump nodes. Node `i ≥ 1` is a
/// pure jump when `R(θ_{i−1}) > tol` or `d(θ_{i−1}, θ_i) > 2h`.
pub fn classify_transition(
    model: &dyn EnergyModel,
    space: &StateSpace,
    chain: &TransitionChain,
    mu: f64,
    tol: f64,
) -> Result<(Vec<TransitionPiece>, Vec<NodeKind>)> {
    if !(mu > 0.0) {
        return Err(domain(format!("μ must be positive, got {mu}")));
    }
    let h = space.h();
    let pen = Penalty::augmented(mu);
    let mut kinds = vec![NodeKind::Slide; chain.len()];
    let mut pieces = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for i in 1..chain.len() {
        let jump = chain.residuals[i - 1] > tol || chain.edges[i - 1] > 2.0 * h * (1.0 + 1e-9);
        if jump {
            if let Some((first, last)) = run.take() {
                pieces.push(TransitionPiece::Sliding { first, last });
            }
            kinds[i] = NodeKind::Jump;
            let from = chain.states[i - 1];
            let (_, best) = residual_with(model, space, chain.t, &from, pen);
            let ours = model.energy(chain.t, &chain.states[i]) + pen.eval(from.dist(&chain.states[i]));
            let gap = (ours - best.value).max(0.0);
            pieces.push(TransitionPiece::Jump {
                node: i,
                argmin_gap: gap,
                passes: gap <= tol,
            });
        } else {
            run = Some(match run {
                Some((first, _)) => (first, i),
                None => (i, i),
            });
        }
    }
    if let Some((first, last)) = run {
        pieces.push(TransitionPiece::Sliding { first, last });
    }
    Ok((pieces, kinds))
}

/// Default residual tolerance `10 h C_P (1 + sup F(t, ·))` over the grid.
pub fn residual_tolerance(model: &dyn EnergyModel, space: &StateSpace, t: f64) -> f64 {
    let xo = model.reference_point();
    let sup_f = crate::par::max_f64(0..space.len(), |i| {
        let p = space.point(i);
        model.energy(t, &p) + xo.dist(&p)
    });
    10.0 * space.h() * model.power_constant() * (1.0 + sup_f.max(0.0))
}

/// `v` as a [`JumpCost`] (states are snapped to the grid).
pub struct ViscousJumpCost<'a> {
    pub model: &'a dyn EnergyModel,
    pub space: &'a StateSpace,
}

impl JumpCost for ViscousJumpCost<'_> {
    fn cost(&self, t: f64, a: &State, b: &State) -> Result<f64> {
        let (a, b) = (self.space.snap(a)?, self.space.snap(b)?);
        Ok(viscous_cost(self.model, self.space, t, &a, &b)?.total.max(a.dist(&b)))
    }

    fn tag(&self) -> &str {
        "v"
    }
}

/// `c_μ` as a [`JumpCost`] (states are snapped to the grid).
pub struct VeJumpCost<'a> {
    pub model: &'a dyn EnergyModel,
    pub space: &'a StateSpace,
    pub mu: f64,
}

impl JumpCost for VeJumpCost<'_> {
    fn cost(&self, t: f64, a: &State, b: &State) -> Result<f64> {
        let (a, b) = (self.space.snap(a)?, self.space.snap(b)?);
        Ok(ve_cost(self.model, self.space, t, &a, &b, self.mu)?.total)
    }

    fn tag(&self) -> &str {
        "c_mu"
    }
}
