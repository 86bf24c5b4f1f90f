//! Lax–Oleinik iteration, Aubry and Mañé sets, Peierls barriers.

use petgraph::algo::{dijkstra, tarjan_scc};
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::EdgeRef;
use serde::Serialize;

use super::kernel::ActionKernel;
use crate::error::{LabError, Result};

/// `(T u)(x') = min_x u(x) + G_c(x, x')`. Ties go to the lowest `(x, k)`.
pub fn lax_oleinik(u: &[f64], kernel: &ActionKernel) -> Vec<f64> {
    lax_oleinik_costs(u, kernel, &kernel.costs())
}

fn lax_oleinik_costs(u: &[f64], kernel: &ActionKernel, costs: &[f64]) -> Vec<f64> {
    let nd = kernel.nd();
    let mut out = vec![f64::INFINITY; u.len()];
    for (x, &ux) in u.iter().enumerate() {
        for k in 0..nd {
            let i = x * nd + k;
            let y = kernel.targets[i] as usize;
            let v = ux + costs[i];
            if v < out[y] {
                out[y] = v;
            }
        }
    }
    out
}

/// Backward operator `(Ť w)(x) = min_{x'} w(x') + G_c(x, x')`.
pub fn lax_oleinik_backward(w: &[f64], kernel: &ActionKernel) -> Vec<f64> {
    backward_costs(w, kernel, &kernel.costs())
}

fn backward_costs(w: &[f64], kernel: &ActionKernel, costs: &[f64]) -> Vec<f64> {
    let nd = kernel.nd();
    (0..w.len())
        .map(|x| (0..nd).map(|k| w[kernel.targets[x * nd + k] as usize] + costs[x * nd + k]).fold(f64::INFINITY, f64::min))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Plain iterations before switching to the averaged map `½(u + Tu)`.
    pub plain_iter: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { tol: 1e-9, max_iter: 100_000, plain_iter: 2_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakKamSolution {
    pub c: Vec<f64>,
    /// Fixed point `T_c u = u − α`, normalized to `min u = 0`.
    pub u: Vec<f64>,
    /// Dual solution `ǔ = −w` with `Ť w = w − α`.
    pub u_dual: Vec<f64>,
    pub alpha: f64,
    /// `max |T_c u − u + α|`.
    pub residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Spread `max(Tu − u) − min(Tu − u)` per iteration.
    pub history: Vec<f64>,
}

struct Fixed {
    u: Vec<f64>,
    alpha: f64,
    residual: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn iterate(n: usize, op: impl Fn(&[f64]) -> Vec<f64>, cfg: &SolveConfig) -> Result<Fixed> {
    let mut u = vec![0.0; n];
    let mut history = Vec::new();
    for it in 1..=cfg.max_iter {
        let v = op(&u);
        let (lo, hi) = v.iter().zip(&u).map(|(a, b)| a - b).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| (l.min(d), h.max(d)));
        if !lo.is_finite() || !hi.is_finite() {
            return Err(LabError::NonConvergence("Lax–Oleinik image is not finite: the kernel does not connect the grid".into()));
        }
        let spread = hi - lo;
        history.push(spread);
        if spread <= 2.0 * cfg.tol {
            let alpha = -0.5 * (lo + hi);
            let m = u.iter().copied().fold(f64::INFINITY, f64::min);
            return Ok(Fixed { u: u.iter().map(|x| x - m).collect(), alpha, residual: 0.5 * spread, iterations: it, history });
        }
        let next: Vec<f64> = if it <= cfg.plain_iter { v } else { v.iter().zip(&u).map(|(a, b)| 0.5 * (a + b)).collect() };
        let m = next.iter().copied().fold(f64::INFINITY, f64::min);
        u = next.into_iter().map(|x| x - m).collect();
    }
    let last = history.last().copied().unwrap_or(f64::NAN);
    Err(LabError::NonConvergence(format!("value iteration stopped at spread {last:e} after {} iterations", cfg.max_iter)))
}

/// Value iteration with sup normalization for `u` and for the dual.
pub fn solve_weak_kam(kernel: &ActionKernel, cfg: &SolveConfig) -> Result<WeakKamSolution> {
    let costs = kernel.costs();
    let n = kernel.grid.len();
    let fwd = iterate(n, |u| lax_oleinik_costs(u, kernel, &costs), cfg)?;
    let bwd = iterate(n, |w| backward_costs(w, kernel, &costs), cfg)?;
    Ok(WeakKamSolution {
        c: kernel.c.clone(),
        u: fwd.u,
        u_dual: bwd.u.iter().map(|w| -w).collect(),
        alpha: fwd.alpha,
        residual: fwd.residual,
        dual_residual: bwd.residual,
        iterations: fwd.iterations,
        history: fwd.history,
    })
}

/// Dense min-plus product `(A ⊗ B)(i, j) = min_k A(i, k) + B(k, j)`.
pub fn minplus_product(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            let mut out = vec![f64::INFINITY; m];
            for (k, &aik) in row.iter().enumerate() {
                if aik.is_finite() {
                    for (o, &bkj) in out.iter_mut().zip(&b[k]) {
                        let v = aik + bkj;
                        if v < *o {
                            *o = v;
                        }
                    }
                }
            }
            out
        })
        .collect()
}

/// Dense `G_c + shift` matrix; `+∞` outside the capped displacements.
pub fn dense_kernel(kernel: &ActionKernel, shift: f64) -> Vec<Vec<f64>> {
    let n = kernel.grid.len();
    let nd = kernel.nd();
    let costs = kernel.costs();
    let mut g = vec![vec![f64::INFINITY; n]; n];
    for x in 0..n {
        for k in 0..nd {
            let y = kernel.targets[x * nd + k] as usize;
            g[x][y] = g[x][y].min(costs[x * nd + k] + shift);
        }
    }
    g
}

/// `lim inf` of min-plus powers of `G_c + α` by repeated squaring, for small
/// grids; used to cross-check [`peierls_barrier`].
pub fn barrier_by_squaring(kernel: &ActionKernel, alpha: f64, tol: f64, max_squarings: usize) -> Result<Vec<Vec<f64>>> {
    let mut p = dense_kernel(kernel, alpha);
    for _ in 0..max_squarings {
        let q = minplus_product(&p, &p);
        let change = p.iter().flatten().zip(q.iter().flatten()).filter(|(a, b)| a.is_finite() || b.is_finite()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if q.iter().flatten().any(|v| *v < -1e3) {
            return Err(LabError::Barrier("min-plus powers diverge: α is too small".into()));
        }
        p = q;
        if change <= tol {
            return Ok(p);
        }
    }
    Err(LabError::Barrier(format!("min-plus powers not Cauchy within {max_squarings} squarings")))
}

#[derive(Clone, Debug, Serialize)]
pub struct MatherConfig {
    /// Tolerance on reduced edge weights and on `u − ǔ`.
    pub threshold: f64,
}

impl Default for MatherConfig {
    fn default() -> Self {
        MatherConfig { threshold: 3e-9 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MatherData {
    pub c: Vec<f64>,
    pub threshold: f64,
    /// Nodes on cycles of zero reduced weight.
    pub aubry: Vec<usize>,
    /// Each static class is a strongly connected component of the zero-weight graph.
    pub static_classes: Vec<Vec<usize>>,
    /// Nodes where `u − ǔ` is within the threshold of its minimum.
    pub calibrated: Vec<usize>,
    /// Nodes on semi-static chains between static classes.
    pub mane: Vec<usize>,
    /// `p = c + du` at calibrated nodes, centered differences.
    pub momenta: Vec<Vec<f64>>,
    pub max_momentum_offset: f64,
    /// Largest `|Δp|/|Δx|` between neighboring calibrated nodes.
    pub momentum_lipschitz: f64,
    /// Sizes of the calibrated set at half and one and a half times the threshold.
    pub sensitivity: (usize, usize),
}

/// Graph of reduced weights `G_c + α + u(x) − u(x') ≥ 0`, clamped at zero.
pub struct ReducedGraph {
    pub graph: DiGraph<(), f64>,
    u: Vec<f64>,
}

impl ReducedGraph {
    pub fn new(kernel: &ActionKernel, sol: &WeakKamSolution) -> Self {
        let n = kernel.grid.len();
        let nd = kernel.nd();
        let costs = kernel.costs();
        let mut graph = DiGraph::with_capacity(n, n * nd);
        for _ in 0..n {
            graph.add_node(());
        }
        for x in 0..n {
            for k in 0..nd {
                let y = kernel.targets[x * nd + k] as usize;
                let w = costs[x * nd + k] + sol.alpha + sol.u[x] - sol.u[y];
                graph.add_edge(NodeIndex::new(x), NodeIndex::new(y), w.max(0.0));
            }
        }
        ReducedGraph { graph, u: sol.u.clone() }
    }

    /// Mañé potential `Φ(x, ·)` (minimal `G_c + α` action of chains from `x`).
    pub fn potential_from(&self, x: usize) -> Vec<f64> {
        let d = dijkstra(&self.graph, NodeIndex::new(x), None, |e| *e.weight());
        (0..self.u.len()).map(|y| d.get(&NodeIndex::new(y)).map_or(f64::INFINITY, |v| v - self.u[x] + self.u[y])).collect()
    }

    /// `Φ(·, y)`.
    pub fn potential_to(&self, y: usize) -> Vec<f64> {
        let rev = petgraph::visit::Reversed(&self.graph);
        let d = dijkstra(rev, NodeIndex::new(y), None, |e| *e.weight());
        (0..self.u.len()).map(|x| d.get(&NodeIndex::new(x)).map_or(f64::INFINITY, |v| v - self.u[x] + self.u[y])).collect()
    }
}

/// Aubry set and static classes from the zero-weight subgraph.
pub fn static_classes(kernel: &ActionKernel, sol: &WeakKamSolution, threshold: f64) -> Vec<Vec<usize>> {
    let n = kernel.grid.len();
    let nd = kernel.nd();
    let costs = kernel.costs();
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, n);
    for _ in 0..n {
        g.add_node(());
    }
    let mut self_loop = vec![false; n];
    for x in 0..n {
        for k in 0..nd {
            let y = kernel.targets[x * nd + k] as usize;
            if costs[x * nd + k] + sol.alpha + sol.u[x] - sol.u[y] <= threshold {
                if x == y {
                    self_loop[x] = true;
                }
                g.add_edge(NodeIndex::new(x), NodeIndex::new(y), ());
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|i| i.index()).collect();
            v.sort_unstable();
            v
        })
        .filter(|c| c.len() > 1 || self_loop[c[0]])
        .collect();
    classes.sort();
    classes
}

fn centered_gradient(kernel: &ActionKernel, u: &[f64], x: usize) -> Vec<f64> {
    let g = kernel.grid;
    (0..g.dim)
        .map(|a| {
            let mut e = vec![0i64; g.dim];
            e[a] = 1;
            let up = g.shift(x, &e);
            e[a] = -1;
            let dn = g.shift(x, &e);
            (u[up] - u[dn]) * g.n as f64 / 2.0
        })
        .collect()
}

pub fn mather_sets(kernel: &ActionKernel, sol: &WeakKamSolution, cfg: &MatherConfig) -> MatherData {
    let thr = cfg.threshold.max(3.0 * sol.residual.max(sol.dual_residual));
    let classes = static_classes(kernel, sol, thr);
    let mut aubry: Vec<usize> = classes.iter().flatten().copied().collect();
    aubry.sort_unstable();

    let gap: Vec<f64> = sol.u.iter().zip(&sol.u_dual).map(|(a, b)| a - b).collect();
    let gmin = gap.iter().copied().fold(f64::INFINITY, f64::min);
    let within = |t: f64| (0..gap.len()).filter(|&x| gap[x] <= gmin + t).collect::<Vec<_>>();
    let calibrated = within(thr);
    let sensitivity = (within(0.5 * thr).len(), within(1.5 * thr).len());

    let reduced = ReducedGraph::new(kernel, sol);
    let reps: Vec<usize> = classes.iter().map(|c| c[0]).collect();
    let from: Vec<Vec<f64>> = reps.iter().map(|&r| reduced.potential_from(r)).collect();
    let to: Vec<Vec<f64>> = reps.iter().map(|&r| reduced.potential_to(r)).collect();
    let mane: Vec<usize> = (0..kernel.grid.len())
        .filter(|&x| {
            (0..reps.len()).any(|i| (0..reps.len()).any(|j| from[i][x] + to[j][x] - from[i][reps[j]] <= thr * (1.0 + kernel.grid.n as f64)))
        })
        .collect();

    let momenta: Vec<Vec<f64>> = calibrated.iter().map(|&x| centered_gradient(kernel, &sol.u, x).iter().zip(&kernel.c).map(|(du, c)| c + du).collect()).collect();
    let max_momentum_offset = momenta.iter().map(|p| p.iter().zip(&kernel.c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let mut lip = 0.0f64;
    for (i, &a) in calibrated.iter().enumerate() {
        for (j, &b) in calibrated.iter().enumerate().skip(i + 1) {
            if kernel.grid.cell_distance(a, b) == 1 {
                let dp = momenta[i].iter().zip(&momenta[j]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                lip = lip.max(dp * kernel.grid.n as f64);
            }
        }
    }
    MatherData {
        c: kernel.c.clone(),
        threshold: thr,
        aubry,
        static_classes: classes,
        calibrated,
        mane,
        momenta,
        max_momentum_offset,
        momentum_lipschitz: lip,
        sensitivity,
    }
}

/// Peierls barrier `h(x, y) = min_{a ∈ A} Φ(x, a) + Φ(a, y)`, by Dijkstra
/// on a two-layer copy of the reduced graph whose second layer is entered
/// only at Aubry nodes.
pub struct PeierlsBarrier {
    graph: DiGraph<(), f64>,
    u: Vec<f64>,
}

impl PeierlsBarrier {
    pub fn new(kernel: &ActionKernel, sol: &WeakKamSolution, aubry: &[usize]) -> Result<Self> {
        if aubry.is_empty() {
            return Err(LabError::Barrier("empty Aubry set".into()));
        }
        let reduced = ReducedGraph::new(kernel, sol);
        let n = kernel.grid.len();
        let mut g: DiGraph<(), f64> = DiGraph::with_capacity(2 * n, 2 * reduced.graph.edge_count() + aubry.len());
        for _ in 0..2 * n {
            g.add_node(());
        }
        for e in reduced.graph.raw_edges() {
            let (a, b) = (e.source().index(), e.target().index());
            g.add_edge(NodeIndex::new(a), NodeIndex::new(b), e.weight);
            g.add_edge(NodeIndex::new(n + a), NodeIndex::new(n + b), e.weight);
        }
        for &a in aubry {
            g.add_edge(NodeIndex::new(a), NodeIndex::new(n + a), 0.0);
        }
        Ok(PeierlsBarrier { graph: g, u: sol.u.clone() })
    }

    /// `h(x, ·)`.
    pub fn from(&self, x: usize) -> Vec<f64> {
        let n = self.u.len();
        let d = dijkstra(&self.graph, NodeIndex::new(x), None, |e| *e.weight());
        (0..n).map(|y| d.get(&NodeIndex::new(n + y)).map_or(f64::INFINITY, |v| v - self.u[x] + self.u[y])).collect()
    }

    /// `h(·, y)`.
    pub fn to(&self, y: usize) -> Vec<f64> {
        let n = self.u.len();
        let rev = petgraph::visit::Reversed(&self.graph);
        let d = dijkstra(rev, NodeIndex::new(n + y), None, |e| *e.weight());
        (0..n).map(|x| d.get(&NodeIndex::new(x)).map_or(f64::INFINITY, |v| v - self.u[x] + self.u[y])).collect()
    }
}

/// Rows `h(x, ·)` for the given sources.
pub fn peierls_barrier(kernel: &ActionKernel, sol: &WeakKamSolution, aubry: &[usize], sources: &[usize]) -> Result<Vec<Vec<f64>>> {
    let pb = PeierlsBarrier::new(kernel, sol, aubry)?;
    Ok(sources.iter().map(|&x| pb.from(x)).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct Cluster {
    pub nodes: Vec<usize>,
    /// Largest pairwise cell distance.
    pub diameter: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierFunctions {
    pub theta0: usize,
    pub theta1: usize,
    /// `b⁺(θ) = h(θ₀, θ) + h(θ, θ₁)`.
    pub b_plus: Vec<f64>,
    /// `b⁻(θ) = h(θ₁, θ) + h(θ, θ₀)`.
    pub b_minus: Vec<f64>,
    pub min_plus: f64,
    pub min_minus: f64,
    /// Minimizing clusters away from the Aubry set.
    pub clusters_plus: Vec<Cluster>,
    pub clusters_minus: Vec<Cluster>,
    /// Every cluster has diameter at most 2 cells.
    pub nondegenerate: bool,
}

fn clusters(kernel: &ActionKernel, nodes: &[usize]) -> Vec<Cluster> {
    let g = kernel.grid;
    let mut seen = vec![false; nodes.len()];
    let mut out = Vec::new();
    for s in 0..nodes.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![nodes[s]];
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for j in 0..nodes.len() {
                if !seen[j] && g.cell_distance(nodes[i], nodes[j]) <= 1 {
                    seen[j] = true;
                    comp.push(nodes[j]);
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        let diameter = comp.iter().flat_map(|&a| comp.iter().map(move |&b| (a, b))).map(|(a, b)| g.cell_distance(a, b)).max().unwrap_or(0);
        out.push(Cluster { nodes: comp, diameter });
    }
    out
}

/// `b±` through two Aubry nodes and the isolation verdict of their minima
/// outside a one-cell neighborhood of the Aubry set.
pub fn barrier_functions(kernel: &ActionKernel, sol: &WeakKamSolution, mather: &MatherData, theta0: usize, theta1: usize) -> Result<BarrierFunctions> {
    let pb = PeierlsBarrier::new(kernel, sol, &mather.aubry)?;
    let (from0, from1) = (pb.from(theta0), pb.from(theta1));
    let (to0, to1) = (pb.to(theta0), pb.to(theta1));
    let n = kernel.grid.len();
    let b_plus: Vec<f64> = (0..n).map(|x| from0[x] + to1[x]).collect();
    let b_minus: Vec<f64> = (0..n).map(|x| from1[x] + to0[x]).collect();
    let thr = mather.threshold.max(1e-9) * (1.0 + kernel.grid.n as f64);
    let away = |x: usize| mather.aubry.iter().all(|&a| kernel.grid.cell_distance(a, x) > 1);
    let minimizers = |b: &[f64]| {
        let m = b.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
        let nodes: Vec<usize> = (0..n).filter(|&x| b[x] <= m + thr && away(x)).collect();
        (m, clusters(kernel, &nodes))
    };
    let (min_plus, clusters_plus) = minimizers(&b_plus);
    let (min_minus, clusters_minus) = minimizers(&b_minus);
    let nondegenerate = clusters_plus.iter().chain(&clusters_minus).all(|c| c.diameter <= 2);
    Ok(BarrierFunctions { theta0, theta1, b_plus, b_minus, min_plus, min_minus, clusters_plus, clusters_minus, nondegenerate })
}
