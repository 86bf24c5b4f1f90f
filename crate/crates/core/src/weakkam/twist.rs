//! Periodic minimal configurations and rotation numbers on one-dimensional kernels.

use serde::Serialize;

use super::kernel::ActionKernel;
use super::solve::WeakKamSolution;
use crate::error::{LabError, Result};

pub const MAX_PERIOD: usize = 13;

/// A `(p, q)` configuration: lifted cells `x_0..x_{q−1}`, with `x_{i+q} = x_i + pN`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Configuration {
    pub cells: Vec<i64>,
    pub action: f64,
}

impl Configuration {
    /// Lifted cell `x_i` for any `i ≥ 0`.
    pub fn at(&self, i: usize, p: i64, n: usize) -> i64 {
        let q = self.cells.len();
        self.cells[i % q] + (i / q) as i64 * p * n as i64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicMinimizers {
    pub p: i64,
    pub q: usize,
    /// Minimal cyclic sum `Σ G(x_k, x_{k+1})` of the raw actions.
    pub min_action: f64,
    /// One representative per deck-translation class.
    pub configurations: Vec<Configuration>,
    pub rotation: f64,
}

/// Exact minimization of the cyclic action over `(p, q)` configurations by
/// dynamic programming over lifted cells, one pass per starting node. Only
/// paths within one turn of the straight line are searched, which contains
/// every minimizer.
pub fn periodic_configurations(kernel: &ActionKernel, p: i64, q: usize, tol: f64) -> Result<PeriodicMinimizers> {
    if kernel.grid.dim != 1 {
        return Err(LabError::Dimension("periodic configurations need a one-dimensional kernel".into()));
    }
    if q == 0 || q > MAX_PERIOD {
        return Err(LabError::Precondition(format!("period {q} outside 1..={MAX_PERIOD}")));
    }
    let n = kernel.grid.n as i64;
    let nd = kernel.nd();
    let steps: Vec<i64> = kernel.displacements.iter().map(|d| d[0]).collect();
    let width = (2 * n + 1) as usize;
    let line = |i: usize| (i as i64 * p * n).div_euclid(q as i64);
    let mut best = Vec::new();
    for m0 in 0..n {
        // cost[i][s] with r = line(i) − n + s the offset from m0
        let mut cost = vec![vec![f64::INFINITY; width]; q + 1];
        let mut pred = vec![vec![usize::MAX; width]; q + 1];
        cost[0][n as usize] = 0.0;
        for i in 0..q {
            for s in 0..width {
                let c = cost[i][s];
                if !c.is_finite() {
                    continue;
                }
                let r = line(i) - n + s as i64;
                let node = (m0 + r).rem_euclid(n) as usize;
                for (k, &dk) in steps.iter().enumerate() {
                    let t = r + dk - (line(i + 1) - n);
                    if t < 0 || t >= width as i64 {
                        continue;
                    }
                    let v = c + kernel.action[node * nd + k];
                    let t = t as usize;
                    if v < cost[i + 1][t] {
                        cost[i + 1][t] = v;
                        pred[i + 1][t] = s;
                    }
                }
            }
        }
        let end = p * n - (line(q) - n);
        if end < 0 || end >= width as i64 || !cost[q][end as usize].is_finite() {
            continue;
        }
        let mut cells = vec![0; q];
        let mut s = end as usize;
        for i in (1..=q).rev() {
            s = pred[i][s];
            cells[i - 1] = m0 + line(i - 1) - n + s as i64;
        }
        best.push(Configuration { cells, action: cost[q][end as usize] });
    }
    let min_action = best.iter().map(|c| c.action).fold(f64::INFINITY, f64::min);
    if !min_action.is_finite() {
        return Err(LabError::Precondition(format!("velocity cap admits no ({p}, {q}) configuration")));
    }
    let mut configurations: Vec<Configuration> = Vec::new();
    for c in best.into_iter().filter(|c| c.action <= min_action + tol) {
        let c = canonical(&c, p, kernel.grid.n);
        if !configurations.iter().any(|d| d.cells == c.cells) {
            configurations.push(c);
        }
    }
    Ok(PeriodicMinimizers { p, q, min_action, configurations, rotation: p as f64 / q as f64 })
}

/// Deck-translation representative: re-indexed to start at the smallest
/// residue, then shifted into `[0, N)`.
fn canonical(c: &Configuration, p: i64, n: usize) -> Configuration {
    let q = c.cells.len();
    let ni = n as i64;
    let j = (0..q).min_by_key(|&j| (c.cells[j].rem_euclid(ni), j)).unwrap_or(0);
    let base = c.cells[j].div_euclid(ni) * ni;
    Configuration { cells: (0..q).map(|i| c.at(i + j, p, n) - base).collect(), action: c.action }
}

/// Aubry's ordering: `a` and every deck translate of `b` are weakly ordered.
pub fn non_crossing(a: &Configuration, b: &Configuration, p: i64, n: usize) -> bool {
    let q = a.cells.len();
    let ni = n as i64;
    let (amin, amax) = (*a.cells.iter().min().unwrap_or(&0), *a.cells.iter().max().unwrap_or(&0));
    let (bmin, bmax) = (b.cells.iter().min().copied().unwrap_or(0), b.cells.iter().max().copied().unwrap_or(0) + p.abs() * ni);
    let (mlo, mhi) = ((amin - bmax).div_euclid(ni) - 1, (amax - bmin).div_euclid(ni) + 1);
    for j in 0..b.cells.len() {
        for m in mlo..=mhi {
            let (mut pos, mut neg) = (false, false);
            for i in 0..q {
                let d = a.at(i, p, n) - (b.at(i + j, p, n) + m * ni);
                pos |= d > 0;
                neg |= d < 0;
            }
            if pos && neg {
                return false;
            }
        }
    }
    true
}

/// Orbit of the discrete dynamics from an Aubry node: each step takes the
/// smallest reduced weight among moves landing in `aubry`, ties to the lowest
/// displacement index. Returns lifted cells.
pub fn aubry_orbit(kernel: &ActionKernel, sol: &WeakKamSolution, aubry: &[usize], start: usize, steps: usize) -> Result<Vec<i64>> {
    if kernel.grid.dim != 1 {
        return Err(LabError::Dimension("lifted orbits are tracked on one-dimensional kernels".into()));
    }
    let nd = kernel.nd();
    let costs = kernel.costs();
    let mut inside = vec![aubry.is_empty(); kernel.grid.len()];
    for &a in aubry {
        inside[a] = true;
    }
    let mut x = start;
    let mut lifted = vec![start as i64];
    for _ in 0..steps {
        let mut best = (f64::INFINITY, 0);
        for k in 0..nd {
            let y = kernel.target(x, k);
            if !inside[y] {
                continue;
            }
            let w = costs[x * nd + k] + sol.alpha + sol.u[x] - sol.u[y];
            if w < best.0 {
                best = (w, k);
            }
        }
        if !best.0.is_finite() {
            return Err(LabError::Precondition(format!("Aubry orbit stalls at node {x}")));
        }
        let last = *lifted.last().unwrap_or(&0);
        lifted.push(last + kernel.displacements[best.1][0]);
        x = kernel.target(x, best.1);
    }
    Ok(lifted)
}

/// `lim (x_k − x_0)/k`, with one Richardson step on `r(k) = ρ + a/k`
/// between `K` and `K/2`.
pub fn rotation_number(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(LabError::Precondition("rotation number needs at least two steps".into()));
    }
    let k = x.len() - 1;
    let h = k / 2;
    Ok((x[k] - x[h]) / (k - h) as f64)
}

/// Exact rotation of an eventually periodic lifted orbit on a grid of `n`
/// cells, read off the first repeated residue. `None` if no cell repeats.
pub fn cycle_rotation(lifted: &[i64], n: usize) -> Option<f64> {
    let ni = n as i64;
    let mut seen = std::collections::HashMap::new();
    for (i, &x) in lifted.iter().enumerate() {
        if let Some(&j) = seen.get(&x.rem_euclid(ni)) {
            let (xj, len): (i64, usize) = (lifted[j], i - j);
            return Some((x - xj) as f64 / (ni as f64 * len as f64));
        }
        seen.insert(x.rem_euclid(ni), i);
    }
    None
}
