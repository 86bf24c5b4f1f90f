//! Time-one action kernel on a torus grid.

use rayon::prelude::*;
use serde::Serialize;

use super::lagrangian::Lagrangian;
use crate::error::{LabError, Result};
use crate::model::small;

/// `N^d` nodes `m/N`, `m ∈ {0..N−1}^d`, indexed lexicographically (first coordinate slowest).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TorusGrid {
    pub dim: usize,
    pub n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) || n < 2 {
            return Err(LabError::Precondition(format!("grid needs dimension 1 or 2 and N ≥ 2 (got {dim}, {n})")));
        }
        Ok(TorusGrid { dim, n })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi(&self, idx: usize) -> Vec<i64> {
        let mut m = vec![0; self.dim];
        let mut r = idx;
        for a in (0..self.dim).rev() {
            m[a] = (r % self.n) as i64;
            r /= self.n;
        }
        m
    }

    /// Index of a multi-index reduced mod `N`.
    pub fn index(&self, m: &[i64]) -> usize {
        m.iter().fold(0, |acc, &v| acc * self.n + v.rem_euclid(self.n as i64) as usize)
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.multi(idx).iter().map(|&m| m as f64 / self.n as f64).collect()
    }

    pub fn shift(&self, idx: usize, d: &[i64]) -> usize {
        let m: Vec<i64> = self.multi(idx).iter().zip(d).map(|(a, b)| a + b).collect();
        self.index(&m)
    }

    /// Periodic sup-distance in cells.
    pub fn cell_distance(&self, a: usize, b: usize) -> i64 {
        let n = self.n as i64;
        self.multi(a)
            .iter()
            .zip(self.multi(b))
            .map(|(x, y)| {
                let d = (x - y).rem_euclid(n);
                d.min(n - d)
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelConfig {
    pub n: usize,
    /// Interior knots of the piecewise-linear competitors.
    pub knots: usize,
    /// Velocities `d/N` kept satisfy `|d_i/N − center_i| ≤ cap_i`; others are `+∞`.
    pub center: Vec<f64>,
    pub cap: Vec<f64>,
}

/// `G_c(x, x + d/N) = A(x, d) − c·d/N` for every node `x` and displacement `d`
/// in the capped set, with `A` the minimal time-one action.
#[derive(Clone, Debug, Serialize)]
pub struct ActionKernel {
    pub grid: TorusGrid,
    pub knots: usize,
    pub center: Vec<f64>,
    pub cap: Vec<f64>,
    pub c: Vec<f64>,
    /// Lift displacements in cells.
    pub displacements: Vec<Vec<i64>>,
    /// `A(x, d_k)` at `[x·|D| + k]`, independent of `c`.
    #[serde(skip)]
    pub action: Vec<f64>,
    /// Target node of `(x, k)`, same layout.
    #[serde(skip)]
    pub targets: Vec<u32>,
}

impl ActionKernel {
    pub fn nd(&self) -> usize {
        self.displacements.len()
    }

    /// Same minimal actions at another cohomology class.
    pub fn with_cohomology(&self, c: &[f64]) -> ActionKernel {
        ActionKernel { c: c.to_vec(), ..self.clone() }
    }

    pub fn velocity(&self, k: usize) -> Vec<f64> {
        self.displacements[k].iter().map(|&d| d as f64 / self.grid.n as f64).collect()
    }

    /// `G_c` entry for node `x` and displacement index `k`.
    pub fn entry(&self, x: usize, k: usize) -> f64 {
        let n = self.grid.n as f64;
        let shift: f64 = self.c.iter().zip(&self.displacements[k]).map(|(c, &d)| c * d as f64 / n).sum();
        self.action[x * self.nd() + k] - shift
    }

    pub fn target(&self, x: usize, k: usize) -> usize {
        self.targets[x * self.nd() + k] as usize
    }

    /// All `G_c` entries in the layout of `action`.
    pub fn costs(&self) -> Vec<f64> {
        let n = self.grid.n as f64;
        let shifts: Vec<f64> = self.displacements.iter().map(|dk| self.c.iter().zip(dk).map(|(c, &d)| c * d as f64 / n).sum()).collect();
        let nd = self.nd();
        self.action.iter().enumerate().map(|(i, a)| a - shifts[i % nd]).collect()
    }

    /// Index of the zero displacement, if kept.
    pub fn rest(&self) -> Option<usize> {
        self.displacements.iter().position(|d| d.iter().all(|&v| v == 0))
    }
}

const GAUSS: [(f64, f64); 3] = [(0.112_701_665_379_258_3, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.887_298_334_620_741_7, 5.0 / 18.0)];
const MAX_VARS: usize = 16;

/// Action, gradient and Hessian of the piecewise-linear curve through
/// `x0, y_1..y_M, x1` over `t ∈ [0, 1]`.
fn curve_action(l: &dyn Lagrangian, x0: &[f64], x1: &[f64], y: &[f64], want_hess: bool) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let d = l.dim();
    let m = y.len() / d;
    let segs = m + 1;
    let tau = 1.0 / segs as f64;
    let knot = |i: usize| -> &[f64] {
        if i == 0 {
            x0
        } else if i == segs {
            x1
        } else {
            &y[(i - 1) * d..i * d]
        }
    };
    let nv = m * d;
    let mut s = 0.0;
    let mut g = vec![0.0; nv];
    let mut h = if want_hess { vec![vec![0.0; nv]; nv] } else { vec![] };
    let mut pos = [0.0; 4];
    let mut vel = [0.0; 4];
    for i in 0..segs {
        let (a, b) = (knot(i), knot(i + 1));
        for k in 0..d {
            vel[k] = (b[k] - a[k]) / tau;
        }
        for &(sg, w) in &GAUSS {
            for k in 0..d {
                pos[k] = a[k] + sg * (b[k] - a[k]);
            }
            let j = l.jet((i as f64 + sg) * tau, &pos[..d], &vel[..d])?;
            s += tau * w * j.value;
            // (dy/dknot, dv/dknot) for the two ends
            let ends = [(i, 1.0 - sg, -1.0 / tau), (i + 1, sg, 1.0 / tau)];
            for &(ka, ya, va) in &ends {
                if ka == 0 || ka == segs {
                    continue;
                }
                let ra = (ka - 1) * d;
                for p in 0..d {
                    g[ra + p] += tau * w * (ya * j.dx[p] + va * j.dv[p]);
                }
                if want_hess {
                    for &(kb, yb, vb) in &ends {
                        if kb == 0 || kb == segs {
                            continue;
                        }
                        let rb = (kb - 1) * d;
                        for p in 0..d {
                            for q in 0..d {
                                let v = ya * yb * j.hxx[p][q] + ya * vb * j.hxv[p][q] + va * yb * j.hxv[q][p] + va * vb * j.hvv[p][q];
                                h[ra + p][rb + q] += tau * w * v;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((s, g, h))
}

/// Minimal action over piecewise-linear curves with `knots` interior knots from
/// `x0` to the lifted point `x1`, by damped Newton from the straight line.
pub fn minimal_action(l: &dyn Lagrangian, x0: &[f64], x1: &[f64], knots: usize) -> Result<(f64, Vec<f64>)> {
    let d = l.dim();
    let nv = knots * d;
    if nv > MAX_VARS {
        return Err(LabError::Precondition(format!("{knots} knots in dimension {d} exceed {MAX_VARS} unknowns")));
    }
    let fail = || LabError::Kernel { from: x0.to_vec(), to: x1.to_vec() };
    let mut y: Vec<f64> = (1..=knots).flat_map(|i| (0..d).map(move |k| (i, k))).map(|(i, k)| x0[k] + (x1[k] - x0[k]) * i as f64 / (knots + 1) as f64).collect();
    if nv == 0 {
        return Ok((curve_action(l, x0, x1, &y, false)?.0, y));
    }
    let (mut s, mut g, mut h) = curve_action(l, x0, x1, &y, true)?;
    for _ in 0..60 {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= 1e-13 {
            return Ok((s, y));
        }
        let mut a = [[0.0; MAX_VARS]; MAX_VARS];
        let mut b = [0.0; MAX_VARS];
        for r in 0..nv {
            b[r] = -g[r];
            for c in 0..nv {
                a[r][c] = h[r][c];
            }
        }
        let newton = small::solve(nv, &mut a, &mut b) && (0..nv).map(|r| b[r] * g[r]).sum::<f64>() < 0.0;
        let dir: Vec<f64> = if newton { b[..nv].to_vec() } else { g.iter().map(|v| -v).collect() };
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            let trial: Vec<f64> = y.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let (st, gt, ht) = curve_action(l, x0, x1, &trial, true)?;
            if st <= s + 1e-4 * step * slope || (st - s).abs() <= 1e-15 * s.abs().max(1.0) {
                let moved = dir.iter().fold(0.0f64, |m, v| m.max((step * v).abs()));
                y = trial;
                s = st;
                g = gt;
                h = ht;
                accepted = true;
                if moved <= 1e-14 {
                    return Ok((s, y));
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no decrease possible at double precision
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return if gmax <= 1e-8 { Ok((s, y)) } else { Err(fail()) };
        }
    }
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gmax <= 1e-8 {
        Ok((s, y))
    } else {
        Err(fail())
    }
}

/// Builds the capped kernel at cohomology `c`.
pub fn action_kernel(l: &dyn Lagrangian, c: &[f64], cfg: &KernelConfig) -> Result<ActionKernel> {
    let d = l.dim();
    let grid = TorusGrid::new(d, cfg.n)?;
    if c.len() != d || cfg.center.len() != d || cfg.cap.len() != d {
        return Err(LabError::Dimension(format!("kernel of dimension {d} needs c, center and cap of that length")));
    }
    if cfg.cap.iter().any(|&v| !(v >= 0.0)) {
        return Err(LabError::Precondition("velocity cap must be non-negative".into()));
    }
    let n = cfg.n as f64;
    let ranges: Vec<(i64, i64)> = (0..d).map(|a| (((cfg.center[a] - cfg.cap[a]) * n).ceil() as i64, ((cfg.center[a] + cfg.cap[a]) * n).floor() as i64)).collect();
    let mut displacements = vec![vec![]];
    for &(lo, hi) in &ranges {
        displacements = displacements.into_iter().flat_map(|v: Vec<i64>| (lo..=hi).map(move |m| [v.clone(), vec![m]].concat())).collect();
    }
    if displacements.is_empty() || displacements[0].is_empty() {
        return Err(LabError::Precondition("velocity cap keeps no displacement".into()));
    }
    let nd = displacements.len();
    let row = |x: usize| -> Result<Vec<f64>> {
        let x0 = grid.coords(x);
        displacements
            .iter()
            .map(|dk| {
                let x1: Vec<f64> = x0.iter().zip(dk).map(|(a, &b)| a + b as f64 / n).collect();
                minimal_action(l, &x0, &x1, cfg.knots).map(|r| r.0)
            })
            .collect()
    };
    let action: Vec<f64> = if l.is_translation_invariant() {
        let r = row(0)?;
        (0..grid.len()).flat_map(|_| r.iter().copied()).collect()
    } else {
        let rows: Vec<Vec<f64>> = (0..grid.len()).into_par_iter().map(row).collect::<Result<_>>()?;
        rows.concat()
    };
    debug_assert_eq!(action.len(), grid.len() * nd);
    let targets = (0..grid.len()).flat_map(|x| displacements.iter().map(move |dk| grid.shift(x, dk) as u32)).collect();
    Ok(ActionKernel { grid, knots: cfg.knots, center: cfg.center.clone(), cap: cfg.cap.clone(), c: c.to_vec(), displacements, action, targets })
}
