//! Sampled verification of the isolating-block and cone conditions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::chart::{Chart, ChartPoint, ChartSample, ChartSlopes};
use super::matrix::{eig_range, op_norm};
use crate::error::{LabError, Result};
use crate::model::PhaseFunction;

/// A vector field in block coordinates `[u, s, Θ, I, t]` with `n_s`-dimensional `u` and `s`.
pub trait BlockField: Sync {
    fn ns(&self) -> usize;
    fn velocity(&self, c: &[f64]) -> Result<Vec<f64>>;
}

/// Hamiltonian field pushed through a [`Chart`], with chart data cached by `I`.
pub struct ChartField<'a> {
    pub chart: &'a Chart,
    pub ham: &'a dyn PhaseFunction,
    cache: Mutex<HashMap<u64, Arc<(ChartSample, ChartSlopes)>>>,
}

impl<'a> ChartField<'a> {
    pub fn new(chart: &'a Chart, ham: &'a dyn PhaseFunction) -> Self {
        ChartField { chart, ham, cache: Mutex::new(HashMap::new()) }
    }

    fn data(&self, i: f64) -> Result<Arc<(ChartSample, ChartSlopes)>> {
        let key = i.to_bits();
        if let Some(d) = self.cache.lock().expect("chart cache poisoned").get(&key) {
            return Ok(d.clone());
        }
        let d = Arc::new(self.chart.sample_with_slopes(self.chart.eps.sqrt() * i)?);
        let mut cache = self.cache.lock().expect("chart cache poisoned");
        if cache.len() > 20_000 {
            cache.clear();
        }
        cache.insert(key, d.clone());
        Ok(d)
    }
}

impl BlockField for ChartField<'_> {
    fn ns(&self) -> usize {
        self.chart.ns()
    }

    fn velocity(&self, c: &[f64]) -> Result<Vec<f64>> {
        let ns = self.ns();
        let d = self.data(c[2 * ns + 1])?;
        Ok(self.chart.velocity_with(self.ham, &d.0, &d.1, &ChartPoint::from_slice(ns, c)))
    }
}

/// Product block `B^u × B^s × (ℝ² × [I₋, I₊])` with margin `σ` in `I`.
#[derive(Clone, Debug, Serialize)]
pub struct IsolatingBlock {
    pub ns: usize,
    pub radius_u: f64,
    pub radius_s: f64,
    pub i_lo: f64,
    pub i_hi: f64,
    pub sigma: f64,
    /// Period of the field in `Θ`.
    pub theta_period: f64,
    /// Samples per dimension, at least 8.
    pub density: usize,
}

impl IsolatingBlock {
    /// Cutoff `χ(I)` of the extended field: 1 on `[I₋, I₊]`, 0 beyond `0.8σ`
    /// outside, cubic smoothstep in between so `|χ'| ≤ 1.875/σ`.
    pub fn cutoff(&self, i: f64) -> (f64, f64) {
        let d = if i < self.i_lo {
            self.i_lo - i
        } else if i > self.i_hi {
            i - self.i_hi
        } else {
            return (1.0, 0.0);
        };
        let w = 0.8 * self.sigma;
        let tau = d / w;
        if tau >= 1.0 {
            return (0.0, 0.0);
        }
        let sign = if i < self.i_lo { 1.0 } else { -1.0 };
        (1.0 - tau * tau * (3.0 - 2.0 * tau), sign * 6.0 * tau * (1.0 - tau) / w)
    }
}

/// Field with the `I`-component multiplied by the block cutoff.
pub struct ExtendedField<'a> {
    pub field: &'a dyn BlockField,
    pub block: &'a IsolatingBlock,
}

impl BlockField for ExtendedField<'_> {
    fn ns(&self) -> usize {
        self.field.ns()
    }

    fn velocity(&self, c: &[f64]) -> Result<Vec<f64>> {
        let ns = self.ns();
        let mut v = self.field.velocity(c)?;
        v[2 * ns + 1] *= self.block.cutoff(c[2 * ns + 1]).0;
        Ok(v)
    }
}

/// Off-diagonal block norms at the worst sample.
#[derive(Clone, Debug, Default, Serialize)]
pub struct OffBlocks {
    pub us: f64,
    pub uc: f64,
    pub su: f64,
    pub sc: f64,
    pub cu: f64,
    pub cs: f64,
    pub cc: f64,
    /// `2‖F_I‖/σ`.
    pub central_drift: f64,
}

impl OffBlocks {
    fn total(&self) -> f64 {
        self.us + self.uc + self.su + self.sc + self.cu + self.cs + self.cc + self.central_drift
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockCertificate {
    pub alpha: f64,
    pub m: f64,
    pub k_blk: f64,
    pub passed: bool,
    pub worst: OffBlocks,
    /// Where the cone constant `α` is attained.
    pub alpha_witness: Vec<f64>,
    pub m_witness: Vec<f64>,
    /// `min F_u·u/‖u‖²` over `∂B^u` and `max F_s·s/‖s‖²` over `∂B^s`.
    pub exit_rate: f64,
    pub entry_rate: f64,
    pub boundary_samples: usize,
    pub interior_samples: usize,
    pub reason: Option<String>,
}

fn sphere(ns: usize, r: f64, d: usize) -> Vec<Vec<f64>> {
    if ns == 1 {
        return vec![vec![-r], vec![r]];
    }
    let mut out = Vec::new();
    for g in cube(ns, 1.0, d) {
        let inf = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if (inf - 1.0).abs() < 1e-12 {
            let nrm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            out.push(g.iter().map(|x| r * x / nrm).collect());
        }
    }
    out
}

fn cube(ns: usize, r: f64, d: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..d).map(|i| -r + 2.0 * r * i as f64 / (d - 1) as f64).collect();
    let mut out = vec![vec![]];
    for _ in 0..ns {
        out = out.into_iter().flat_map(|v| axis.iter().map(move |&a| [v.clone(), vec![a]].concat())).collect();
    }
    out
}

fn ball(ns: usize, r: f64, d: usize) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = cube(ns, r, d).into_iter().filter(|v| v.iter().map(|x| x * x).sum::<f64>() <= r * r * (1.0 + 1e-12)).collect();
    if ns > 1 {
        pts.extend(sphere(ns, r, d));
    }
    pts
}

fn central(block: &IsolatingBlock) -> Vec<[f64; 3]> {
    let d = block.density;
    let mut out = Vec::with_capacity(d * d * d);
    let (lo, hi) = (block.i_lo - block.sigma, block.i_hi + block.sigma);
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                out.push([
                    block.theta_period * a as f64 / d as f64,
                    lo + (hi - lo) * b as f64 / (d - 1) as f64,
                    c as f64 / d as f64,
                ]);
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central-difference Jacobian with per-coordinate steps.
pub fn jacobian(field: &dyn BlockField, c: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
    let dim = c.len();
    let mut j = DMatrix::zeros(dim, dim);
    let mut q = c.to_vec();
    for k in 0..dim {
        q[k] = c[k] + steps[k];
        let up = field.velocity(&q)?;
        q[k] = c[k] - steps[k];
        let dn = field.velocity(&q)?;
        q[k] = c[k];
        for i in 0..dim {
            j[(i, k)] = (up[i] - dn[i]) / (2.0 * steps[k]);
        }
    }
    Ok(j)
}

/// Finite-difference steps: `1e-6` in `u, s, t`, scaled in `Θ` by its period and in `I` by `|I|`.
pub fn fd_steps(block: &IsolatingBlock, c: &[f64]) -> Vec<f64> {
    let ns = block.ns;
    let mut h = vec![1e-6; 2 * ns + 3];
    h[2 * ns] = 1e-6 * block.theta_period.min(1.0);
    h[2 * ns + 1] = 1e-6 * c[2 * ns + 1].abs().max(1.0);
    h
}

/// Checks the exit/entry sign conditions on the block boundary and estimates
/// `α`, `m` and `K_blk = m/(α − 2m)` on a sample grid of `Ω_σ`.
pub fn certify_block(field: &dyn BlockField, block: &IsolatingBlock) -> Result<BlockCertificate> {
    let ns = field.ns();
    if ns != block.ns {
        return Err(LabError::Dimension(format!("field has n_s = {ns}, block has {}", block.ns)));
    }
    if !(block.radius_u > 0.0 && block.radius_s > 0.0 && block.sigma > 0.0) {
        return Err(LabError::Precondition("block radii and margin must be positive".into()));
    }
    if block.density < 8 {
        return Err(LabError::Precondition(format!("sampling density {} is below 8", block.density)));
    }
    let d = block.density;
    let cent_owned = central(block);
    let cent = &cent_owned;
    let assemble = |u: &[f64], s: &[f64], c: &[f64; 3]| -> Vec<f64> { [u, s, &c[..]].concat() };
    let assemble = &assemble;

    // exit through ∂B^u
    let su = sphere(ns, block.radius_u, d);
    let bs = ball(ns, block.radius_s, d);
    let exits: Vec<(f64, Vec<f64>)> = su
        .iter()
        .flat_map(|u| bs.iter().flat_map(move |s| cent.iter().map(move |c| (u, s, c))))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(u, s, c)| {
            let x = assemble(u, s, c);
            let v = field.velocity(&x)?;
            Ok((dot(&v[..ns], u) / dot(u, u), x))
        })
        .collect::<Result<_>>()?;
    let (exit_rate, exit_w) = exits.iter().min_by(|a, b| a.0.total_cmp(&b.0)).cloned().unwrap_or((f64::INFINITY, vec![]));
    if !(exit_rate > 0.0) {
        return Err(LabError::Certificate { reason: format!("F_u·u = {exit_rate:e}·‖u‖² ≤ 0 on ∂B^u"), witness: exit_w });
    }
    // entry through ∂B^s
    let ss = sphere(ns, block.radius_s, d);
    let bu = ball(ns, block.radius_u, d);
    let entries: Vec<(f64, Vec<f64>)> = bu
        .iter()
        .flat_map(|u| ss.iter().flat_map(move |s| cent.iter().map(move |c| (u, s, c))))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|(u, s, c)| {
            let x = assemble(u, s, c);
            let v = field.velocity(&x)?;
            Ok((dot(&v[ns..2 * ns], s) / dot(s, s), x))
        })
        .collect::<Result<_>>()?;
    let (entry_rate, entry_w) = entries.iter().max_by(|a, b| a.0.total_cmp(&b.0)).cloned().unwrap_or((f64::NEG_INFINITY, vec![]));
    if !(entry_rate < 0.0) {
        return Err(LabError::Certificate { reason: format!("F_s·s = {entry_rate:e}·‖s‖² ≥ 0 on ∂B^s"), witness: entry_w });
    }

    // cone conditions in the interior
    let interior: Vec<Vec<f64>> = bu.iter().flat_map(|u| bs.iter().flat_map(move |s| cent.iter().map(move |c| assemble(u, s, c)))).collect();
    let per: Vec<(f64, OffBlocks, Vec<f64>)> = interior
        .par_iter()
        .map(|x| {
            let j = jacobian(field, x, &fd_steps(block, x))?;
            let v = field.velocity(x)?;
            let (u, s, c) = (0..ns, ns..2 * ns, 2 * ns..2 * ns + 3);
            let blk = |r: &std::ops::Range<usize>, k: &std::ops::Range<usize>| j.view((r.start, k.start), (r.len(), k.len())).into_owned();
            let luu = blk(&u, &u);
            let lss = blk(&s, &s);
            let a = eig_range(&((&luu + luu.transpose()) * 0.5)).0.min(eig_range(&(-(&lss + lss.transpose()) * 0.5)).0);
            let off = OffBlocks {
                us: op_norm(&blk(&u, &s)),
                uc: op_norm(&blk(&u, &c)),
                su: op_norm(&blk(&s, &u)),
                sc: op_norm(&blk(&s, &c)),
                cu: op_norm(&blk(&c, &u)),
                cs: op_norm(&blk(&c, &s)),
                cc: op_norm(&blk(&c, &c)),
                central_drift: 2.0 * v[2 * ns + 1].abs() / block.sigma,
            };
            Ok((a, off, x.clone()))
        })
        .collect::<Result<_>>()?;
    let amin = per.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("non-empty sample");
    let mmax = per.iter().max_by(|a, b| a.1.total().total_cmp(&b.1.total())).expect("non-empty sample");
    let (alpha, m) = (amin.0, mmax.1.total());
    let k_blk = if alpha > 2.0 * m { m / (alpha - 2.0 * m) } else { f64::INFINITY };
    let passed = 4.0 * m < alpha && k_blk <= std::f64::consts::FRAC_1_SQRT_2;
    let reason = if passed {
        None
    } else if alpha <= 0.0 {
        Some(format!("cone constant α = {alpha:e} is not positive"))
    } else {
        Some(format!("m = {m:e} too large for α = {alpha:e} (K_blk = {k_blk:e})"))
    };
    Ok(BlockCertificate {
        alpha,
        m,
        k_blk,
        passed,
        worst: mmax.1.clone(),
        alpha_witness: amin.2.clone(),
        m_witness: mmax.2.clone(),
        exit_rate,
        entry_rate,
        boundary_samples: exits.len() + entries.len(),
        interior_samples: per.len(),
        reason,
    })
}
