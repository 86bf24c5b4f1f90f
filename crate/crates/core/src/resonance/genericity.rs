//! Maxima of the averaged potential along the resonance and the
//! nondegeneracy conditions built from them.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{p_star_slope, solve_p_star, CurvePoint};
use crate::error::{LabError, Result};
use crate::model::{cr_norm, small, ActionBox, IntegrablePart, NormMethod, PhaseFunction, TrigPoly, MAX_N};

#[derive(Clone, Debug, Serialize)]
pub struct GenericityConfig {
    /// Seed points per slow angle.
    pub grid: usize,
    /// Values closer than this count as tied.
    pub tie_tol: f64,
    /// Width to which bifurcation points are refined.
    pub bif_tol: f64,
    /// Largest jump of a branch between neighbouring samples.
    pub match_radius: f64,
    /// Samples closer than this to a bifurcation are left out of the single-peak constant.
    pub bif_window: f64,
    /// Eigenvalues of `−∂²Z` below this (relative to `‖Z‖_{C³}`) are degenerate.
    pub degeneracy_tol: f64,
}

impl Default for GenericityConfig {
    fn default() -> Self {
        GenericityConfig {
            grid: 256,
            tie_tol: 1e-9,
            bif_tol: 1e-10,
            match_radius: 0.1,
            bif_window: 0.05,
            degeneracy_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchSample {
    pub pf: f64,
    pub theta: Vec<f64>,
    pub value: f64,
    /// Extreme eigenvalues of `−∂²_{θ^sθ^s}Z`, unscaled.
    pub min_eig: f64,
    pub max_eig: f64,
    /// Total derivative of the maximum value along the resonance.
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Branch {
    pub id: usize,
    pub samples: Vec<BranchSample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Bifurcation {
    pub pf: f64,
    pub from: usize,
    pub to: usize,
    /// `|d/dp^f (Z(θ_from) − Z(θ_to))|`, unscaled.
    pub gap: f64,
    pub transversal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GenericityReport {
    /// `‖Z‖_{C³}` near the resonance; scaled quantities are divided by it.
    pub scale: f64,
    pub lambda_raw: f64,
    pub lambda: f64,
    pub upper_raw: f64,
    pub upper: f64,
    /// Squared-distance constant of the single-peak condition, unscaled.
    pub b_g1_raw: f64,
    /// First-power variant of the same condition, unscaled.
    pub b_g1_linear_raw: f64,
    /// Two-peak constant at the bifurcations, unscaled.
    pub b_g2_raw: f64,
    /// `min(b_g1, b_g2)`, scaled and capped at `0.99 λ/4`.
    pub b: f64,
    pub branches: Vec<Branch>,
    pub bifurcations: Vec<Bifurcation>,
    /// Branch carrying the global maximum at each sample.
    pub global: Vec<(f64, usize)>,
    pub g0: bool,
    pub g1: bool,
    pub g2: bool,
    pub t0: bool,
    pub t1: bool,
    pub t2: bool,
    pub g1_prime: bool,
    pub g2_prime: bool,
    pub notes: Vec<String>,
}

impl GenericityReport {
    pub fn passed(&self) -> bool {
        self.g0 && self.g1 && self.g2 && self.g1_prime && self.g2_prime
    }

    /// Rows `(p^f, branch, θ^s…, value, min eigenvalue)`.
    pub fn branch_rows(&self) -> Vec<(f64, usize, Vec<f64>, f64, f64)> {
        let mut rows: Vec<_> = self
            .branches
            .iter()
            .flat_map(|b| b.samples.iter().map(move |s| (s.pf, b.id, s.theta.clone(), s.value, s.min_eig)))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        rows
    }
}

/// `Z` restricted to a fixed action: `Σ c_k e^{2πi k_s·θ^s}`.
struct Slice {
    ns: usize,
    modes: Vec<(Vec<f64>, Complex64)>,
}

impl Slice {
    fn new(z: &TrigPoly, p: &[f64]) -> Self {
        let ns = z.n() - 1;
        let modes = z
            .modes()
            .iter()
            .map(|m| (m.k[..ns].iter().map(|&x| x as f64).collect(), m.coeff.eval(p)))
            .collect();
        Slice { ns, modes }
    }

    fn value(&self, th: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|(k, c)| {
                let ph: f64 = TAU * k.iter().zip(th).map(|(a, b)| a * b).sum::<f64>();
                (c * Complex64::new(ph.cos(), ph.sin())).re
            })
            .sum()
    }

    /// Value, gradient and Hessian in `θ^s`.
    fn jet(&self, th: &[f64]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let mut v = 0.0;
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for (k, c) in &self.modes {
            let ph: f64 = TAU * k.iter().zip(th).map(|(a, b)| a * b).sum::<f64>();
            let a = c * Complex64::new(ph.cos(), ph.sin());
            v += a.re;
            for i in 0..self.ns {
                g[i] -= TAU * k[i] * a.im;
                for j in 0..self.ns {
                    h[i][j] -= TAU * TAU * k[i] * k[j] * a.re;
                }
            }
        }
        (v, g, h)
    }
}

fn eig_sym(h: &[[f64; 2]; 2], ns: usize) -> (f64, f64) {
    if ns == 1 {
        return (h[0][0], h[0][0]);
    }
    let tr = 0.5 * (h[0][0] + h[1][1]);
    let d = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[1][0]).max(0.0).sqrt();
    (tr - d, tr + d)
}

fn torus_dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = crate::model::wrap_centered(x - y);
            d * d
        })
        .sum()
}

#[derive(Clone, Debug)]
struct Max {
    theta: Vec<f64>,
    value: f64,
    min_eig: f64,
    max_eig: f64,
}

fn polish(s: &Slice, start: &[f64], max_step: f64) -> Max {
    let ns = s.ns;
    let mut th = start.to_vec();
    for _ in 0..40 {
        let (_, g, h) = s.jet(&th);
        let gn = g[..ns].iter().map(|x| x.abs()).fold(0.0, f64::max);
        if gn < 1e-14 {
            break;
        }
        let mut a = [[0.0; MAX_N]; MAX_N];
        let mut b = [0.0; MAX_N];
        for i in 0..ns {
            b[i] = -g[i];
            for j in 0..ns {
                a[i][j] = h[i][j];
            }
        }
        let (_, hi) = eig_sym(&h, ns);
        if hi >= 0.0 || !small::solve(ns, &mut a, &mut b) {
            break;
        }
        let step = b[..ns].iter().map(|x| x.abs()).fold(0.0, f64::max);
        if step > max_step {
            break;
        }
        for i in 0..ns {
            th[i] += b[i];
        }
        if step < 1e-15 {
            break;
        }
    }
    for x in th.iter_mut() {
        *x = crate::model::wrap(*x);
    }
    let (v, _, h) = s.jet(&th);
    let (lo, hi) = eig_sym(&h, ns);
    Max { theta: th, value: v, min_eig: -hi, max_eig: -lo }
}

struct SampleMaxima {
    maxima: Vec<Max>,
    grid: Vec<(Vec<f64>, f64)>,
}

const MAX_PER_SAMPLE: usize = 64;

fn sample_maxima(s: &Slice, m: usize) -> SampleMaxima {
    let ns = s.ns;
    let total = m.pow(ns as u32);
    let coords = |idx: usize| -> Vec<f64> {
        let mut i = idx;
        (0..ns)
            .map(|_| {
                let j = i % m;
                i /= m;
                j as f64 / m as f64
            })
            .collect()
    };
    let vals: Vec<f64> = (0..total).map(|i| s.value(&coords(i))).collect();
    let neighbours = |idx: usize| -> Vec<usize> {
        let mut digits: Vec<usize> = (0..ns).map(|d| (idx / m.pow(d as u32)) % m).collect();
        let mut out = Vec::new();
        let offs: Vec<Vec<i64>> = if ns == 1 {
            vec![vec![-1], vec![1]]
        } else {
            let mut v = Vec::new();
            for a in -1..=1 {
                for b in -1..=1 {
                    if a != 0 || b != 0 {
                        v.push(vec![a, b]);
                    }
                }
            }
            v
        };
        for o in offs {
            let mut id = 0;
            for d in (0..ns).rev() {
                let x = (digits[d] as i64 + o[d]).rem_euclid(m as i64) as usize;
                id = id * m + x;
            }
            out.push(id);
        }
        digits.clear();
        out
    };
    let mut seeds: Vec<usize> = (0..total).filter(|&i| neighbours(i).iter().all(|&j| vals[i] >= vals[j])).collect();
    seeds.sort_by(|a, b| vals[*b].total_cmp(&vals[*a]));
    seeds.truncate(MAX_PER_SAMPLE);
    let mut maxima: Vec<Max> = Vec::new();
    for i in seeds {
        let mx = polish(s, &coords(i), 2.0 / m as f64);
        if maxima.iter().all(|q| torus_dist2(&q.theta, &mx.theta) > 1e-12) {
            maxima.push(mx);
        }
    }
    maxima.sort_by(|a, b| b.value.total_cmp(&a.value));
    let grid = (0..total).map(|i| (coords(i), vals[i])).collect();
    SampleMaxima { maxima, grid }
}

/// Total `p^f`-derivative of `Z(θ, p_*(p^f))` at a critical point in `θ^s`.
fn value_slope(z: &TrigPoly, h0: &IntegrablePart, c: &CurvePoint, theta_s: &[f64]) -> f64 {
    let n = z.n();
    let p = c.action();
    let mut th = theta_s.to_vec();
    th.push(0.0);
    let l = z.jet(0.0, &th, &p, 1);
    let slope = p_star_slope(h0, c);
    l.d_p[n - 1] + (0..n - 1).map(|i| l.d_p[i] * slope[i]).sum::<f64>()
}

/// `min (Z_max − Z(θ)) / d(θ)^e` over the grid, `d` the distance to the nearest listed peak.
fn peak_constant(grid: &[(Vec<f64>, f64)], top: f64, peaks: &[&[f64]], power: f64) -> f64 {
    let mut best = f64::INFINITY;
    for (th, v) in grid {
        let d2 = peaks.iter().map(|q| torus_dist2(th, q)).fold(f64::INFINITY, f64::min);
        if d2 < 1e-12 {
            continue;
        }
        best = best.min((top - v) / d2.powf(power / 2.0));
    }
    best
}

/// Finds and continues the local maxima of `Z(·, p_*(p^f))` over the sampled
/// resonance, locates the switches of the global maximum and evaluates the
/// nondegeneracy conditions.
pub fn check_genericity(
    z: &TrigPoly,
    h0: &IntegrablePart,
    curve: &[CurvePoint],
    cfg: &GenericityConfig,
) -> Result<GenericityReport> {
    let n = z.n();
    if n < 2 || n > 3 {
        return Err(LabError::Dimension(format!("exhaustive maxima search needs 1 or 2 slow angles, got {}", n - 1)));
    }
    if curve.is_empty() {
        return Err(LabError::Precondition("no resonance samples".into()));
    }
    let ns = n - 1;
    let mut notes = Vec::new();
    let scale = {
        let lo: Vec<f64> = (0..n).map(|i| curve.iter().map(|c| c.action()[i]).fold(f64::INFINITY, f64::min)).collect();
        let hi: Vec<f64> = (0..n).map(|i| curve.iter().map(|c| c.action()[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
        cr_norm(z, 3, NormMethod::GridSup, &ActionBox { lo, hi })?
    };
    let slow_dependent = z.modes().iter().any(|m| m.k[..ns].iter().any(|&x| x != 0));
    if !slow_dependent || scale == 0.0 {
        notes.push("averaged potential does not depend on the slow angles".into());
        return Ok(GenericityReport {
            scale,
            lambda_raw: 0.0,
            lambda: 0.0,
            upper_raw: 0.0,
            upper: 0.0,
            b_g1_raw: 0.0,
            b_g1_linear_raw: 0.0,
            b_g2_raw: 0.0,
            b: 0.0,
            branches: vec![],
            bifurcations: vec![],
            global: vec![],
            g0: false,
            g1: false,
            g2: false,
            t0: false,
            t1: false,
            t2: false,
            g1_prime: false,
            g2_prime: false,
            notes,
        });
    }
    let per_sample: Vec<SampleMaxima> = curve
        .par_iter()
        .map(|c| sample_maxima(&Slice::new(z, &c.action()), cfg.grid))
        .collect();

    // continuation
    let mut branches: Vec<Branch> = Vec::new();
    let mut last: Vec<Option<Vec<f64>>> = Vec::new();
    let mut owner: Vec<Vec<usize>> = Vec::new();
    for (i, sm) in per_sample.iter().enumerate() {
        let mut claimed = vec![false; branches.len()];
        let mut ids = Vec::with_capacity(sm.maxima.len());
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (mi, mx) in sm.maxima.iter().enumerate() {
            for (bi, l) in last.iter().enumerate() {
                if let Some(th) = l {
                    let d = torus_dist2(th, &mx.theta).sqrt();
                    if d <= cfg.match_radius {
                        pairs.push((d, mi, bi));
                    }
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut assigned = vec![None; sm.maxima.len()];
        for (_, mi, bi) in pairs {
            if assigned[mi].is_none() && !claimed[bi] {
                assigned[mi] = Some(bi);
                claimed[bi] = true;
            }
        }
        for (mi, mx) in sm.maxima.iter().enumerate() {
            let bi = match assigned[mi] {
                Some(b) => b,
                None => {
                    branches.push(Branch { id: branches.len(), samples: vec![] });
                    last.push(None);
                    claimed.push(true);
                    branches.len() - 1
                }
            };
            let slope = value_slope(z, h0, &curve[i], &mx.theta);
            branches[bi].samples.push(BranchSample {
                pf: curve[i].pf,
                theta: mx.theta.clone(),
                value: mx.value,
                min_eig: mx.min_eig,
                max_eig: mx.max_eig,
                slope,
            });
            ids.push(bi);
        }
        for (bi, l) in last.iter_mut().enumerate() {
            *l = if claimed[bi] { branches[bi].samples.last().map(|s| s.theta.clone()) } else { None };
        }
        owner.push(ids);
    }

    // global maximum and ties
    let mut global: Vec<(f64, usize)> = Vec::new();
    let mut t1 = true;
    let mut tie_samples: Vec<usize> = Vec::new();
    let mut prev: Option<usize> = None;
    for (i, sm) in per_sample.iter().enumerate() {
        let top = sm.maxima[0].value;
        let tied: Vec<usize> = (0..sm.maxima.len()).filter(|&j| sm.maxima[j].value >= top - cfg.tie_tol).collect();
        if tied.len() > 2 {
            t1 = false;
            notes.push(format!("{} tied global maxima at p^f = {}", tied.len(), curve[i].pf));
        }
        if tied.len() > 1 {
            tie_samples.push(i);
        }
        let mut g = owner[i][tied[0]];
        if let Some(pb) = prev {
            if tied.iter().any(|&j| owner[i][j] == pb) {
                g = pb;
            }
        }
        global.push((curve[i].pf, g));
        prev = Some(g);
    }

    // bifurcations
    let mut bifurcations = Vec::new();
    let mut g1 = true;
    for i in 1..global.len() {
        let (a, b) = (global[i - 1].1, global[i].1);
        if a == b {
            continue;
        }
        let find = |br: usize, k: usize| owner[k].iter().position(|&x| x == br).map(|j| per_sample[k].maxima[j].theta.clone());
        let (ta, tb) = match (find(a, i - 1), find(b, i - 1)) {
            (Some(x), Some(y)) if find(a, i).is_some() => (x, y),
            _ => {
                g1 = false;
                notes.push(format!("global maximum jumps without a crossing near p^f = {}", curve[i].pf));
                continue;
            }
        };
        let bif = refine_bifurcation(z, h0, &curve[i - 1], curve[i].pf, &ta, &tb, cfg)?;
        bifurcations.push(Bifurcation {
            pf: bif.0,
            from: a,
            to: b,
            gap: bif.1,
            transversal: bif.1 > cfg.degeneracy_tol * scale,
        });
    }
    for &i in &tie_samples {
        let pf = curve[i].pf;
        let h = if curve.len() > 1 { (curve[1].pf - curve[0].pf).abs() } else { 0.0 };
        if !bifurcations.iter().any(|b| (b.pf - pf).abs() <= 1.5 * h + cfg.bif_tol) {
            g1 = false;
        }
    }
    if tie_samples.len() > 2 * bifurcations.len() + 2 {
        g1 = false;
        notes.push("global maximum tied on an extended range".into());
    }

    // spectral window over the global branches
    let mut lambda_raw = f64::INFINITY;
    let mut upper_raw: f64 = 0.0;
    let mut t0 = true;
    for (i, sm) in per_sample.iter().enumerate() {
        let top = sm.maxima[0].value;
        for (j, mx) in sm.maxima.iter().enumerate() {
            if mx.min_eig <= cfg.degeneracy_tol * scale {
                t0 = false;
            }
            if mx.value >= top - cfg.tie_tol || owner[i][j] == global[i].1 {
                lambda_raw = lambda_raw.min(mx.min_eig);
                upper_raw = upper_raw.max(mx.max_eig);
            }
        }
    }
    let g0 = lambda_raw > cfg.degeneracy_tol * scale;

    // peak constants
    let mut b_g1 = f64::INFINITY;
    let mut b_g1_lin = f64::INFINITY;
    for (i, sm) in per_sample.iter().enumerate() {
        let pf = curve[i].pf;
        if bifurcations.iter().any(|b| (b.pf - pf).abs() < cfg.bif_window) {
            continue;
        }
        let top = &sm.maxima[0];
        b_g1 = b_g1.min(peak_constant(&sm.grid, top.value, &[&top.theta], 2.0));
        b_g1_lin = b_g1_lin.min(peak_constant(&sm.grid, top.value, &[&top.theta], 1.0));
    }
    let mut b_g2 = f64::INFINITY;
    for bif in &bifurcations {
        let c = solve_p_star(h0, bif.pf, Some(&curve[0].ps))?;
        let s = Slice::new(z, &c.action());
        let sm = sample_maxima(&s, cfg.grid);
        if sm.maxima.len() < 2 {
            continue;
        }
        let top = sm.maxima[0].value;
        let peaks: Vec<&[f64]> = sm.maxima[..2].iter().map(|m| m.theta.as_slice()).collect();
        b_g2 = b_g2.min(peak_constant(&sm.grid, top, &peaks, 2.0));
    }
    if !b_g1.is_finite() {
        b_g1 = 0.0;
        notes.push("every sample lies inside a bifurcation window".into());
    }
    let b_raw = b_g1.min(b_g2);
    let lambda = lambda_raw / scale;
    let b = (b_raw / scale).min(0.99 * lambda / 4.0);
    let g2 = bifurcations.iter().all(|b| b.transversal);
    Ok(GenericityReport {
        scale,
        lambda_raw,
        lambda,
        upper_raw,
        upper: upper_raw / scale,
        b_g1_raw: b_g1,
        b_g1_linear_raw: if b_g1_lin.is_finite() { b_g1_lin } else { 0.0 },
        b_g2_raw: if b_g2.is_finite() { b_g2 } else { f64::NAN },
        b,
        branches,
        bifurcations,
        global,
        g0,
        g1,
        g2,
        t0,
        t1,
        t2: g2,
        g1_prime: b_g1 > 0.0,
        g2_prime: !b_g2.is_finite() || b_g2 > 0.0,
        notes,
    })
}

/// Bisection on the difference of two continued maxima; returns
/// `(p^f, |slope difference|)`.
fn refine_bifurcation(
    z: &TrigPoly,
    h0: &IntegrablePart,
    left: &CurvePoint,
    right_pf: f64,
    ta: &[f64],
    tb: &[f64],
    cfg: &GenericityConfig,
) -> Result<(f64, f64)> {
    let step = 2.0 / cfg.grid as f64;
    let eval = |pf: f64, ta: &[f64], tb: &[f64]| -> Result<(f64, CurvePoint, Max, Max)> {
        let c = solve_p_star(h0, pf, Some(&left.ps))?;
        let s = Slice::new(z, &c.action());
        let ma = polish(&s, ta, step);
        let mb = polish(&s, tb, step);
        Ok((ma.value - mb.value, c, ma, mb))
    };
    let (mut lo, mut hi) = (left.pf, right_pf);
    let (flo, _, mut a, mut b) = eval(lo, ta, tb)?;
    let sign_lo = flo >= 0.0;
    while (hi - lo).abs() > cfg.bif_tol {
        let mid = 0.5 * (lo + hi);
        let (f, _, ma, mb) = eval(mid, &a.theta, &b.theta)?;
        a = ma;
        b = mb;
        if (f >= 0.0) == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pf = 0.5 * (lo + hi);
    let (_, c, ma, mb) = eval(pf, &a.theta, &b.theta)?;
    let gap = (value_slope(z, h0, &c, &ma.theta) - value_slope(z, h0, &c, &mb.theta)).abs();
    Ok((pf, gap))
}
