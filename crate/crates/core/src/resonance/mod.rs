//! The resonance `∂_{p^s}H₀ = 0`, its punctures and the non-resonant domain.

mod genericity;

pub use genericity::{check_genericity, Bifurcation, Branch, BranchSample, GenericityConfig, GenericityReport};

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::model::{small, IntegrablePart, MAX_N};

/// Closed or open interval of fast actions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, closed: true }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, closed: false }
    }

    pub fn contains(&self, x: f64) -> bool {
        if self.closed {
            x >= self.lo && x <= self.hi
        } else {
            x > self.lo && x < self.hi
        }
    }
}

/// Point `p_*(p^f)` of the resonance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub pf: f64,
    pub ps: Vec<f64>,
    pub residual: f64,
}

impl CurvePoint {
    /// Full action vector `(p^s, p^f)`.
    pub fn action(&self) -> Vec<f64> {
        let mut p = self.ps.clone();
        p.push(self.pf);
        p
    }
}

const NEWTON_TOL: f64 = 1e-12;
const ACCEPT_TOL: f64 = 1e-10;

/// Solves `∂_{p^s}H₀(p^s, p^f) = 0` by Newton's method.
pub fn solve_p_star(h0: &IntegrablePart, pf: f64, guess: Option<&[f64]>) -> Result<CurvePoint> {
    let n = h0.n();
    let ns = n - 1;
    let mut p = vec![0.0; n];
    if let Some(g) = guess {
        p[..ns].copy_from_slice(&g[..ns]);
    } else {
        let b = h0.action_box();
        for i in 0..ns {
            p[i] = 0.5 * (b.lo[i] + b.hi[i]);
        }
    }
    p[ns] = pf;
    if ns == 0 {
        return Ok(CurvePoint { pf, ps: vec![], residual: 0.0 });
    }
    let mut res = f64::INFINITY;
    for _ in 0..60 {
        let (_, g, h) = h0.poly().jet2(&p);
        res = (0..ns).map(|i| g[i].re.abs()).fold(0.0, f64::max);
        if res <= NEWTON_TOL {
            break;
        }
        let mut a = [[0.0; MAX_N]; MAX_N];
        let mut b = [0.0; MAX_N];
        for i in 0..ns {
            b[i] = -g[i].re;
            for j in 0..ns {
                a[i][j] = h[i][j].re;
            }
        }
        if !small::solve(ns, &mut a, &mut b) {
            return Err(LabError::Geometry(format!("singular slow Hessian at p^f = {pf}")));
        }
        for i in 0..ns {
            p[i] += b[i];
        }
        if !p.iter().all(|x| x.is_finite()) {
            break;
        }
    }
    if !(res <= ACCEPT_TOL) {
        return Err(LabError::Geometry(format!("Newton for p^s_* diverged at p^f = {pf} (residual {res:e})")));
    }
    if !h0.action_box().contains(&p) {
        return Err(LabError::Geometry(format!("resonance leaves the action box at p^f = {pf}")));
    }
    Ok(CurvePoint { pf, ps: p[..ns].to_vec(), residual: res })
}

/// Fast frequency `ω_f = ∂_{p^f}H₀` along the resonance.
pub fn fast_frequency(h0: &IntegrablePart, c: &CurvePoint) -> f64 {
    let p = c.action();
    h0.deriv_at(&p, &unit(h0.n(), h0.n() - 1))
}

fn unit(n: usize, i: usize) -> Vec<u32> {
    let mut e = vec![0; n];
    e[i] = 1;
    e
}

/// `dp^s_*/dp^f = −(∂²_{p^sp^s}H₀)⁻¹ ∂²_{p^sp^f}H₀`.
pub fn p_star_slope(h0: &IntegrablePart, c: &CurvePoint) -> Vec<f64> {
    let n = h0.n();
    let ns = n - 1;
    let (_, _, h) = h0.poly().jet2(&c.action());
    let mut a = [[0.0; MAX_N]; MAX_N];
    let mut b = [0.0; MAX_N];
    for i in 0..ns {
        b[i] = -h[i][ns].re;
        for j in 0..ns {
            a[i][j] = h[i][j].re;
        }
    }
    small::solve(ns, &mut a, &mut b);
    b[..ns].to_vec()
}

/// Derivative of the fast frequency along the resonance (a Schur complement, positive).
pub fn fast_frequency_slope(h0: &IntegrablePart, c: &CurvePoint) -> f64 {
    let ns = h0.n() - 1;
    let (_, _, h) = h0.poly().jet2(&c.action());
    let s = p_star_slope(h0, c);
    h[ns][ns].re + (0..ns).map(|i| h[ns][i].re * s[i]).sum::<f64>()
}

/// A fast action where `k_n ω_f + l = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Puncture {
    pub pf: f64,
    pub k: i64,
    pub l: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// All punctures of order `K` inside `interval`, sorted, each with its
/// lowest-denominator witness.
pub fn punctures(h0: &IntegrablePart, k_max: i64, interval: Interval) -> Result<Vec<Puncture>> {
    if k_max < 1 {
        return Err(LabError::Precondition("K must be >= 1".into()));
    }
    let a = solve_p_star(h0, interval.lo, None)?;
    let b = solve_p_star(h0, interval.hi, Some(&a.ps))?;
    let (wa, wb) = (fast_frequency(h0, &a), fast_frequency(h0, &b));
    let mut out: Vec<Puncture> = Vec::new();
    for k in 1..=k_max {
        for l in -k_max..=k_max {
            if gcd(k, l) != 1 {
                continue;
            }
            let target = -(l as f64) / k as f64;
            if target < wa.min(wb) || target > wa.max(wb) {
                continue;
            }
            let pf = invert_frequency(h0, target, (interval.lo, &a, wa), (interval.hi, wb))?;
            if interval.contains(pf) {
                out.push(Puncture { pf, k, l });
            }
        }
    }
    out.sort_by(|x, y| x.pf.total_cmp(&y.pf));
    out.dedup_by(|x, y| (x.pf - y.pf).abs() <= 1e-12);
    Ok(out)
}

fn invert_frequency(
    h0: &IntegrablePart,
    target: f64,
    (mut lo, start, wlo): (f64, &CurvePoint, f64),
    (mut hi, whi): (f64, f64),
) -> Result<f64> {
    let increasing = whi >= wlo;
    let mut guess = start.ps.clone();
    for _ in 0..200 {
        if hi - lo <= 1e-13 * (1.0 + lo.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let c = solve_p_star(h0, mid, Some(&guess))?;
        guess = c.ps.clone();
        let w = fast_frequency(h0, &c);
        if (w < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let c = solve_p_star(h0, x, Some(&guess))?;
        let slope = fast_frequency_slope(h0, &c);
        let dx = (fast_frequency(h0, &c) - target) / slope;
        if !dx.is_finite() || dx.abs() > 1e-8 {
            break;
        }
        x -= dx;
    }
    Ok(x)
}

/// Complement of the `3ε^{1/6}`-neighbourhoods of the punctures.
pub fn passage_segments(punctures: &[f64], eps: f64, interval: Interval) -> Result<Vec<(f64, f64)>> {
    if !(eps > 0.0) {
        return Err(LabError::Precondition("epsilon must be positive".into()));
    }
    let r = 3.0 * eps.powf(1.0 / 6.0);
    let mut cuts: Vec<f64> = punctures.to_vec();
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut start = interval.lo;
    for x in cuts {
        let end = x - r;
        if end > start {
            out.push((start, end.min(interval.hi)));
        }
        start = start.max(x + r);
    }
    if interval.hi > start {
        out.push((start, interval.hi));
    }
    Ok(out.into_iter().filter(|(a, b)| b > a).collect())
}

/// Why a point is outside `D(K, s)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum DomainWitness {
    /// `‖∂_{p^s}H₀‖` exceeds `s`.
    SlowFrequency(f64),
    /// `|k^f ω_f + k^t| < 3Ks`.
    Resonance { kf: i64, kt: i64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainCheck {
    pub inside: bool,
    pub witness: Option<DomainWitness>,
}

/// Membership of `p` in the non-resonant domain `D(K, s)`.
pub fn in_domain_d(h0: &IntegrablePart, p: &[f64], k_max: i64, s: f64) -> DomainCheck {
    let n = h0.n();
    let w = h0.frequency(p);
    let slow = w[..n - 1].iter().map(|x| x * x).sum::<f64>().sqrt();
    if slow > s {
        return DomainCheck { inside: false, witness: Some(DomainWitness::SlowFrequency(slow)) };
    }
    let wf = w[n - 1];
    let bound = 3.0 * k_max as f64 * s;
    let mut worst: Option<(f64, i64, i64, i64)> = None;
    for kf in 0..=k_max {
        for kt in -k_max..=k_max {
            if kf == 0 && kt <= 0 {
                continue;
            }
            let v = (kf as f64 * wf + kt as f64).abs();
            if v < bound {
                let ord = kf.max(kt.abs());
                let better = match worst {
                    None => true,
                    Some((bv, _, _, bo)) => v < bv || (v == bv && ord < bo),
                };
                if better {
                    worst = Some((v, kf, kt, ord));
                }
            }
        }
    }
    match worst {
        None => DomainCheck { inside: true, witness: None },
        Some((_, kf, kt, _)) => DomainCheck { inside: false, witness: Some(DomainWitness::Resonance { kf, kt }) },
    }
}

/// Sampled resonance curve with its punctures and passage segments.
#[derive(Clone, Debug, Serialize)]
pub struct ResonanceGeometry {
    pub interval: Interval,
    pub curve: Vec<CurvePoint>,
    pub punctures: Vec<Puncture>,
    pub segments: Vec<(f64, f64)>,
}

impl ResonanceGeometry {
    pub fn build(h0: &IntegrablePart, interval: Interval, samples: usize, k_max: i64, eps: f64) -> Result<Self> {
        let curve = sample_curve(h0, interval.lo, interval.hi, samples)?;
        let punctures = punctures(h0, k_max, interval)?;
        let pts: Vec<f64> = punctures.iter().map(|x| x.pf).collect();
        let segments = passage_segments(&pts, eps, interval)?;
        Ok(ResonanceGeometry { interval, curve, punctures, segments })
    }
}

/// `samples` equally spaced points of the resonance over `[lo, hi]`, by continuation.
pub fn sample_curve(h0: &IntegrablePart, lo: f64, hi: f64, samples: usize) -> Result<Vec<CurvePoint>> {
    let m = samples.max(2);
    let mut out: Vec<CurvePoint> = Vec::with_capacity(m);
    for i in 0..m {
        let pf = lo + (hi - lo) * i as f64 / (m - 1) as f64;
        let guess = out.last().map(|c| c.ps.clone());
        out.push(solve_p_star(h0, pf, guess.as_deref())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
