//! `C^r` norms and Fourier tails.

use std::f64::consts::TAU;

use num_complex::Complex64;

use super::{bracket, ActionBox, IntegrablePart, MultiIndex, TrigPoly};
use crate::error::{LabError, Result};

/// How a `C^r` norm is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMethod {
    /// Max of all partials of order `<= r` over a dense sample.
    GridSup,
    /// `Σ_k ‖h_k‖_{C^r} (2π[k])^r`, a rigorous upper bound.
    CoefficientSum,
}

const ANGLE_POINTS: usize = 64;
const MAX_ANGLE_SAMPLES: usize = 1 << 15;

fn halton(i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = i + 1;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 6] = [2, 3, 5, 7, 11, 13];

/// Angle samples over the active coordinates of `(θ, t)`.
fn angle_samples(active: &[usize], total_dims: usize) -> Vec<Vec<f64>> {
    let d = active.len();
    let full = ANGLE_POINTS.checked_pow(d as u32).unwrap_or(usize::MAX);
    if full <= MAX_ANGLE_SAMPLES {
        (0..full)
            .map(|mut idx| {
                let mut x = vec![0.0; total_dims];
                for &a in active {
                    x[a] = (idx % ANGLE_POINTS) as f64 / ANGLE_POINTS as f64;
                    idx /= ANGLE_POINTS;
                }
                x
            })
            .collect()
    } else {
        (0..MAX_ANGLE_SAMPLES)
            .map(|i| {
                let mut x = vec![0.0; total_dims];
                for (j, &a) in active.iter().enumerate() {
                    x[a] = halton(i, PRIMES[j % PRIMES.len()]);
                }
                x
            })
            .collect()
    }
}

/// `C^r` norm of a trigonometric polynomial with actions restricted to `action_box`.
pub fn cr_norm(h: &TrigPoly, r: u32, method: NormMethod, action_box: &ActionBox) -> Result<f64> {
    let n = h.n();
    match method {
        NormMethod::CoefficientSum => {
            let betas: Vec<Vec<u32>> = MultiIndex::all_up_to(n, r)
                .into_iter()
                .filter(|m| m.theta.iter().all(|&x| x == 0) && m.t == 0)
                .map(|m| m.p)
                .collect();
            Ok(h
                .modes()
                .iter()
                .map(|m| {
                    let c = betas
                        .iter()
                        .filter(|b| b.iter().sum::<u32>() <= r)
                        .map(|b| m.coeff.deriv_bound(b, &action_box.lo, &action_box.hi))
                        .fold(0.0, f64::max);
                    c * (TAU * bracket(&m.k) as f64).powi(r as i32)
                })
                .sum())
        }
        NormMethod::GridSup => {
            if r > 4 {
                return Err(LabError::UnsupportedOrder(r as usize));
            }
            let active: Vec<usize> = (0..=n).filter(|&j| h.modes().iter().any(|m| m.k[j] != 0)).collect();
            let p_dep = !h.has_constant_coefficients();
            let alphas: Vec<MultiIndex> = MultiIndex::all_up_to(n, r)
                .into_iter()
                .filter(|a| {
                    (0..n).all(|j| a.theta[j] == 0 || active.contains(&j))
                        && (a.t == 0 || active.contains(&n))
                        && (p_dep || a.p.iter().all(|&x| x == 0))
                })
                .collect();
            let p_samples = if p_dep {
                action_box.grid(if n >= 3 { 3 } else { 5 })
            } else {
                vec![action_box.lo.iter().zip(&action_box.hi).map(|(a, b)| 0.5 * (a + b)).collect()]
            };
            let angles = angle_samples(&active, n + 1);
            let i2pi = Complex64::new(0.0, TAU);
            let factors: Vec<Vec<Complex64>> = alphas
                .iter()
                .map(|a| {
                    h.modes()
                        .iter()
                        .map(|m| {
                            let mut f = Complex64::new(1.0, 0.0);
                            for j in 0..n {
                                f *= (i2pi * m.k[j] as f64).powu(a.theta[j]);
                            }
                            f * (i2pi * m.k[n] as f64).powu(a.t)
                        })
                        .collect()
                })
                .collect();
            let mut best: f64 = 0.0;
            for p in &p_samples {
                let coeffs: Vec<Vec<Complex64>> = alphas
                    .iter()
                    .map(|a| h.modes().iter().map(|m| m.coeff.eval_deriv(p, &a.p)).collect())
                    .collect();
                for ang in &angles {
                    let es: Vec<Complex64> = h
                        .modes()
                        .iter()
                        .map(|m| {
                            let ph: f64 = (0..=n).map(|j| m.k[j] as f64 * ang[j]).sum();
                            Complex64::from_polar(1.0, TAU * ph)
                        })
                        .collect();
                    for (ai, _) in alphas.iter().enumerate() {
                        let mut s = Complex64::new(0.0, 0.0);
                        for mi in 0..es.len() {
                            s += factors[ai][mi] * coeffs[ai][mi] * es[mi];
                        }
                        best = best.max(s.re.abs());
                    }
                }
            }
            Ok(best)
        }
    }
}

/// `C^r` norm of `H₀` over its box.
pub fn cr_norm_h0(h0: &IntegrablePart, r: u32, method: NormMethod) -> Result<f64> {
    let n = h0.n();
    let betas: Vec<Vec<u32>> = MultiIndex::all_up_to(n, r)
        .into_iter()
        .filter(|m| m.theta.iter().all(|&x| x == 0) && m.t == 0)
        .map(|m| m.p)
        .collect();
    let b = h0.action_box();
    match method {
        NormMethod::CoefficientSum => Ok(betas
            .iter()
            .map(|beta| h0.poly().deriv_bound(beta, &b.lo, &b.hi))
            .fold(0.0, f64::max)),
        NormMethod::GridSup => {
            if r > 4 {
                return Err(LabError::UnsupportedOrder(r as usize));
            }
            let mut best: f64 = 0.0;
            for p in b.grid(9) {
                for beta in &betas {
                    best = best.max(h0.deriv_at(&p, beta).abs());
                }
            }
            Ok(best)
        }
    }
}

/// `κ_m = Σ_{k ∈ ℤ^d \ 0} [k]^{−m−1}`, an upper bound including the truncation
/// remainder. Infinite when the series diverges.
pub fn kappa(m: u32, d: usize) -> f64 {
    if (m as usize) + 1 <= d {
        return f64::INFINITY;
    }
    const J: usize = 20_000;
    let di = d as i32;
    let mut s = 0.0;
    for j in 1..=J {
        let jf = j as f64;
        let shell = (2.0 * jf + 1.0).powi(di) - (2.0 * jf - 1.0).powi(di);
        s += shell * jf.powi(-(m as i32) - 1);
    }
    let c = 2.0 * d as f64 * 3f64.powi(di - 1);
    let e = m as f64 + 1.0 - d as f64;
    s + c * (J as f64).powf(-e) / e
}

/// Split `H = low + tail` at `[k] = K` with the Fourier-tail bound.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub low: TrigPoly,
    pub tail: TrigPoly,
    /// `κ_m K^{m−r+1} ‖H‖_{C^r}` (C⁰ tail estimate).
    pub tail_bound: f64,
    pub kappa: f64,
    pub m: u32,
    pub norm_r: f64,
}

impl TrigPoly {
    /// Splits off the modes with `[k] > K`.
    pub fn tail_truncate(&self, k_max: i64, action_box: &ActionBox) -> Result<Truncation> {
        if k_max < 1 {
            return Err(LabError::Precondition("truncation order must be >= 1".into()));
        }
        let low = self.filter(|k| bracket(k) <= k_max);
        let tail = self.filter(|k| bracket(k) > k_max);
        let r = self.smoothness();
        let d = self.n() + 1;
        let m = d as u32;
        let method = if r <= 4 { NormMethod::GridSup } else { NormMethod::CoefficientSum };
        let norm_r = cr_norm(self, r, method, action_box)?;
        let (kap, bound) = if r < m + 1 {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let kap = kappa(m, d);
            (kap, kap * (k_max as f64).powi(m as i32 - r as i32 + 1) * norm_r)
        };
        Ok(Truncation { low, tail, tail_bound: bound, kappa: kap, m, norm_r })
    }
}
