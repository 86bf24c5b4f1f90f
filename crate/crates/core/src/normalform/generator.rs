//! Solution of the cohomological equation with smooth cutoffs.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use super::cutoff::bump_jet;
use crate::model::{bracket, lex_positive, IntegrablePart, Local, Mode, PhaseFunction, TrigPoly, MAX_N};

/// `(K, β, ε)` of the construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffParams {
    pub k_max: i64,
    pub beta: f64,
    pub eps: f64,
}

impl CutoffParams {
    /// Width `βε^{1/4}` of the resonant zones.
    pub fn width(&self) -> f64 {
        self.beta * self.eps.powf(0.25)
    }
}

/// `k·(∂H₀(p), 1)` and its `p`-gradient.
fn small_divisor(h0: &IntegrablePart, k: &[i64], p: &[f64]) -> (f64, [f64; MAX_N]) {
    let n = h0.n();
    let (_, g, h) = h0.poly().jet2(p);
    let mut w = k[n] as f64;
    let mut dw = [0.0; MAX_N];
    for i in 0..n {
        w += k[i] as f64 * g[i].re;
        for j in 0..n {
            dw[j] += k[i] as f64 * h[i][j].re;
        }
    }
    (w, dw)
}

/// `ρ_k(p) = ρ(k·ω̃ / (βε^{1/4}[k]))`.
pub fn rho_k(h0: &IntegrablePart, k: &[i64], p: &[f64], params: &CutoffParams) -> f64 {
    let (w, _) = small_divisor(h0, k, p);
    bump_jet(w / (params.width() * bracket(k) as f64)).value()
}

/// Generator `G = Σ (1−ρ_k) h_k /(2πi k·ω̃) e^{2πi k·(θ,t)}` over `0 < [k] ≤ K`.
#[derive(Clone, Debug)]
pub struct Generator {
    h0: IntegrablePart,
    params: CutoffParams,
    modes: Vec<Mode>,
    dropped: Vec<Vec<i64>>,
}

/// Grid points per action dimension used to decide that a cutoff is identically 1.
fn absence_grid(n: usize) -> usize {
    match n {
        1 => 257,
        2 => 65,
        3 => 17,
        _ => 9,
    }
}

impl Generator {
    pub fn build(h0: &IntegrablePart, h1: &TrigPoly, params: CutoffParams) -> Generator {
        let n = h0.n();
        let grid = h0.action_box().grid(absence_grid(n));
        let mut modes = Vec::new();
        let mut dropped = Vec::new();
        for (m, _) in h1.half_modes() {
            if !lex_positive(&m.k) || bracket(&m.k) > params.k_max {
                continue;
            }
            if grid.iter().all(|p| rho_k(h0, &m.k, p, &params) == 1.0) {
                dropped.push(m.k.clone());
            } else {
                modes.push(m.clone());
            }
        }
        Generator { h0: h0.clone(), params, modes, dropped }
    }

    pub fn params(&self) -> CutoffParams {
        self.params
    }

    /// Modes `k ⪰ 0` carried by the generator.
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Modes whose cutoff is 1 on the whole action box.
    pub fn dropped(&self) -> &[Vec<i64>] {
        &self.dropped
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    /// Coefficient `g_k(p)` and its gradient.
    pub fn coefficient(&self, k: &[i64], coeff: &crate::model::Poly, p: &[f64]) -> (Complex64, [Complex64; MAX_N]) {
        let n = self.h0.n();
        let zero = (Complex64::new(0.0, 0.0), [Complex64::new(0.0, 0.0); MAX_N]);
        let (w, dw) = small_divisor(&self.h0, k, p);
        let scale = self.params.width() * bracket(k) as f64;
        let rj = bump_jet(w / scale).derivatives();
        let (rho, drho) = (rj[0], rj[1] / scale);
        if rho == 1.0 {
            return zero;
        }
        let (hv, hg, _) = coeff.jet2(p);
        let den = Complex64::new(0.0, TAU * w);
        let g = hv * (1.0 - rho) / den;
        let mut grad = [Complex64::new(0.0, 0.0); MAX_N];
        for j in 0..n {
            grad[j] = (hg[j] * (1.0 - rho) - hv * drho * dw[j]) / den - g * dw[j] / w;
        }
        (g, grad)
    }
}

impl PhaseFunction for Generator {
    fn dim(&self) -> usize {
        self.h0.n()
    }

    /// Exact first derivatives; second `θ`-`θ` and `θ`-`p` blocks exact, `p`-`p`
    /// block by central differences.
    fn jet(&self, t: f64, theta: &[f64], p: &[f64], order: u8) -> Local {
        let n = self.h0.n();
        let mut l = Local::zero(n);
        for m in &self.modes {
            let (g, grad) = self.coefficient(&m.k, &m.coeff, p);
            if g == Complex64::new(0.0, 0.0) && grad.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let ph = TAU * (m.k[n] as f64 * t + (0..n).map(|j| m.k[j] as f64 * theta[j]).sum::<f64>());
            let e = Complex64::new(ph.cos(), ph.sin());
            let a = g * e;
            l.value += 2.0 * a.re;
            if order == 0 {
                continue;
            }
            l.d_t -= 2.0 * TAU * m.k[n] as f64 * a.im;
            for i in 0..n {
                let tk = TAU * m.k[i] as f64;
                l.d_theta[i] -= 2.0 * tk * a.im;
                let gi = grad[i] * e;
                l.d_p[i] += 2.0 * gi.re;
                if order >= 2 {
                    for j in 0..n {
                        l.hess[i][j] -= 2.0 * tk * TAU * m.k[j] as f64 * a.re;
                        let gj = grad[j] * e;
                        l.hess[i][n + j] -= 2.0 * tk * gj.im;
                        l.hess[n + j][i] -= 2.0 * tk * gj.im;
                    }
                }
            }
        }
        if order >= 2 {
            let h = 1e-6;
            let mut q = p.to_vec();
            for j in 0..n {
                q[j] = p[j] + h;
                let up = self.jet(t, theta, &q, 1);
                q[j] = p[j] - h;
                let dn = self.jet(t, theta, &q, 1);
                q[j] = p[j];
                for i in 0..n {
                    l.hess[n + i][n + j] = (up.d_p[i] - dn.d_p[i]) / (2.0 * h);
                }
            }
        }
        l
    }
}

/// `R₁ = Σ_{[k] ≤ K} ρ_k h_k e^{2πi k·(θ,t)}`, the part of `H₁` left in place.
#[derive(Clone, Debug)]
pub struct ResonantPart {
    h0: IntegrablePart,
    h1: TrigPoly,
    params: CutoffParams,
}

impl ResonantPart {
    pub fn new(h0: &IntegrablePart, h1: &TrigPoly, params: CutoffParams) -> Self {
        ResonantPart { h0: h0.clone(), h1: h1.filter(|k| bracket(k) <= params.k_max), params }
    }

    pub fn value(&self, t: f64, theta: &[f64], p: &[f64]) -> f64 {
        let n = self.h0.n();
        let mut v = 0.0;
        for (m, w) in self.h1.half_modes() {
            let rho = if m.k.iter().all(|&x| x == 0) { 1.0 } else { rho_k(&self.h0, &m.k, p, &self.params) };
            if rho == 0.0 {
                continue;
            }
            let ph = TAU * (m.k[n] as f64 * t + (0..n).map(|j| m.k[j] as f64 * theta[j]).sum::<f64>());
            v += w * rho * (m.coeff.eval(p) * Complex64::new(ph.cos(), ph.sin())).re;
        }
        v
    }
}
