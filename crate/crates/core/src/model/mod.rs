//! Hamiltonians as finite trigonometric sums with polynomial action coefficients.
//!
//! Angles have period 1 and a mode `k = (k_θ, k_t)` carries the phase
//! `e^{2πi (k_θ·θ + k_t t)}`. The last angle is the fast one, the others are slow.

mod io;
mod legendre;
mod norms;
mod poly;
pub mod small;

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{LabError, Result};

pub use io::{ModelFile, H0File, H1File, ModeFile, BoxFile};
pub use legendre::{legendre, Legendre};
pub use norms::{cr_norm, cr_norm_h0, kappa, NormMethod, Truncation};
pub use poly::Poly;

/// Largest number of degrees of freedom handled by the fixed-size jets.
pub const MAX_N: usize = 4;
pub const MAX_2N: usize = 2 * MAX_N;

/// Reduces an angle to `[0, 1)`.
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed distance to the nearest integer, in `[-½, ½)`.
pub fn wrap_centered(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

/// Point of `𝕋ⁿ × ℝⁿ × 𝕋`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhasePoint {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl PhasePoint {
    pub fn new(theta: Vec<f64>, p: Vec<f64>, t: f64) -> Self {
        let mut x = PhasePoint { theta, p, t };
        x.reduce();
        x
    }

    pub fn reduce(&mut self) {
        for th in &mut self.theta {
            *th = wrap(*th);
        }
        self.t = wrap(self.t);
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Multi-index of a partial derivative in `(θ, p, t)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndex {
    pub theta: Vec<u32>,
    pub p: Vec<u32>,
    pub t: u32,
}

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex { theta: vec![0; n], p: vec![0; n], t: 0 }
    }

    pub fn theta(n: usize, i: usize, k: u32) -> Self {
        let mut m = Self::zero(n);
        m.theta[i] = k;
        m
    }

    pub fn p(n: usize, i: usize, k: u32) -> Self {
        let mut m = Self::zero(n);
        m.p[i] = k;
        m
    }

    pub fn with_theta(mut self, i: usize, k: u32) -> Self {
        self.theta[i] += k;
        self
    }

    pub fn with_p(mut self, i: usize, k: u32) -> Self {
        self.p[i] += k;
        self
    }

    pub fn with_t(mut self, k: u32) -> Self {
        self.t += k;
        self
    }

    pub fn order(&self) -> usize {
        (self.theta.iter().sum::<u32>() + self.p.iter().sum::<u32>() + self.t) as usize
    }

    /// All multi-indices of total order `<= r` in `n` degrees of freedom.
    pub fn all_up_to(n: usize, r: u32) -> Vec<MultiIndex> {
        let nv = 2 * n + 1;
        let mut out = Vec::new();
        let mut cur = vec![0u32; nv];
        fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if i == cur.len() {
                out.push(cur.clone());
                return;
            }
            for k in 0..=left {
                cur[i] = k;
                rec(i + 1, left - k, cur, out);
            }
            cur[i] = 0;
        }
        let mut raw = Vec::new();
        rec(0, r, &mut cur, &mut raw);
        for v in raw {
            out.push(MultiIndex { theta: v[..n].to_vec(), p: v[n..2 * n].to_vec(), t: v[2 * n] });
        }
        out
    }
}

/// Value and derivatives up to second order at one point.
///
/// `hess` is ordered `(θ₁..θₙ, p₁..pₙ)`; the time derivative is first order only.
#[derive(Clone, Copy, Debug)]
pub struct Local {
    pub n: usize,
    pub value: f64,
    pub d_theta: [f64; MAX_N],
    pub d_p: [f64; MAX_N],
    pub d_t: f64,
    pub hess: [[f64; MAX_2N]; MAX_2N],
}

impl Local {
    pub fn zero(n: usize) -> Self {
        Local {
            n,
            value: 0.0,
            d_theta: [0.0; MAX_N],
            d_p: [0.0; MAX_N],
            d_t: 0.0,
            hess: [[0.0; MAX_2N]; MAX_2N],
        }
    }

    pub fn add_scaled(&mut self, other: &Local, s: f64) {
        self.value += s * other.value;
        self.d_t += s * other.d_t;
        for i in 0..MAX_N {
            self.d_theta[i] += s * other.d_theta[i];
            self.d_p[i] += s * other.d_p[i];
        }
        for i in 0..MAX_2N {
            for j in 0..MAX_2N {
                self.hess[i][j] += s * other.hess[i][j];
            }
        }
    }

    /// `∂²/∂p_i∂p_j`.
    pub fn hpp(&self, i: usize, j: usize) -> f64 {
        self.hess[self.n + i][self.n + j]
    }
}

/// Anything that can be differentiated at a phase point: Hamiltonians, generators,
/// coordinate functions.
pub trait PhaseFunction: Send + Sync {
    fn dim(&self) -> usize;

    /// Derivatives up to `order` (0, 1 or 2); higher entries are left at zero.
    fn jet(&self, t: f64, theta: &[f64], p: &[f64], order: u8) -> Local;

    fn value(&self, t: f64, theta: &[f64], p: &[f64]) -> f64 {
        self.jet(t, theta, p, 0).value
    }
}

/// Canonical coordinate functions, used to test brackets.
#[derive(Clone, Copy, Debug)]
pub enum Coordinate {
    Theta(usize),
    P(usize),
}

pub struct CoordinateFunction {
    pub n: usize,
    pub which: Coordinate,
}

impl PhaseFunction for CoordinateFunction {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, _t: f64, theta: &[f64], p: &[f64], _order: u8) -> Local {
        let mut l = Local::zero(self.n);
        match self.which {
            Coordinate::Theta(i) => {
                l.value = theta[i];
                l.d_theta[i] = 1.0;
            }
            Coordinate::P(i) => {
                l.value = p[i];
                l.d_p[i] = 1.0;
            }
        }
        l
    }
}

/// `{F, G} = Σ ∂_θF·∂_pG − ∂_pF·∂_θG`.
pub fn poisson_bracket(f: &dyn PhaseFunction, g: &dyn PhaseFunction, x: &PhasePoint) -> f64 {
    let a = f.jet(x.t, &x.theta, &x.p, 1);
    let b = g.jet(x.t, &x.theta, &x.p, 1);
    (0..x.dim()).map(|i| a.d_theta[i] * b.d_p[i] - a.d_p[i] * b.d_theta[i]).sum()
}

/// Product of closed intervals in action space.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ActionBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ActionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(LabError::Model(format!("bad action box {lo:?} {hi:?}")));
        }
        Ok(ActionBox { lo, hi })
    }

    pub fn cube(n: usize, r: f64) -> Self {
        ActionBox { lo: vec![-r; n], hi: vec![r; n] }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| *x >= *a && *x <= *b)
    }

    pub fn check(&self, p: &[f64]) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(LabError::Domain { p: p.to_vec(), lo: self.lo.clone(), hi: self.hi.clone() })
        }
    }

    /// Tensor grid with `m` points per side (endpoints included).
    pub fn grid(&self, m: usize) -> Vec<Vec<f64>> {
        let n = self.lo.len();
        let m = m.max(2);
        let total = m.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                (0..n)
                    .map(|i| {
                        let j = idx % m;
                        idx /= m;
                        self.lo[i] + (self.hi[i] - self.lo[i]) * j as f64 / (m - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// Convex polynomial `H₀(p)`.
#[derive(Clone, Debug)]
pub struct IntegrablePart {
    poly: Poly,
    convexity: f64,
    action_box: ActionBox,
}

impl IntegrablePart {
    pub fn new(poly: Poly, convexity: f64, action_box: ActionBox) -> Result<Self> {
        if poly.terms().iter().any(|(_, c)| c.im != 0.0) {
            return Err(LabError::Model("H0 must have real coefficients".into()));
        }
        if !(convexity >= 1.0) {
            return Err(LabError::Model(format!("convexity constant {convexity} must be >= 1")));
        }
        if poly.nvars() != action_box.lo.len() {
            return Err(LabError::Model("H0 and box dimensions differ".into()));
        }
        if poly.nvars() > MAX_N {
            return Err(LabError::Model(format!("at most {MAX_N} degrees of freedom")));
        }
        Ok(IntegrablePart { poly, convexity, action_box })
    }

    /// `½‖p‖²` on the cube `[-r, r]ⁿ`.
    pub fn quadratic(n: usize, r: f64) -> Self {
        let terms = (0..n)
            .map(|i| {
                let mut e = vec![0; n];
                e[i] = 2;
                (e, Complex64::new(0.5, 0.0))
            })
            .collect();
        IntegrablePart { poly: Poly::from_terms(n, terms), convexity: 1.0, action_box: ActionBox::cube(n, r) }
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn n(&self) -> usize {
        self.poly.nvars()
    }

    pub fn convexity(&self) -> f64 {
        self.convexity
    }

    pub fn action_box(&self) -> &ActionBox {
        &self.action_box
    }

    pub fn with_box(&self, action_box: ActionBox) -> Self {
        IntegrablePart { action_box, ..self.clone() }
    }

    pub fn is_quadratic(&self) -> bool {
        self.poly.degree() <= 2
    }

    /// Exact derivative `∂^a H₀(p)`; `p` must lie in the box.
    pub fn eval(&self, p: &[f64], a: &[u32]) -> Result<f64> {
        let ord: u32 = a.iter().sum();
        if ord > 4 {
            return Err(LabError::UnsupportedOrder(ord as usize));
        }
        self.action_box.check(p)?;
        Ok(self.poly.eval_deriv(p, a).re)
    }

    pub fn value_at(&self, p: &[f64]) -> f64 {
        self.poly.eval(p).re
    }

    pub fn deriv_at(&self, p: &[f64], a: &[u32]) -> f64 {
        self.poly.eval_deriv(p, a).re
    }

    /// Frequency vector `∂H₀(p)`.
    pub fn frequency(&self, p: &[f64]) -> Vec<f64> {
        let (_, g, _) = self.poly.jet2(p);
        (0..self.n()).map(|i| g[i].re).collect()
    }

    pub fn hessian(&self, p: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let (_, _, h) = self.poly.jet2(p);
        DMatrix::from_fn(n, n, |i, j| h[i][j].re)
    }

    /// Extreme Hessian eigenvalues over an `m`-point grid of the box; fails if
    /// they leave `[1/D, D]`.
    pub fn check_convexity(&self, m: usize) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in self.action_box.grid(m) {
            let e = self.hessian(&p).symmetric_eigen().eigenvalues;
            lo = lo.min(e.min());
            hi = hi.max(e.max());
        }
        let d = self.convexity;
        if lo < 1.0 / d - 1e-12 || hi > d + 1e-12 {
            return Err(LabError::Model(format!(
                "Hessian eigenvalues [{lo}, {hi}] leave [1/D, D] with D = {d}"
            )));
        }
        Ok((lo, hi))
    }
}

impl PhaseFunction for IntegrablePart {
    fn dim(&self) -> usize {
        self.n()
    }

    fn jet(&self, _t: f64, _theta: &[f64], p: &[f64], order: u8) -> Local {
        let n = self.n();
        let mut l = Local::zero(n);
        if order == 0 {
            l.value = self.poly.eval(p).re;
            return l;
        }
        let (v, g, h) = self.poly.jet2(p);
        l.value = v.re;
        for i in 0..n {
            l.d_p[i] = g[i].re;
            if order >= 2 {
                for j in 0..n {
                    l.hess[n + i][n + j] = h[i][j].re;
                }
            }
        }
        l
    }
}

/// One Fourier mode `h_k(p) e^{2πi k·(θ,t)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub k: Vec<i64>,
    pub coeff: Poly,
}

/// `[k] = max |k_i|`, with `[0] = 1`.
pub fn bracket(k: &[i64]) -> i64 {
    k.iter().map(|x| x.abs()).max().unwrap_or(0).max(1)
}

/// First nonzero entry is positive.
pub fn lex_positive(k: &[i64]) -> bool {
    k.iter().find(|&&x| x != 0).map_or(false, |&x| x > 0)
}

fn neg(k: &[i64]) -> Vec<i64> {
    k.iter().map(|x| -x).collect()
}

/// Real trigonometric polynomial in `(θ, t)` with polynomial coefficients in `p`.
#[derive(Clone, Debug)]
pub struct TrigPoly {
    n: usize,
    smoothness: u32,
    modes: Vec<Mode>,
    // representatives k ⪰ 0 with weight 2 (k ≠ 0) or 1
    half: Vec<(usize, f64)>,
}

impl TrigPoly {
    /// Builds from a Hermitian-complete mode list. Duplicate `k` are merged.
    pub fn new(n: usize, smoothness: u32, modes: Vec<Mode>) -> Result<Self> {
        if n > MAX_N {
            return Err(LabError::Model(format!("at most {MAX_N} degrees of freedom")));
        }
        let mut merged: Vec<Mode> = Vec::new();
        for m in modes {
            if m.k.len() != n + 1 || m.coeff.nvars() != n {
                return Err(LabError::Model(format!("mode {:?} has wrong dimension", m.k)));
            }
            match merged.iter_mut().find(|x| x.k == m.k) {
                Some(x) => x.coeff = x.coeff.add(&m.coeff),
                None => merged.push(m),
            }
        }
        merged.retain(|m| !m.coeff.is_zero());
        merged.sort_by(|a, b| a.k.cmp(&b.k));
        let mut half = Vec::new();
        for (i, m) in merged.iter().enumerate() {
            let scale = m.coeff.terms().iter().map(|(_, c)| c.norm()).fold(1.0, f64::max);
            if m.k.iter().all(|&x| x == 0) {
                if m.coeff.terms().iter().any(|(_, c)| c.im.abs() > 1e-13 * scale) {
                    return Err(LabError::Model("constant mode must be real".into()));
                }
                half.push((i, 1.0));
                continue;
            }
            let nk = neg(&m.k);
            let partner = merged.iter().find(|x| x.k == nk);
            let ok = partner.map_or(false, |pm| pm.coeff.max_diff(&m.coeff.conj()) <= 1e-13 * scale);
            if !ok {
                return Err(LabError::Model(format!("mode {:?} lacks a Hermitian partner", m.k)));
            }
            if lex_positive(&m.k) {
                half.push((i, 2.0));
            }
        }
        Ok(TrigPoly { n, smoothness, modes: merged, half })
    }

    /// Builds from modes of which only one of each pair `±k` needs to be given.
    pub fn from_half(n: usize, smoothness: u32, modes: Vec<Mode>) -> Result<Self> {
        let mut full = modes.clone();
        for m in &modes {
            let nk = neg(&m.k);
            if m.k.iter().any(|&x| x != 0) && !modes.iter().any(|x| x.k == nk) {
                full.push(Mode { k: nk, coeff: m.coeff.conj() });
            }
        }
        Self::new(n, smoothness, full)
    }

    pub fn zero(n: usize) -> Self {
        TrigPoly { n, smoothness: 0, modes: Vec::new(), half: Vec::new() }
    }

    /// `coeff(p)·cos(2π k·(θ,t))` for a real polynomial `coeff`.
    pub fn cos_term(n: usize, k: &[i64], coeff: Poly) -> Self {
        Self::trig_term(n, k, coeff, Complex64::new(0.5, 0.0))
    }

    /// `coeff(p)·sin(2π k·(θ,t))` for a real polynomial `coeff`.
    pub fn sin_term(n: usize, k: &[i64], coeff: Poly) -> Self {
        Self::trig_term(n, k, coeff, Complex64::new(0.0, -0.5))
    }

    fn trig_term(n: usize, k: &[i64], coeff: Poly, w: Complex64) -> Self {
        if k.iter().all(|&x| x == 0) {
            let s = if w.re != 0.0 { 1.0 } else { 0.0 };
            return Self::new(n, 0, vec![Mode { k: k.to_vec(), coeff: coeff.scale(Complex64::new(s, 0.0)) }])
                .expect("constant mode");
        }
        let a = coeff.scale(w);
        let b = coeff.scale(w.conj());
        Self::new(n, 0, vec![Mode { k: k.to_vec(), coeff: a }, Mode { k: neg(k), coeff: b }])
            .expect("hermitian pair")
    }

    /// Constant-amplitude cosine mode.
    pub fn cos(n: usize, k: &[i64], amp: f64) -> Self {
        Self::cos_term(n, k, Poly::constant(n, Complex64::new(amp, 0.0)))
    }

    pub fn sin(n: usize, k: &[i64], amp: f64) -> Self {
        Self::sin_term(n, k, Poly::constant(n, Complex64::new(amp, 0.0)))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::cos(n, &vec![0; n + 1], c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    pub fn with_smoothness(mut self, r: u32) -> Self {
        self.smoothness = r;
        self
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// One representative of each pair `±k` with its weight (2, or 1 for `k = 0`).
    pub fn half_modes(&self) -> impl Iterator<Item = (&Mode, f64)> + '_ {
        self.half.iter().map(move |&(i, w)| (&self.modes[i], w))
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn coefficient(&self, k: &[i64]) -> Option<&Poly> {
        self.modes.iter().find(|m| m.k == k).map(|m| &m.coeff)
    }

    pub fn max_bracket(&self) -> i64 {
        self.modes.iter().map(|m| bracket(&m.k)).max().unwrap_or(0)
    }

    pub fn depends_on_time(&self) -> bool {
        self.modes.iter().any(|m| m.k[self.n] != 0)
    }

    pub fn has_constant_coefficients(&self) -> bool {
        self.modes.iter().all(|m| m.coeff.is_constant())
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        Self::new(self.n, self.smoothness.max(other.smoothness), modes).expect("sum of hermitian sums")
    }

    pub fn scale(&self, s: f64) -> TrigPoly {
        let modes = self
            .modes
            .iter()
            .map(|m| Mode { k: m.k.clone(), coeff: m.coeff.scale(Complex64::new(s, 0.0)) })
            .collect();
        Self::new(self.n, self.smoothness, modes).expect("scaled hermitian sum")
    }

    /// Product with a real polynomial in `p`.
    pub fn times_poly(&self, q: &Poly) -> TrigPoly {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let mut terms = Vec::new();
                for (e1, c1) in m.coeff.terms() {
                    for (e2, c2) in q.terms() {
                        terms.push((e1.iter().zip(e2).map(|(a, b)| a + b).collect(), c1 * c2));
                    }
                }
                Mode { k: m.k.clone(), coeff: Poly::from_terms(self.n, terms) }
            })
            .collect();
        Self::new(self.n, self.smoothness, modes).expect("product keeps symmetry")
    }

    /// Product of two trigonometric polynomials.
    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        let mut modes = Vec::new();
        for a in &self.modes {
            for b in &other.modes {
                let k: Vec<i64> = a.k.iter().zip(&b.k).map(|(x, y)| x + y).collect();
                let mut terms = Vec::new();
                for (e1, c1) in a.coeff.terms() {
                    for (e2, c2) in b.coeff.terms() {
                        terms.push((e1.iter().zip(e2).map(|(x, y)| x + y).collect(), c1 * c2));
                    }
                }
                modes.push(Mode { k, coeff: Poly::from_terms(self.n, terms) });
            }
        }
        Self::new(self.n, self.smoothness.max(other.smoothness), modes).expect("product keeps symmetry")
    }

    /// Keeps the modes selected by `keep`.
    pub fn filter(&self, keep: impl Fn(&[i64]) -> bool) -> TrigPoly {
        let modes = self.modes.iter().filter(|m| keep(&m.k)).cloned().collect();
        Self::new(self.n, self.smoothness, modes).expect("filter is symmetric under k -> -k")
    }

    /// Averaged potential: modes with vanishing fast and time components.
    pub fn resonant_average(&self) -> TrigPoly {
        let n = self.n;
        self.filter(|k| k[n - 1] == 0 && k[n] == 0)
    }

    /// Maps each mode and coefficient through `f` (must respect `k -> -k`).
    pub fn map_modes(&self, f: impl Fn(&Mode) -> Mode) -> Result<TrigPoly> {
        Self::new(self.n, self.smoothness, self.modes.iter().map(f).collect())
    }

    /// Exact derivative `∂^α` at `x`. No box check.
    pub fn eval(&self, x: &PhasePoint, alpha: &MultiIndex) -> Result<f64> {
        Ok(self.eval_complex(x, alpha)?.re)
    }

    /// Same sum without taking the real part; the imaginary part is round-off.
    pub fn eval_complex(&self, x: &PhasePoint, alpha: &MultiIndex) -> Result<Complex64> {
        let ord = alpha.order();
        if ord > 4 {
            return Err(LabError::UnsupportedOrder(ord));
        }
        let n = self.n;
        let mut acc = Complex64::new(0.0, 0.0);
        for m in &self.modes {
            let mut f = Complex64::new(1.0, 0.0);
            let i2pi = Complex64::new(0.0, TAU);
            for j in 0..n {
                for _ in 0..alpha.theta[j] {
                    f *= i2pi * m.k[j] as f64;
                }
            }
            for _ in 0..alpha.t {
                f *= i2pi * m.k[n] as f64;
            }
            if f.norm() == 0.0 {
                continue;
            }
            let ph = TAU * (phase(&m.k, &x.theta, x.t));
            let e = Complex64::new(ph.cos(), ph.sin());
            acc += f * m.coeff.eval_deriv(&x.p, &alpha.p) * e;
        }
        Ok(acc)
    }
}

fn phase(k: &[i64], theta: &[f64], t: f64) -> f64 {
    let n = theta.len();
    let mut s = k[n] as f64 * t;
    for j in 0..n {
        s += k[j] as f64 * theta[j];
    }
    s
}

impl PhaseFunction for TrigPoly {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, t: f64, theta: &[f64], p: &[f64], order: u8) -> Local {
        let n = self.n;
        let mut l = Local::zero(n);
        for &(idx, w) in &self.half {
            let m = &self.modes[idx];
            let (sn, cs) = (TAU * phase(&m.k, theta, t)).sin_cos();
            let e = Complex64::new(cs, sn);
            if order == 0 {
                l.value += w * (m.coeff.eval(p) * e).re;
                continue;
            }
            let (hv, hg, hh) = m.coeff.jet2(p);
            let a = hv * e;
            l.value += w * a.re;
            let tk_t = TAU * m.k[n] as f64;
            l.d_t -= w * tk_t * a.im;
            for i in 0..n {
                let tk = TAU * m.k[i] as f64;
                l.d_theta[i] -= w * tk * a.im;
                let gi = hg[i] * e;
                l.d_p[i] += w * gi.re;
                if order >= 2 {
                    for j in 0..n {
                        let tkj = TAU * m.k[j] as f64;
                        l.hess[i][j] -= w * tk * tkj * a.re;
                        let gj = hg[j] * e;
                        l.hess[i][n + j] -= w * tk * gj.im;
                        l.hess[n + j][i] -= w * tk * gj.im;
                        l.hess[n + i][n + j] += w * (hh[i][j] * e).re;
                    }
                }
            }
        }
        l
    }
}

/// `H = H₀ + ε H₁`.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub h0: IntegrablePart,
    pub h1: TrigPoly,
    pub eps: f64,
}

impl Hamiltonian {
    pub fn new(h0: IntegrablePart, h1: TrigPoly, eps: f64) -> Result<Self> {
        if h0.n() != h1.n() && !h1.is_empty() {
            return Err(LabError::Dimension(format!("H0 has n = {}, H1 has n = {}", h0.n(), h1.n())));
        }
        if !(eps >= 0.0) {
            return Err(LabError::Model(format!("epsilon {eps} must be non-negative")));
        }
        Ok(Hamiltonian { h0, h1, eps })
    }

    pub fn n(&self) -> usize {
        self.h0.n()
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Hamiltonian { eps, ..self.clone() }
    }

    /// Exact derivative of the full Hamiltonian at a point of the box.
    pub fn eval(&self, x: &PhasePoint, alpha: &MultiIndex) -> Result<f64> {
        self.h0.action_box().check(&x.p)?;
        let mut v = self.eps * self.h1.eval(x, alpha)?;
        if alpha.theta.iter().all(|&a| a == 0) && alpha.t == 0 {
            v += self.h0.eval(&x.p, &alpha.p)?;
        }
        Ok(v)
    }

    /// True when `H₁` does not depend on `p` and `H₀` is quadratic, so the
    /// Lagrangian has a closed form.
    pub fn is_mechanical(&self) -> bool {
        self.h0.is_quadratic() && self.h1.has_constant_coefficients()
    }
}

impl PhaseFunction for Hamiltonian {
    fn dim(&self) -> usize {
        self.n()
    }

    fn jet(&self, t: f64, theta: &[f64], p: &[f64], order: u8) -> Local {
        let mut l = self.h0.jet(t, theta, p, order);
        if self.eps != 0.0 && !self.h1.is_empty() {
            let j = self.h1.jet(t, theta, p, order);
            l.add_scaled(&j, self.eps);
        }
        l
    }
}
