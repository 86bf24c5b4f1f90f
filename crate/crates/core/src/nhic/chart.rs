//! Slow–fast chart around a branch of maxima of the averaged potential.
//!
//! With `A = −∂²_{θ^sθ^s}Z` and `B = ∂²_{p^sp^s}H₀` along the resonance,
//! `L = (B^{1/2}(B^{1/2}AB^{1/2})^{-1/2}B^{1/2})^{1/2}` puts the linearized
//! slow pendulum into the form `ẋ = √εΛx, ẏ = −√εΛy` with `Λ = LAL`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::matrix::{eig_range, spd_inv_sqrt, spd_sqrt};
use crate::error::{LabError, Result};
use crate::model::{small, wrap, wrap_centered, IntegrablePart, PhaseFunction, PhasePoint, TrigPoly, MAX_N};
use crate::resonance::{p_star_slope, solve_p_star};

/// Number of branch-table points used to seed the maximum at a query `p^f`.
const TABLE: usize = 257;

/// `A` and `B` at one point of the resonance.
#[derive(Clone, Debug)]
pub struct HessianPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Chart data at a fixed fast action.
#[derive(Clone, Debug)]
pub struct ChartSample {
    pub pf: f64,
    /// Slow action on the resonance, `p^s_*(p^f)`.
    pub ps: Vec<f64>,
    /// Maximizing slow angle, `θ^s_*(p^f)`.
    pub theta_s: Vec<f64>,
    pub hessians: HessianPair,
    pub l: DMatrix<f64>,
    pub l_inv: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
}

/// `p^f`-derivatives of the chart data.
#[derive(Clone, Debug)]
pub struct ChartSlopes {
    pub theta_s: Vec<f64>,
    pub ps: Vec<f64>,
    pub l: DMatrix<f64>,
    pub l_inv: DMatrix<f64>,
}

/// Defects of the three chart identities.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChartDefects {
    /// `‖L²AL² − B‖`.
    pub conjugation: f64,
    /// `max(‖LAL − Λ‖, ‖L⁻¹BL⁻¹ − Λ‖)`.
    pub lambda: f64,
    pub lambda_min: f64,
    /// `√(λ/D)` with `λ = min eig A` and `D = max(‖B‖, ‖B⁻¹‖)`.
    pub lambda_bound: f64,
}

impl ChartSample {
    pub fn ns(&self) -> usize {
        self.ps.len()
    }

    pub fn defects(&self) -> ChartDefects {
        let (a, b) = (&self.hessians.a, &self.hessians.b);
        let l2 = &self.l * &self.l;
        let conjugation = (&l2 * a * &l2 - b).amax() / b.amax().max(1.0);
        let lal = &self.l * a * &self.l;
        let lbl = &self.l_inv * b * &self.l_inv;
        let scale = self.lambda.amax().max(1.0);
        let lambda = (&lal - &self.lambda).amax().max((&lbl - &self.lambda).amax()) / scale;
        let (lam_a, _) = eig_range(a);
        let (b_lo, b_hi) = eig_range(b);
        let d = b_hi.max(1.0 / b_lo);
        ChartDefects { conjugation, lambda, lambda_min: eig_range(&self.lambda).0, lambda_bound: (lam_a / d).sqrt() }
    }
}

/// `L` and `Λ` from `A` and `B`.
pub fn chart_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let bh = spd_sqrt(b)?;
    let inner = spd_inv_sqrt(&(&bh * a * &bh))?;
    let l = spd_sqrt(&(&bh * inner * &bh))?;
    let l_inv = l.clone().try_inverse().ok_or(LabError::MatrixDomain(0.0))?;
    let lambda = &l * a * &l;
    let lambda = (&lambda + lambda.transpose()) * 0.5;
    Ok((l, l_inv, lambda))
}

/// Point in chart coordinates `(x, y, Θ, I, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub big_theta: f64,
    pub i: f64,
    pub t: f64,
}

impl ChartPoint {
    /// `[x, y, Θ, I, t]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.extend_from_slice(&self.y);
        v.extend_from_slice(&[self.big_theta, self.i, self.t]);
        v
    }

    pub fn from_slice(ns: usize, v: &[f64]) -> Self {
        ChartPoint { x: v[..ns].to_vec(), y: v[ns..2 * ns].to_vec(), big_theta: v[2 * ns], i: v[2 * ns + 1], t: v[2 * ns + 2] }
    }
}

/// The chart along one branch of maxima over a fast-action interval.
#[derive(Clone, Debug)]
pub struct Chart {
    z: TrigPoly,
    h0: IntegrablePart,
    pub eps: f64,
    /// `Θ = γθ^f`.
    pub gamma: f64,
    pub pf_lo: f64,
    pub pf_hi: f64,
    /// Smallest admissible eigenvalue of `A`.
    pub lambda_floor: f64,
    table: Vec<Vec<f64>>,
}

impl Chart {
    /// Follows the maximum seeded at `(seed_pf, seed_theta)` across `[pf_lo, pf_hi]`.
    pub fn new(
        z: &TrigPoly,
        h0: &IntegrablePart,
        eps: f64,
        gamma: f64,
        (pf_lo, pf_hi): (f64, f64),
        seed: (f64, &[f64]),
    ) -> Result<Chart> {
        let n = h0.n();
        if n < 2 || z.n() != n || seed.1.len() != n - 1 {
            return Err(LabError::Dimension("chart needs n ≥ 2 and a seed with n − 1 slow angles".into()));
        }
        if !(eps > 0.0 && gamma > 0.0 && pf_lo < pf_hi) {
            return Err(LabError::Precondition("chart needs ε > 0, γ > 0 and a proper interval".into()));
        }
        let mut chart = Chart { z: z.clone(), h0: h0.clone(), eps, gamma, pf_lo, pf_hi, lambda_floor: 0.0, table: Vec::new() };
        let grid: Vec<f64> = (0..TABLE).map(|i| pf_lo + (pf_hi - pf_lo) * i as f64 / (TABLE - 1) as f64).collect();
        let start = grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - seed.0).abs().total_cmp(&(b.1 - seed.0).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut table = vec![Vec::new(); TABLE];
        let first = chart.maximum(seed.0, seed.1)?;
        table[start] = chart.maximum(grid[start], &first)?;
        for i in (start + 1)..TABLE {
            table[i] = chart.follow(grid[i], &table[i - 1])?;
        }
        for i in (0..start).rev() {
            table[i] = chart.follow(grid[i], &table[i + 1])?;
        }
        chart.table = table;
        Ok(chart)
    }

    pub fn with_lambda_floor(mut self, floor: f64) -> Self {
        self.lambda_floor = floor;
        self
    }

    pub fn ns(&self) -> usize {
        self.h0.n() - 1
    }

    pub fn h0(&self) -> &IntegrablePart {
        &self.h0
    }

    pub fn z(&self) -> &TrigPoly {
        &self.z
    }

    fn follow(&self, pf: f64, prev: &[f64]) -> Result<Vec<f64>> {
        let th = self.maximum(pf, prev)?;
        let jump = th.iter().zip(prev).map(|(a, b)| wrap_centered(a - b).abs()).fold(0.0, f64::max);
        if jump > 0.1 {
            return Err(LabError::Degeneracy(format!("branch of maxima jumps by {jump} at p^f = {pf}")));
        }
        Ok(th)
    }

    fn slow_jet(&self, theta_s: &[f64], p: &[f64]) -> crate::model::Local {
        let mut th = theta_s.to_vec();
        th.push(0.0);
        self.z.jet(0.0, &th, p, 2)
    }

    /// Newton polish of the slow maximum of `Z(·, p_*(p^f))` from `guess`.
    fn maximum(&self, pf: f64, guess: &[f64]) -> Result<Vec<f64>> {
        let ns = self.ns();
        let p = solve_p_star(&self.h0, pf, None)?.action();
        let mut th = guess.to_vec();
        for _ in 0..60 {
            let l = self.slow_jet(&th, &p);
            let mut a = [[0.0; MAX_N]; MAX_N];
            let mut b = [0.0; MAX_N];
            for i in 0..ns {
                b[i] = -l.d_theta[i];
                for j in 0..ns {
                    a[i][j] = l.hess[i][j];
                }
            }
            if !small::solve(ns, &mut a, &mut b) {
                return Err(LabError::Degeneracy(format!("singular slow Hessian of Z at p^f = {pf}")));
            }
            let step = b[..ns].iter().map(|x| x.abs()).fold(0.0, f64::max);
            let damp = if step > 0.05 { 0.05 / step } else { 1.0 };
            for i in 0..ns {
                th[i] += damp * b[i];
            }
            if step < 1e-15 {
                break;
            }
        }
        Ok(th.into_iter().map(wrap).collect())
    }

    fn table_guess(&self, pf: f64) -> &[f64] {
        let s = (pf - self.pf_lo) / (self.pf_hi - self.pf_lo) * (TABLE - 1) as f64;
        let i = s.round().clamp(0.0, (TABLE - 1) as f64) as usize;
        &self.table[i]
    }

    fn check_range(&self, pf: f64) -> Result<()> {
        if !(pf >= self.pf_lo - 1e-12 && pf <= self.pf_hi + 1e-12) {
            return Err(LabError::Domain { p: vec![pf], lo: vec![self.pf_lo], hi: vec![self.pf_hi] });
        }
        Ok(())
    }

    /// `A`, `B`, `L`, `Λ` at `p^f`.
    pub fn sample(&self, pf: f64) -> Result<ChartSample> {
        self.check_range(pf)?;
        self.sample_unchecked(pf)
    }

    fn sample_unchecked(&self, pf: f64) -> Result<ChartSample> {
        let ns = self.ns();
        let cp = solve_p_star(&self.h0, pf, None)?;
        let p = cp.action();
        let theta_s = self.maximum(pf, self.table_guess(pf))?;
        let l = self.slow_jet(&theta_s, &p);
        let a = DMatrix::from_fn(ns, ns, |i, j| -l.hess[i][j]);
        let hb = self.h0.hessian(&p);
        let b = DMatrix::from_fn(ns, ns, |i, j| hb[(i, j)]);
        let (lam, _) = eig_range(&a);
        if !(lam > self.lambda_floor.max(1e-12)) {
            return Err(LabError::Degeneracy(format!("min eigenvalue {lam:e} of −∂²Z at p^f = {pf} is below the floor")));
        }
        let (lm, l_inv, lambda) = chart_matrices(&a, &b)?;
        Ok(ChartSample { pf, ps: cp.ps, theta_s, hessians: HessianPair { a, b }, l: lm, l_inv, lambda })
    }

    /// Chart data and its `p^f`-derivatives: exact for `θ^s_*` and `p^s_*`,
    /// central differences for `L`.
    pub fn sample_with_slopes(&self, pf: f64) -> Result<(ChartSample, ChartSlopes)> {
        let s = self.sample(pf)?;
        let ns = self.ns();
        let p = {
            let mut p = s.ps.clone();
            p.push(pf);
            p
        };
        let cp = crate::resonance::CurvePoint { pf, ps: s.ps.clone(), residual: 0.0 };
        let mut dp = p_star_slope(&self.h0, &cp);
        dp.push(1.0);
        let l = self.slow_jet(&s.theta_s, &p);
        let n = ns + 1;
        let hss = DMatrix::from_fn(ns, ns, |i, j| l.hess[i][j]);
        let rhs = DVector::from_fn(ns, |i, _| -(0..n).map(|j| l.hess[i][n + j] * dp[j]).sum::<f64>());
        let d_theta = hss.lu().solve(&rhs).ok_or_else(|| LabError::Degeneracy(format!("singular ∂²Z at p^f = {pf}")))?;
        let h = 1e-5 * pf.abs().max(1.0);
        let up = self.sample_unchecked(pf + h)?;
        let dn = self.sample_unchecked(pf - h)?;
        let dl = (&up.l - &dn.l) / (2.0 * h);
        let dl_inv = -(&s.l_inv * &dl * &s.l_inv);
        dp.pop();
        Ok((s, ChartSlopes { theta_s: d_theta.iter().copied().collect(), ps: dp, l: dl, l_inv: dl_inv }))
    }

    /// Chart coordinates of a phase point, using the chart data at its own `p^f`.
    pub fn to_chart(&self, x: &PhasePoint) -> Result<ChartPoint> {
        let pf = x.p[self.ns()];
        let s = self.sample(pf)?;
        Ok(self.to_chart_with(&s, x))
    }

    /// As [`Chart::to_chart`] with precomputed data; `s.pf` must equal the point's `p^f`.
    pub fn to_chart_with(&self, s: &ChartSample, x: &PhasePoint) -> ChartPoint {
        let ns = self.ns();
        let dth = DVector::from_fn(ns, |i, _| wrap_centered(x.theta[i] - s.theta_s[i]));
        let dp = DVector::from_fn(ns, |i, _| x.p[i] - s.ps[i]);
        let a = &s.l_inv * dth;
        let b = &s.l * dp / self.eps.sqrt();
        ChartPoint {
            x: (&a + &b).iter().copied().collect(),
            y: (&a - &b).iter().copied().collect(),
            big_theta: self.gamma * x.theta[ns],
            i: x.p[ns] / self.eps.sqrt(),
            t: x.t,
        }
    }

    pub fn from_chart(&self, c: &ChartPoint) -> Result<PhasePoint> {
        let s = self.sample(self.eps.sqrt() * c.i)?;
        Ok(self.from_chart_with(&s, c))
    }

    pub fn from_chart_with(&self, s: &ChartSample, c: &ChartPoint) -> PhasePoint {
        let ns = self.ns();
        let x = DVector::from_column_slice(&c.x);
        let y = DVector::from_column_slice(&c.y);
        let th = &s.l * (&x + &y) * 0.5;
        let dp = &s.l_inv * (&x - &y) * (0.5 * self.eps.sqrt());
        let mut theta: Vec<f64> = (0..ns).map(|i| wrap(s.theta_s[i] + th[i])).collect();
        theta.push(wrap(c.big_theta / self.gamma));
        let mut p: Vec<f64> = (0..ns).map(|i| s.ps[i] + dp[i]).collect();
        p.push(self.eps.sqrt() * c.i);
        PhasePoint { theta, p, t: c.t }
    }

    /// Hamiltonian vector field pushed through the chart; returns `[ẋ, ẏ, Θ̇, İ, ṫ]`.
    pub fn velocity(&self, ham: &dyn PhaseFunction, c: &ChartPoint) -> Result<Vec<f64>> {
        let (s, d) = self.sample_with_slopes(self.eps.sqrt() * c.i)?;
        Ok(self.velocity_with(ham, &s, &d, c))
    }

    pub fn velocity_with(&self, ham: &dyn PhaseFunction, s: &ChartSample, d: &ChartSlopes, c: &ChartPoint) -> Vec<f64> {
        let ns = self.ns();
        let n = ns + 1;
        let x = self.from_chart_with(s, c);
        let jet = ham.jet(x.t, &x.theta, &x.p, 1);
        let th_dot = DVector::from_fn(ns, |i, _| jet.d_p[i]);
        let ps_dot = DVector::from_fn(ns, |i, _| -jet.d_theta[i]);
        let pf_dot = -jet.d_theta[ns];
        let dth = DVector::from_fn(ns, |i, _| wrap_centered(x.theta[i] - s.theta_s[i]));
        let dp = DVector::from_fn(ns, |i, _| x.p[i] - s.ps[i]);
        let r = 1.0 / self.eps.sqrt();
        let ang = &d.l_inv * &dth - &s.l_inv * DVector::from_column_slice(&d.theta_s);
        let act = (&d.l * &dp - &s.l * DVector::from_column_slice(&d.ps)) * r;
        let base_a = &s.l_inv * th_dot;
        let base_b = &s.l * ps_dot * r;
        let xd = &base_a + &base_b + (&ang + &act) * pf_dot;
        let yd = &base_a - &base_b + (&ang - &act) * pf_dot;
        let mut v: Vec<f64> = xd.iter().copied().collect();
        v.extend(yd.iter().copied());
        v.push(self.gamma * jet.d_p[n - 1]);
        v.push(r * pf_dot);
        v.push(1.0);
        v
    }
}
