//! Sampling checks of the transform and the remainder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::NormalForm;
use crate::error::{LabError, Result};
use crate::model::{wrap_centered, ActionBox, PhaseFunction, PhasePoint};
use crate::resonance::in_domain_d;

/// Where and how densely to sample.
#[derive(Clone, Debug, Serialize)]
pub struct SamplePlan {
    pub count: usize,
    pub seed: u64,
    /// Actions are drawn uniformly from this box.
    pub p_box: ActionBox,
    /// Redraw samples outside `D(K, βε^{1/4})` instead of failing.
    pub reject_outside: bool,
    /// Samples (from the start of the list) on which derivatives of `R` are estimated.
    pub derivative_samples: usize,
    /// Difference step as a fraction of the box width (angles have width 1).
    pub fd_step: f64,
    pub symplectic_samples: usize,
}

impl SamplePlan {
    pub fn new(count: usize, p_box: ActionBox) -> Self {
        SamplePlan {
            count,
            seed: 1,
            p_box,
            reject_outside: true,
            derivative_samples: 50,
            fd_step: 1e-3,
            symplectic_samples: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleRow {
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
    pub remainder: f64,
    pub displacement: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalFormReport {
    pub eps: f64,
    pub k_max: i64,
    pub beta: f64,
    pub width: f64,
    pub delta_target: f64,
    pub samples: usize,
    pub derivative_samples: usize,
    pub fd_step: f64,
    pub generator_modes: usize,
    pub dropped_modes: usize,
    pub phi_c0: f64,
    pub phi_theta_c0: f64,
    pub phi_p_c0: f64,
    pub sqrt_eps: f64,
    pub phi_within_sqrt_eps: bool,
    pub r_c0: f64,
    pub r_c1: f64,
    pub r_c2: f64,
    /// `max(r_c0, r_c1, r_c2)`.
    pub r_norm_c2: f64,
    pub within_delta: bool,
    /// `max ‖Φ⁻¹(Φ(x)) − x‖`.
    pub inverse_error: f64,
    /// `max |R_quadrature − R_direct|`.
    pub identity_gap: f64,
    pub symplectic_error: f64,
    pub generator_c1: f64,
    #[serde(skip)]
    pub rows: Vec<SampleRow>,
}

fn draw(plan: &SamplePlan, nf: &NormalForm) -> Result<Vec<PhasePoint>> {
    let n = nf.h.n();
    let params = nf.params();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut out = Vec::with_capacity(plan.count);
    let mut tries = 0usize;
    while out.len() < plan.count {
        tries += 1;
        if tries > 1000 * plan.count.max(1) {
            return Err(LabError::Precondition("sample box barely meets the non-resonant domain".into()));
        }
        let theta: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let p: Vec<f64> = (0..n).map(|i| rng.gen_range(plan.p_box.lo[i]..=plan.p_box.hi[i])).collect();
        let t = rng.gen::<f64>();
        let check = in_domain_d(&nf.h.h0, &p, params.k_max, params.width());
        if !check.inside {
            if plan.reject_outside {
                continue;
            }
            return Err(LabError::Precondition(format!("sample p = {p:?} lies outside D: {:?}", check.witness)));
        }
        out.push(PhasePoint::new(theta, p, t));
    }
    Ok(out)
}

fn displacement(a: &PhasePoint, b: &PhasePoint) -> (f64, f64) {
    let th = a.theta.iter().zip(&b.theta).map(|(x, y)| wrap_centered(x - y).abs()).fold(0.0, f64::max);
    let p = a.p.iter().zip(&b.p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    (th, p)
}

/// Coordinates `(θ, p, t)` as a flat vector and back.
fn flat(x: &PhasePoint) -> Vec<f64> {
    let mut v = x.theta.clone();
    v.extend_from_slice(&x.p);
    v.push(x.t);
    v
}

fn unflat(v: &[f64], n: usize) -> PhasePoint {
    PhasePoint { theta: v[..n].to_vec(), p: v[n..2 * n].to_vec(), t: v[2 * n] }
}

/// Largest first and second partials of `R` by central differences.
fn remainder_derivatives(nf: &NormalForm, x: &PhasePoint, steps: &[f64]) -> Result<(f64, f64)> {
    let n = x.dim();
    let d = 2 * n + 1;
    let base = flat(x);
    let r0 = nf.remainder(x)?;
    let at = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut v = base.clone();
        for &(i, s) in shifts {
            v[i] += s * steps[i];
        }
        nf.remainder(&unflat(&v, n))
    };
    let mut c1: f64 = 0.0;
    let mut c2: f64 = 0.0;
    for i in 0..d {
        let (up, dn) = (at(&[(i, 1.0)])?, at(&[(i, -1.0)])?);
        c1 = c1.max(((up - dn) / (2.0 * steps[i])).abs());
        c2 = c2.max(((up - 2.0 * r0 + dn) / (steps[i] * steps[i])).abs());
        for j in 0..i {
            let pp = at(&[(i, 1.0), (j, 1.0)])?;
            let pm = at(&[(i, 1.0), (j, -1.0)])?;
            let mp = at(&[(i, -1.0), (j, 1.0)])?;
            let mm = at(&[(i, -1.0), (j, -1.0)])?;
            c2 = c2.max(((pp - pm - mp + mm) / (4.0 * steps[i] * steps[j])).abs());
        }
    }
    Ok((c1, c2))
}

/// `max |JᵀΩJ − Ω|` for the Jacobian of `Φ` in `(θ, p)` at fixed `t`.
pub fn symplectic_defect(nf: &NormalForm, x: &PhasePoint, h: f64) -> Result<f64> {
    let n = x.dim();
    let m = 2 * n;
    let mut jac = vec![vec![0.0; m]; m];
    for j in 0..m {
        let mut a = flat(x);
        let mut b = flat(x);
        a[j] += h;
        b[j] -= h;
        let ya = nf.phi(&unflat(&a, n))?.point;
        let yb = nf.phi(&unflat(&b, n))?.point;
        for i in 0..n {
            jac[i][j] = wrap_centered(ya.theta[i] - yb.theta[i]) / (2.0 * h);
            jac[n + i][j] = (ya.p[i] - yb.p[i]) / (2.0 * h);
        }
    }
    let omega = |i: usize, j: usize| -> f64 {
        if i < n && j == i + n {
            1.0
        } else if i >= n && j + n == i {
            -1.0
        } else {
            0.0
        }
    };
    let mut worst: f64 = 0.0;
    for a in 0..m {
        for b in 0..m {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += jac[i][a] * omega(i, j) * jac[j][b];
                }
            }
            worst = worst.max((s - omega(a, b)).abs());
        }
    }
    Ok(worst)
}

/// Samples the transform and the remainder on `D(K, βε^{1/4})`.
pub fn verify_normal_form(nf: &NormalForm, plan: &SamplePlan, delta_target: f64) -> Result<NormalFormReport> {
    let n = nf.h.n();
    let params = nf.params();
    let pts = draw(plan, nf)?;
    struct One {
        row: SampleRow,
        dth: f64,
        dp: f64,
        inverse: f64,
        gap: f64,
        g1: f64,
    }
    let ones: Vec<One> = pts
        .par_iter()
        .map(|x| -> Result<One> {
            let tr = nf.phi(x)?;
            let (dth, dp) = displacement(&tr.point, x);
            let back = nf.phi_inv(&tr.point)?.point;
            let (ith, ip) = displacement(&back, x);
            let r = nf.remainder_from(x, &tr);
            let direct = nf.remainder_direct(x)?;
            let g = nf.generator.jet(x.t, &x.theta, &x.p, 1);
            let g1 = (0..n).map(|i| g.d_theta[i].abs().max(g.d_p[i].abs())).fold(0.0, f64::max);
            Ok(One {
                row: SampleRow { theta: x.theta.clone(), p: x.p.clone(), t: x.t, remainder: r, displacement: dth.max(dp) },
                dth,
                dp,
                inverse: ith.max(ip),
                gap: (r - direct).abs(),
                g1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let width = &nf.h.h0.action_box();
    let mut steps = vec![plan.fd_step; 2 * n + 1];
    for i in 0..n {
        steps[n + i] = plan.fd_step * (width.hi[i] - width.lo[i]);
    }
    let nd = plan.derivative_samples.min(pts.len());
    let derivs: Vec<(f64, f64)> = pts[..nd]
        .par_iter()
        .map(|x| remainder_derivatives(nf, x, &steps))
        .collect::<Result<Vec<_>>>()?;
    let ns = plan.symplectic_samples.min(pts.len());
    let symp: Vec<f64> = pts[..ns].par_iter().map(|x| symplectic_defect(nf, x, 1e-5)).collect::<Result<Vec<_>>>()?;
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
    let phi_theta_c0 = max(&mut ones.iter().map(|o| o.dth));
    let phi_p_c0 = max(&mut ones.iter().map(|o| o.dp));
    let phi_c0 = phi_theta_c0.max(phi_p_c0);
    let r_c0 = max(&mut ones.iter().map(|o| o.row.remainder.abs()));
    let r_c1 = max(&mut derivs.iter().map(|d| d.0));
    let r_c2 = max(&mut derivs.iter().map(|d| d.1));
    let r_norm_c2 = r_c0.max(r_c1).max(r_c2);
    let sqrt_eps = params.eps.sqrt();
    Ok(NormalFormReport {
        eps: params.eps,
        k_max: params.k_max,
        beta: params.beta,
        width: params.width(),
        delta_target,
        samples: pts.len(),
        derivative_samples: nd,
        fd_step: plan.fd_step,
        generator_modes: nf.generator.modes().len(),
        dropped_modes: nf.generator.dropped().len(),
        phi_c0,
        phi_theta_c0,
        phi_p_c0,
        sqrt_eps,
        phi_within_sqrt_eps: phi_c0 <= sqrt_eps,
        r_c0,
        r_c1,
        r_c2,
        r_norm_c2,
        within_delta: r_norm_c2 <= delta_target,
        inverse_error: max(&mut ones.iter().map(|o| o.inverse)),
        identity_gap: max(&mut ones.iter().map(|o| o.gap)),
        symplectic_error: max(&mut symp.into_iter()),
        generator_c1: max(&mut ones.iter().map(|o| o.g1)),
        rows: ones.into_iter().map(|o| o.row).collect(),
    })
}

/// Advisory scalings for a target remainder size `δ`.
#[derive(Clone, Debug, Serialize)]
pub struct Advice {
    pub delta: f64,
    pub c: f64,
    pub k0: f64,
    pub beta: f64,
    pub eps0: f64,
    /// `c δ^{−1/(r−n−4)}`, offered when `r ≥ n + 5`.
    pub k_smooth: Option<f64>,
    /// Smoothness needed by the approximation stage, `2n + 5`.
    pub r2: u32,
    pub h0_c4: f64,
}

pub fn parameter_advisor(delta: f64, n: usize, r: u32, h0_c4: f64, c: f64) -> Result<Advice> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(LabError::Precondition(format!("delta = {delta} must lie in (0, 1]")));
    }
    let nf = n as f64;
    let k_smooth = if r as usize >= n + 5 {
        Some(c * delta.powf(-1.0 / (r as f64 - nf - 4.0)))
    } else {
        None
    };
    Ok(Advice {
        delta,
        c,
        k0: c * delta.powi(-2),
        beta: c * delta.powf(-1.0 - nf),
        eps0: delta.powf(6.0 * nf + 5.0) / c,
        k_smooth,
        r2: 2 * n as u32 + 5,
        h0_c4,
    })
}
