//! The invariant cylinder as a graph over `(θ^f, p^f, t)`, found by shooting:
//! a point lies on it when its forward orbit stays near `u = 0` and its
//! backward orbit near `s = 0` for the stay time.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::block::{BlockCertificate, IsolatingBlock};
use super::chart::{Chart, ChartPoint, ChartSample, ChartSlopes};
use super::matrix::{eig_range, op_norm};
use crate::error::{LabError, Result};
use crate::model::{PhaseFunction, PhasePoint};
use crate::ode::{dopri5, hamilton_rhs, Tolerance};

#[derive(Clone, Debug, Serialize)]
pub struct CylinderGrid {
    pub n_theta: usize,
    pub n_pf: usize,
    pub n_t: usize,
    pub pf_lo: f64,
    pub pf_hi: f64,
}

impl CylinderGrid {
    pub fn pf(&self, j: usize) -> f64 {
        if self.n_pf == 1 {
            return 0.5 * (self.pf_lo + self.pf_hi);
        }
        self.pf_lo + (self.pf_hi - self.pf_lo) * j as f64 / (self.n_pf - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShootingConfig {
    /// Stay time in units of the slowest hyperbolic e-folding time `1/(√ε λ_min(Λ))`.
    pub stay_factor: f64,
    pub atol: f64,
    pub rtol: f64,
    pub max_iter: usize,
    /// Newton stops when the update falls below this.
    pub newton_tol: f64,
    /// Allowed move of a node when the stay time is doubled.
    pub doubling_tol: f64,
    /// Compute graph derivatives and invariance residuals at every node.
    pub residuals: bool,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            stay_factor: 6.0,
            atol: 1e-12,
            rtol: 1e-12,
            max_iter: 30,
            newton_tol: 1e-13,
            doubling_tol: 1e-6,
            residuals: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CylinderNode {
    pub theta_f: f64,
    pub pf: f64,
    pub t: f64,
    /// Graph value `w^c = (u, s)` in chart coordinates.
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    /// `Θ^s` and `P^s` in the original coordinates.
    pub theta_s: Vec<f64>,
    pub p_s: Vec<f64>,
    /// `‖F_{us} − Dw·F_c‖` at the node.
    pub residual: f64,
    /// `‖w_{2T} − w_T‖` under doubling of the stay time.
    pub shift: f64,
    /// `‖Dw‖` in chart coordinates `(Θ, I, t)`.
    pub chart_slope: f64,
    pub theta_s_pf_slope: f64,
    pub theta_s_angle_slope: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CylinderGraph {
    pub grid: CylinderGrid,
    pub t_stay: f64,
    pub k_blk: f64,
    pub max_residual: f64,
    pub max_shift: f64,
    pub converged: bool,
    pub max_chart_slope: f64,
    pub max_theta_s_pf_slope: f64,
    pub max_theta_s_angle_slope: f64,
    /// `max ‖Θ^s − θ^s_*‖` and `max ‖P^s − p^s_*‖` over the grid.
    pub max_theta_offset: f64,
    pub max_ps_offset: f64,
    #[serde(skip)]
    pub nodes: Vec<CylinderNode>,
}

impl CylinderGraph {
    /// Rows `(θ^f, p^f, t, Θ^s.., P^s.., residual)`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.nodes
            .iter()
            .map(|n| {
                let mut r = vec![n.theta_f, n.pf, n.t];
                r.extend(&n.theta_s);
                r.extend(&n.p_s);
                r.push(n.residual);
                r
            })
            .collect()
    }
}

/// Shooting problem for one Hamiltonian in one chart.
pub struct Shooter<'a> {
    pub chart: &'a Chart,
    pub ham: &'a dyn PhaseFunction,
    pub radius: f64,
    pub tol: Tolerance,
}

impl Shooter<'_> {
    pub fn flow(&self, x: &PhasePoint, duration: f64) -> Result<PhasePoint> {
        let n = x.dim();
        let mut y = [x.theta.clone(), x.p.clone()].concat();
        let bx = self.chart.h0().action_box();
        dopri5(
            |t, y, dy| {
                if !bx.contains(&y[n..]) {
                    return Err(LabError::DomainEscape(format!("orbit reached p = {:?}", &y[n..])));
                }
                hamilton_rhs(self.ham, t, y, dy);
                Ok(())
            },
            x.t,
            x.t + duration,
            &mut y,
            self.tol,
        )?;
        Ok(PhasePoint { theta: y[..n].iter().map(|&a| crate::model::wrap(a)).collect(), p: y[n..].to_vec(), t: x.t + duration })
    }

    fn point(&self, s: &ChartSample, c: &[f64; 3], z: &[f64]) -> PhasePoint {
        let ns = self.chart.ns();
        let cp = ChartPoint { x: z[..ns].to_vec(), y: z[ns..].to_vec(), big_theta: c[0], i: c[1], t: c[2] };
        self.chart.from_chart_with(s, &cp)
    }

    /// `(u(T), s(−T))` for the orbit through `(z, c)`.
    pub fn boundary_map(&self, s: &ChartSample, c: &[f64; 3], z: &[f64], t_stay: f64) -> Result<Vec<f64>> {
        let x0 = self.point(s, c, z);
        let fwd = self.chart.to_chart(&self.flow(&x0, t_stay)?)?;
        let bwd = self.chart.to_chart(&self.flow(&x0, -t_stay)?)?;
        Ok([fwd.x, bwd.y].concat())
    }

    fn jacobian(&self, s: &ChartSample, c: &[f64; 3], z: &[f64], t_stay: f64, g0: &[f64]) -> Result<DMatrix<f64>> {
        let m = z.len();
        let h = 1e-6 * self.radius.max(1e-3);
        let mut j = DMatrix::zeros(m, m);
        let mut q = z.to_vec();
        for k in 0..m {
            q[k] += h;
            let g = self.boundary_map(s, c, &q, t_stay)?;
            q[k] = z[k];
            for i in 0..m {
                j[(i, k)] = (g[i] - g0[i]) / h;
            }
        }
        Ok(j)
    }

    /// Chord-Newton on the boundary map; refreshes the Jacobian once if it stalls.
    fn newton(&self, s: &ChartSample, c: &[f64; 3], z0: &[f64], t_stay: f64, jac: &mut Option<DMatrix<f64>>, cfg: &ShootingConfig) -> Result<(Vec<f64>, usize)> {
        let mut refreshed = jac.is_none();
        let mut z = z0.to_vec();
        let mut it = 0;
        let mut prev_step = f64::INFINITY;
        loop {
            let g = match self.boundary_map(s, c, &z, t_stay) {
                Ok(g) => g,
                Err(_) if !refreshed => {
                    refreshed = true;
                    z = z0.to_vec();
                    *jac = None;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if g.iter().all(|&v| v == 0.0) {
                return Ok((z, it));
            }
            if jac.is_none() {
                *jac = Some(self.jacobian(s, c, &z, t_stay, &g)?);
            }
            let j = jac.as_ref().expect("jacobian present");
            let dz = j.clone().lu().solve(&DVector::from_column_slice(&g)).ok_or(LabError::NonConvergence("singular shooting Jacobian".into()))?;
            for (a, d) in z.iter_mut().zip(dz.iter()) {
                *a -= d;
            }
            it += 1;
            let step = dz.amax();
            // below 1e3·tol a step that no longer halves is integration noise
            if step <= cfg.newton_tol || (step <= 1e3 * cfg.newton_tol && step > 0.5 * prev_step) {
                return Ok((z, it));
            }
            prev_step = step;
            let bad = !step.is_finite() || z.iter().any(|v| v.abs() > 2.0 * self.radius) || it >= cfg.max_iter;
            if bad {
                if refreshed {
                    return Err(LabError::NonConvergence(format!("shooting stalled at node {c:?} (last step {step:e})")));
                }
                refreshed = true;
                z = z0.to_vec();
                *jac = None;
                it = 0;
            }
        }
    }

    /// Sign of the chart coordinate (`u` forward, `s` backward) when the orbit
    /// leaves the ball of the block radius, or at the end of the stay time.
    fn exit_sign(&self, s: &ChartSample, c: &[f64; 3], z: &[f64], t_stay: f64, forward: bool) -> Result<f64> {
        let mut x = self.point(s, c, z);
        let chunks = 24;
        let dt = if forward { t_stay / chunks as f64 } else { -t_stay / chunks as f64 };
        let mut v = 0.0;
        for _ in 0..chunks {
            x = self.flow(&x, dt)?;
            let cp = self.chart.to_chart(&x)?;
            v = if forward { cp.x[0] } else { cp.y[0] };
            if v.abs() > self.radius {
                break;
            }
        }
        Ok(v.signum())
    }

    /// Nested bisection for one slow dimension: `u` from the forward exit side
    /// at fixed `s`, then `s` from the backward exit side at fixed `u`.
    fn bisection_seed(&self, s: &ChartSample, c: &[f64; 3], t_stay: f64) -> Result<Vec<f64>> {
        let r = self.radius;
        let mut z = vec![0.0, 0.0];
        for _ in 0..3 {
            for (k, forward) in [(0usize, true), (1usize, false)] {
                let (mut lo, mut hi) = (-r, r);
                let mut q = z.clone();
                for _ in 0..20 {
                    q[k] = 0.5 * (lo + hi);
                    let sg = self.exit_sign(s, c, &q, t_stay, forward)?;
                    if sg == 0.0 {
                        break;
                    }
                    // orbits starting above the manifold leave through the positive side
                    if sg > 0.0 {
                        hi = q[k];
                    } else {
                        lo = q[k];
                    }
                }
                z[k] = q[k];
            }
        }
        Ok(z)
    }
}

/// Slowest hyperbolic rate `√ε min λ(Λ)` over a set of fast actions.
pub fn slowest_rate(chart: &Chart, pfs: &[f64]) -> Result<f64> {
    let mut lo = f64::INFINITY;
    for &pf in pfs {
        lo = lo.min(eig_range(&chart.sample(pf)?.lambda).0);
    }
    Ok(chart.eps.sqrt() * lo)
}

struct NodeInput<'a> {
    sample: &'a ChartSample,
    slopes: &'a ChartSlopes,
    c: [f64; 3],
    theta_f: f64,
}

fn finish_node(sh: &Shooter, inp: &NodeInput, z: Vec<f64>, shift: f64, it: usize, t_stay: f64, jac: &DMatrix<f64>, cfg: &ShootingConfig) -> Result<CylinderNode> {
    let chart = sh.chart;
    let ns = chart.ns();
    let s = inp.sample;
    let x = sh.point(s, &inp.c, &z);
    let mut node = CylinderNode {
        theta_f: inp.theta_f,
        pf: s.pf,
        t: inp.c[2],
        u: z[..ns].to_vec(),
        s: z[ns..].to_vec(),
        theta_s: x.theta[..ns].to_vec(),
        p_s: x.p[..ns].to_vec(),
        residual: 0.0,
        shift,
        chart_slope: 0.0,
        theta_s_pf_slope: 0.0,
        theta_s_angle_slope: 0.0,
        iterations: it,
    };
    if !cfg.residuals {
        return Ok(node);
    }
    // Dw = −J⁻¹ ∂G/∂c by forward differences in c
    let g0 = sh.boundary_map(s, &inp.c, &z, t_stay)?;
    let steps = [1e-5 * chart.gamma.min(1.0), 1e-5 * inp.c[1].abs().max(1.0), 1e-5];
    let mut dg = DMatrix::zeros(2 * ns, 3);
    for k in 0..3 {
        let mut c = inp.c;
        c[k] += steps[k];
        let sk;
        let sref = if k == 1 {
            sk = chart.sample(chart.eps.sqrt() * c[1])?;
            &sk
        } else {
            s
        };
        let g = sh.boundary_map(sref, &c, &z, t_stay)?;
        for i in 0..2 * ns {
            dg[(i, k)] = (g[i] - g0[i]) / steps[k];
        }
    }
    let dw = -(jac.clone().lu().solve(&dg).ok_or(LabError::NonConvergence("singular shooting Jacobian".into()))?);
    let cp = ChartPoint { x: node.u.clone(), y: node.s.clone(), big_theta: inp.c[0], i: inp.c[1], t: inp.c[2] };
    let v = chart.velocity_with(sh.ham, s, inp.slopes, &cp);
    let fc = DVector::from_column_slice(&v[2 * ns..]);
    let fus = DVector::from_column_slice(&v[..2 * ns]);
    node.residual = (fus - &dw * fc).amax();
    node.chart_slope = op_norm(&dw);
    // Θ^s = θ^s_* + ½L(w_u + w_s)
    let sum_rows = |k: usize| DVector::from_fn(ns, |i, _| dw[(i, k)] + dw[(ns + i, k)]);
    let wsum = DVector::from_fn(ns, |i, _| z[i] + z[ns + i]);
    let d_pf = DVector::from_column_slice(&inp.slopes.theta_s) + &inp.slopes.l * &wsum * 0.5 + &s.l * sum_rows(1) * (0.5 / chart.eps.sqrt());
    let d_thf = &s.l * sum_rows(0) * (0.5 * chart.gamma);
    let d_t = &s.l * sum_rows(2) * 0.5;
    node.theta_s_pf_slope = d_pf.norm();
    node.theta_s_angle_slope = d_thf.norm().max(d_t.norm());
    Ok(node)
}

/// Computes the cylinder over `grid` with the shooting method.
pub fn compute_cylinder(
    chart: &Chart,
    ham: &dyn PhaseFunction,
    cert: &BlockCertificate,
    block: &IsolatingBlock,
    grid: &CylinderGrid,
    cfg: &ShootingConfig,
) -> Result<CylinderGraph> {
    if !cert.passed {
        return Err(LabError::Precondition("cylinder requested without a passing block certificate".into()));
    }
    let ns = chart.ns();
    let pfs: Vec<f64> = (0..grid.n_pf).map(|j| grid.pf(j)).collect();
    let t_stay = cfg.stay_factor / slowest_rate(chart, &pfs)?;
    let tol = Tolerance { atol: cfg.atol, rtol: cfg.rtol, max_steps: 2_000_000, h0: 0.0 };
    let sh = Shooter { chart, ham, radius: block.radius_u.min(block.radius_s), tol };
    let rows: Vec<Vec<CylinderNode>> = pfs
        .par_iter()
        .map(|&pf| -> Result<Vec<CylinderNode>> {
            let (sample, slopes) = chart.sample_with_slopes(pf)?;
            let i = pf / chart.eps.sqrt();
            let mut out = Vec::with_capacity(grid.n_theta * grid.n_t);
            let mut jac_t = None;
            let mut jac_2t = None;
            let mut prev: Option<Vec<f64>> = None;
            for kt in 0..grid.n_t {
                for a in 0..grid.n_theta {
                    // snake order keeps neighbouring nodes adjacent
                    let a = if kt % 2 == 0 { a } else { grid.n_theta - 1 - a };
                    let theta_f = a as f64 / grid.n_theta as f64;
                    let c = [chart.gamma * theta_f, i, kt as f64 / grid.n_t as f64];
                    let guess = match &prev {
                        Some(z) => z.clone(),
                        None if ns == 1 => sh.bisection_seed(&sample, &c, t_stay)?,
                        None => vec![0.0; 2 * ns],
                    };
                    let node_err = |e: LabError| match e {
                        LabError::NonConvergence(_) | LabError::DomainEscape(_) | LabError::Domain { .. } => LabError::BlockTooTight { node: vec![theta_f, pf, c[2]] },
                        e => e,
                    };
                    let (z1, it1) = sh.newton(&sample, &c, &guess, t_stay, &mut jac_t, cfg).map_err(node_err)?;
                    let (z2, it2) = sh.newton(&sample, &c, &z1, 2.0 * t_stay, &mut jac_2t, cfg).map_err(node_err)?;
                    let shift = z1.iter().zip(&z2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    let jac = match &jac_2t {
                        Some(j) => j.clone(),
                        None => {
                            let g = sh.boundary_map(&sample, &c, &z2, 2.0 * t_stay)?;
                            sh.jacobian(&sample, &c, &z2, 2.0 * t_stay, &g)?
                        }
                    };
                    let inp = NodeInput { sample: &sample, slopes: &slopes, c, theta_f };
                    out.push(finish_node(&sh, &inp, z2.clone(), shift, it1 + it2, 2.0 * t_stay, &jac, cfg)?);
                    prev = Some(z2);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let nodes: Vec<CylinderNode> = rows.into_iter().flatten().collect();
    let fold = |f: &dyn Fn(&CylinderNode) -> f64| nodes.iter().map(f).fold(0.0, f64::max);
    let mut max_theta_offset = 0.0f64;
    let mut max_ps_offset = 0.0f64;
    for (j, &pf) in pfs.iter().enumerate() {
        let s = chart.sample(pf)?;
        for n in &nodes[j * grid.n_theta * grid.n_t..(j + 1) * grid.n_theta * grid.n_t] {
            for k in 0..ns {
                max_theta_offset = max_theta_offset.max(crate::model::wrap_centered(n.theta_s[k] - s.theta_s[k]).abs());
                max_ps_offset = max_ps_offset.max((n.p_s[k] - s.ps[k]).abs());
            }
        }
    }
    let max_shift = fold(&|n| n.shift);
    Ok(CylinderGraph {
        grid: grid.clone(),
        t_stay,
        k_blk: cert.k_blk,
        max_residual: fold(&|n| n.residual),
        max_shift,
        converged: max_shift <= cfg.doubling_tol,
        max_chart_slope: fold(&|n| n.chart_slope),
        max_theta_s_pf_slope: fold(&|n| n.theta_s_pf_slope),
        max_theta_s_angle_slope: fold(&|n| n.theta_s_angle_slope),
        max_theta_offset,
        max_ps_offset,
        nodes,
    })
}

/// Deviation of an orbit from the cylinder, measured at checkpoints by
/// re-shooting at the orbit's central coordinates.
#[derive(Clone, Debug, Serialize)]
pub struct OrbitCheck {
    pub duration: f64,
    pub deviations: Vec<(f64, f64)>,
    pub max_deviation: f64,
    /// Checkpoint at which the orbit left the block or re-shooting failed.
    pub escaped_at: Option<f64>,
    /// `√ε λ_min(Λ)·duration`: e-foldings of an off-cylinder error.
    pub growth_exponent: f64,
}

pub fn orbit_check(
    chart: &Chart,
    ham: &dyn PhaseFunction,
    block: &IsolatingBlock,
    start: &CylinderNode,
    duration: f64,
    checkpoints: usize,
    cfg: &ShootingConfig,
) -> Result<OrbitCheck> {
    let tol = Tolerance { atol: cfg.atol, rtol: cfg.rtol, max_steps: 2_000_000, h0: 0.0 };
    let sh = Shooter { chart, ham, radius: block.radius_u.min(block.radius_s), tol };
    let ns = chart.ns();
    let pfs = [start.pf];
    let t_stay = 2.0 * cfg.stay_factor / slowest_rate(chart, &pfs)?;
    let mut x = PhasePoint {
        theta: [start.theta_s.clone(), vec![start.theta_f]].concat(),
        p: [start.p_s.clone(), vec![start.pf]].concat(),
        t: start.t,
    };
    let mut deviations = Vec::new();
    let mut escaped_at = None;
    let dt = duration / checkpoints as f64;
    for k in 1..=checkpoints {
        let t = k as f64 * dt;
        let step = sh.flow(&x, dt).and_then(|y| {
            let cp = chart.to_chart(&y)?;
            let s = chart.sample(y.p[ns])?;
            let c = [cp.big_theta, cp.i, crate::model::wrap(cp.t)];
            let z0 = [cp.x.clone(), cp.y.clone()].concat();
            let mut jac = None;
            let (w, _) = sh.newton(&s, &c, &z0, t_stay, &mut jac, cfg)?;
            Ok((y, z0.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)))
        });
        match step {
            Ok((y, dev)) => {
                x = y;
                deviations.push((t, dev));
            }
            Err(_) => {
                escaped_at = Some(t);
                deviations.push((t, f64::INFINITY));
                break;
            }
        }
    }
    let max_deviation = deviations.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(OrbitCheck { duration, deviations, max_deviation, escaped_at, growth_exponent: slowest_rate(chart, &pfs)? * duration })
}
