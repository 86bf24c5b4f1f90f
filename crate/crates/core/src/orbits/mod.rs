//! Long-time symplectic integration, drift diagnostics and the built-in Arnold example.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::model::small::solve;
use crate::model::{ActionBox, Hamiltonian, IntegrablePart, PhaseFunction, PhasePoint, TrigPoly, MAX_2N};
use crate::nhic::Chart;
use crate::resonance::solve_p_star;


/// `½(p² + I²) + ε(cos 2πq − 1)(1 + μ(sin 2πφ + sin 2πt))` on angles `(q, φ)`,
/// actions `(p, I)` in `[−2, 2]²`. The hyperbolic point of the `q`-pendulum sits at `q = 0`.
pub fn arnold_example(eps: f64, mu: f64) -> Hamiltonian {
    let n = 2;
    let pendulum = TrigPoly::cos(n, &[1, 0, 0], 1.0).add(&TrigPoly::constant(n, -1.0));
    let forcing = TrigPoly::constant(n, 1.0).add(&TrigPoly::sin(n, &[0, 1, 0], mu)).add(&TrigPoly::sin(n, &[0, 0, 1], mu));
    let h1 = if mu == 0.0 { pendulum } else { pendulum.mul(&forcing) };
    Hamiltonian::new(IntegrablePart::quadratic(n, 2.0), h1, eps).expect("dimensions agree")
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub duration: f64,
    /// Store every `stride`-th step.
    pub stride: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Stop once the drift measured by `stop_metric` reaches this.
    pub stop_drift: Option<f64>,
    pub stop_metric: DriftMetric,
}

/// Which action displacement a drift threshold refers to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum DriftMetric {
    /// `sup‖p(t) − p(0)‖` over all actions.
    #[default]
    Full,
    /// `sup|p^f(t) − p^f(0)|`, the displacement along the resonance.
    Fast,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { dt: 1e-3, duration: 1.0, stride: 1, newton_tol: 1e-13, max_newton: 30, stop_drift: None, stop_metric: DriftMetric::Full }
    }
}

/// Sampled orbit with lifted (unwrapped) angles and absolute time.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    /// `H(x_k) + e_k − H(x_0)` with `e` the conjugate of time, so only integrator error remains.
    pub energy_defect: Vec<f64>,
    pub max_energy_defect: f64,
    /// `sup‖p(t) − p(0)‖` over every step, not only stored ones.
    pub drift: f64,
    /// `sup|p^f(t) − p^f(0)|`.
    pub fast_drift: f64,
    pub steps: usize,
    /// Time at which the actions left the box.
    pub escaped_at: Option<f64>,
}

/// One implicit-midpoint step `w = z + dt·J∇H((z+w)/2, t + dt/2)`. Returns the new
/// point and `∂_t H` at the midpoint.
pub fn midpoint_step(h: &dyn PhaseFunction, x: &PhasePoint, dt: f64, tol: f64, max_iter: usize) -> Result<(PhasePoint, f64)> {
    let n = h.dim();
    let tm = x.t + 0.5 * dt;
    let rhs = |theta: &[f64], p: &[f64], order: u8| h.jet(tm, theta, p, order);
    // explicit Euler predictor
    let j0 = rhs(&x.theta, &x.p, 2);
    let mut w: Vec<f64> = (0..n).map(|i| x.theta[i] + dt * j0.d_p[i]).chain((0..n).map(|i| x.p[i] - dt * j0.d_theta[i])).collect();
    let mut hess = j0.hess;
    let mut refreshed = false;
    let mut mid = vec![0.0; 2 * n];
    for it in 0..max_iter {
        for k in 0..n {
            mid[k] = 0.5 * (x.theta[k] + w[k]);
            mid[n + k] = 0.5 * (x.p[k] + w[n + k]);
        }
        let j = rhs(&mid[..n], &mid[n..], 1);
        let mut b = [0.0; MAX_2N];
        for k in 0..n {
            b[k] = -(w[k] - x.theta[k] - dt * j.d_p[k]);
            b[n + k] = -(w[n + k] - x.p[k] + dt * j.d_theta[k]);
        }
        // DF = I − (dt/2)·[[H_pθ, H_pp], [−H_θθ, −H_θp]]
        let mut a = [[0.0; MAX_2N]; MAX_2N];
        for r in 0..2 * n {
            a[r][r] = 1.0;
        }
        for r in 0..n {
            for c in 0..2 * n {
                a[r][c] -= 0.5 * dt * hess[n + r][c];
                a[n + r][c] += 0.5 * dt * hess[r][c];
            }
        }
        if !solve(2 * n, &mut a, &mut b) {
            return Err(LabError::Step(x.t));
        }
        // relative to the size of the lifted coordinates, which grow without bound
        let step = (0..2 * n).fold(0.0f64, |m, k| m.max(b[k].abs() / w[k].abs().max(1.0)));
        for k in 0..2 * n {
            w[k] += b[k];
        }
        if step <= tol {
            for k in 0..n {
                mid[k] = 0.5 * (x.theta[k] + w[k]);
                mid[n + k] = 0.5 * (x.p[k] + w[n + k]);
            }
            let dt_h = rhs(&mid[..n], &mid[n..], 1).d_t;
            return Ok((PhasePoint { theta: w[..n].to_vec(), p: w[n..].to_vec(), t: x.t + dt }, dt_h));
        }
        if !step.is_finite() {
            break;
        }
        // simplified Newton; refresh the Hessian once if convergence is slow
        if it == 4 && !refreshed {
            hess = rhs(&mid[..n], &mid[n..], 2).hess;
            refreshed = true;
        }
    }
    Err(LabError::Step(x.t))
}

/// Integrates with fixed `dt ≤ 1e-2`. Leaving `action_box` truncates the trajectory.
pub fn integrate(h: &dyn PhaseFunction, action_box: Option<&ActionBox>, z0: &PhasePoint, cfg: &IntegratorConfig) -> Result<Trajectory> {
    if !(cfg.dt > 0.0 && cfg.dt <= 1e-2) {
        return Err(LabError::Precondition(format!("time step {} must lie in (0, 1e-2]", cfg.dt)));
    }
    if !(cfg.duration >= 0.0) || cfg.stride == 0 {
        return Err(LabError::Precondition("duration must be non-negative and stride positive".into()));
    }
    if let Some(b) = action_box {
        b.check(&z0.p)?;
    }
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let h_start = h.value(z0.t, &z0.theta, &z0.p);
    let mut x = z0.clone();
    let mut e = 0.0;
    let mut out = Trajectory {
        times: vec![z0.t],
        points: vec![z0.clone()],
        energy_defect: vec![0.0],
        max_energy_defect: 0.0,
        drift: 0.0,
        fast_drift: 0.0,
        steps: 0,
        escaped_at: None,
    };
    let n = z0.p.len();
    for k in 1..=steps {
        let (y, dth) = midpoint_step(h, &x, cfg.dt, cfg.newton_tol, cfg.max_newton)?;
        e -= cfg.dt * dth;
        x = y;
        out.steps = k;
        let dist = x.p.iter().zip(&z0.p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        out.drift = out.drift.max(dist);
        out.fast_drift = out.fast_drift.max((x.p[n - 1] - z0.p[n - 1]).abs());
        let escaped = action_box.is_some_and(|b| !b.contains(&x.p));
        let measured = match cfg.stop_metric {
            DriftMetric::Full => out.drift,
            DriftMetric::Fast => out.fast_drift,
        };
        let stop = cfg.stop_drift.is_some_and(|d| measured >= d);
        if k % cfg.stride == 0 || k == steps || escaped || stop {
            let defect = h.value(x.t, &x.theta, &x.p) + e - h_start;
            out.max_energy_defect = out.max_energy_defect.max(defect.abs());
            out.times.push(x.t);
            out.points.push(x.clone());
            out.energy_defect.push(defect);
        }
        if escaped {
            out.escaped_at = Some(x.t);
            break;
        }
        if stop {
            break;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub drift: f64,
    pub fast_drift: f64,
    /// `max ‖p^s(t) − p^s_*(p^f(t))‖` over stored samples.
    pub max_resonance_distance: f64,
    /// `(t, max(‖x‖, ‖y‖))` in chart coordinates, when a chart is supplied.
    pub normal_distance: Option<Vec<(f64, f64)>>,
    /// Largest `|Δp^f/Δt|` between consecutive stored samples.
    pub max_fast_rate: f64,
    pub rate_bound: Option<f64>,
    pub rate_ok: Option<bool>,
}

/// Summarizes a trajectory. `rate_bound` is `ε‖∂_{θ^f}R‖_{C⁰}` when known; it is
/// compared with a 10% allowance.
pub fn drift_report(traj: &Trajectory, h0: &IntegrablePart, chart: Option<&Chart>, rate_bound: Option<f64>) -> Result<DriftReport> {
    if traj.points.is_empty() {
        return Err(LabError::Precondition("empty trajectory".into()));
    }
    let n = h0.n();
    let mut max_res = 0.0f64;
    let mut guess: Option<Vec<f64>> = None;
    for x in &traj.points {
        if let Ok(c) = solve_p_star(h0, x.p[n - 1], guess.as_deref()) {
            let d = (0..n - 1).map(|i| (x.p[i] - c.ps[i]).powi(2)).sum::<f64>().sqrt();
            max_res = max_res.max(d);
            guess = Some(c.ps);
        }
    }
    let normal_distance = chart.map(|c| {
        traj.points
            .iter()
            .filter_map(|x| {
                let mut y = x.clone();
                y.reduce();
                let cp = c.to_chart(&y).ok()?;
                let d = cp.x.iter().chain(&cp.y).fold(0.0f64, |m, v| m.max(v.abs()));
                Some((x.t, d))
            })
            .collect()
    });
    let max_fast_rate = traj
        .points
        .windows(2)
        .map(|w| ((w[1].p[n - 1] - w[0].p[n - 1]) / (w[1].t - w[0].t)).abs())
        .fold(0.0, f64::max);
    Ok(DriftReport {
        drift: traj.drift,
        fast_drift: traj.fast_drift,
        max_resonance_distance: max_res,
        normal_distance,
        max_fast_rate,
        rate_bound,
        rate_ok: rate_bound.map(|b| max_fast_rate <= 1.1 * b),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedRun {
    pub seed: PhasePoint,
    pub drift: f64,
    pub fast_drift: f64,
    pub steps: usize,
    pub max_energy_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftDemo {
    pub eps: f64,
    pub mu: f64,
    pub runs: Vec<SeedRun>,
    pub metric: DriftMetric,
    /// Index of the run with the largest drift in `metric`.
    pub best: usize,
    /// Empirical threshold the best run is compared against.
    pub threshold: f64,
    pub reached: bool,
}

/// Seeds `count` orbits of the Arnold example near the cylinder `q = p = 0`
/// (offsets below 1e-3, `I ∈ [0.05, 0.35]`) and integrates each until its drift
/// in `metric` reaches `threshold` or `cfg.duration` elapses.
pub fn drift_demo(eps: f64, mu: f64, count: usize, rng_seed: u64, threshold: f64, metric: DriftMetric, cfg: &IntegratorConfig) -> Result<DriftDemo> {
    let h = arnold_example(eps, mu);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let seeds: Vec<PhasePoint> = (0..count)
        .map(|_| PhasePoint {
            theta: vec![rng.gen_range(-1e-3..1e-3), rng.gen()],
            p: vec![rng.gen_range(-1e-3..1e-3), rng.gen_range(0.05..0.35)],
            t: 0.0,
        })
        .collect();
    let cfg = IntegratorConfig { stop_drift: Some(threshold), stop_metric: metric, stride: usize::MAX, ..cfg.clone() };
    let runs: Vec<SeedRun> = seeds
        .into_par_iter()
        .map(|seed| {
            let tr = integrate(&h, Some(h.h0.action_box()), &seed, &cfg)?;
            Ok(SeedRun { seed, drift: tr.drift, fast_drift: tr.fast_drift, steps: tr.steps, max_energy_defect: tr.max_energy_defect })
        })
        .collect::<Result<_>>()?;
    let value = |r: &SeedRun| match metric {
        DriftMetric::Full => r.drift,
        DriftMetric::Fast => r.fast_drift,
    };
    let best = (0..runs.len()).max_by(|&a, &b| value(&runs[a]).total_cmp(&value(&runs[b]))).unwrap_or(0);
    let reached = runs.get(best).is_some_and(|r| value(r) >= threshold);
    Ok(DriftDemo { eps, mu, runs, metric, best, threshold, reached })
}
