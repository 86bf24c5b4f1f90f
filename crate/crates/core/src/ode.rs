//! Explicit integrators for smooth vector fields.

use crate::error::{LabError, Result};
use crate::model::PhaseFunction;

/// Tolerances and limits for [`dopri5`].
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
    pub h0: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { atol: 1e-12, rtol: 1e-12, max_steps: 100_000, h0: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Dormand–Prince 5(4) from `t0` to `t1` (either direction). The right-hand side
/// may fail, which aborts the integration.
pub fn dopri5<F>(mut f: F, t0: f64, t1: f64, y: &mut [f64], tol: Tolerance) -> Result<Stats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let d = y.len();
    let span = t1 - t0;
    let mut stats = Stats::default();
    if span == 0.0 {
        return Ok(stats);
    }
    let dir = span.signum();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; d]; 7];
    let mut tmp = vec![0.0; d];
    let mut ynew = vec![0.0; d];
    let mut kbuf = vec![0.0; d];
    let mut t = t0;
    f(t, y, &mut k[0])?;
    let mut h = if tol.h0 > 0.0 {
        tol.h0.min(span.abs())
    } else {
        let sc: f64 = (0..d).map(|i| tol.atol + tol.rtol * y[i].abs()).fold(f64::INFINITY, f64::min);
        let fnorm = k[0].iter().map(|x| x.abs()).fold(0.0, f64::max);
        if fnorm > 0.0 {
            (0.01 * sc.powf(0.2) / fnorm.max(1e-300)).max(1e-3 * span.abs()).min(span.abs())
        } else {
            span.abs()
        }
    };
    let mut err_prev: f64 = 1e-4;
    loop {
        if stats.accepted + stats.rejected > tol.max_steps {
            return Err(LabError::NonConvergence(format!("adaptive integrator exceeded {} steps", tol.max_steps)));
        }
        let remaining = (t1 - t) * dir;
        if remaining <= 1e-15 * span.abs() {
            return Ok(stats);
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let hs = h * dir;
        stage(&mut tmp, y, hs, &k, &[(0, A21)]);
        f(t + C2 * hs, &tmp, &mut kbuf)?;
        k[1].copy_from_slice(&kbuf);
        stage(&mut tmp, y, hs, &k, &[(0, A31), (1, A32)]);
        f(t + C3 * hs, &tmp, &mut kbuf)?;
        k[2].copy_from_slice(&kbuf);
        stage(&mut tmp, y, hs, &k, &[(0, A41), (1, A42), (2, A43)]);
        f(t + C4 * hs, &tmp, &mut kbuf)?;
        k[3].copy_from_slice(&kbuf);
        stage(&mut tmp, y, hs, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        f(t + C5 * hs, &tmp, &mut kbuf)?;
        k[4].copy_from_slice(&kbuf);
        stage(&mut tmp, y, hs, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        f(t + hs, &tmp, &mut kbuf)?;
        k[5].copy_from_slice(&kbuf);
        stage(&mut ynew, y, hs, &k, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)]);
        f(t + hs, &ynew, &mut kbuf)?;
        k[6].copy_from_slice(&kbuf);
        let mut err: f64 = 0.0;
        for i in 0..d {
            let e = hs * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            h *= 0.2;
            stats.rejected += 1;
            continue;
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + hs };
            y.copy_from_slice(&ynew);
            k.swap(0, 6);
            stats.accepted += 1;
            let fac = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h *= fac.clamp(0.2, 5.0);
            err_prev = err.max(1e-4);
            if last {
                return Ok(stats);
            }
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h < 1e-14 * span.abs() {
            return Err(LabError::NonConvergence(format!("step size underflow at t = {t}")));
        }
    }
}

fn stage(out: &mut [f64], y: &[f64], h: f64, k: &[Vec<f64>], coeffs: &[(usize, f64)]) {
    for i in 0..y.len() {
        let mut s = 0.0;
        for &(j, a) in coeffs {
            s += a * k[j][i];
        }
        out[i] = y[i] + h * s;
    }
}

/// Classical fourth-order Runge–Kutta with `steps` equal steps.
pub fn rk4<F>(mut f: F, t0: f64, t1: f64, y: &mut [f64], steps: usize) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let d = y.len();
    let h = (t1 - t0) / steps as f64;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, y, &mut k1)?;
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..d {
            tmp[i] = y[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4)?;
        for i in 0..d {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(())
}

/// Hamilton's equations `θ̇ = ∂_pH, ṗ = −∂_θH` for the state `(θ, p)` at time `t`.
pub fn hamilton_rhs(h: &dyn PhaseFunction, t: f64, y: &[f64], dy: &mut [f64]) {
    let n = y.len() / 2;
    let l = h.jet(t, &y[..n], &y[n..], 1);
    for i in 0..n {
        dy[i] = l.d_p[i];
        dy[n + i] = -l.d_theta[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let mut y = [1.0, 0.0];
        let tau = std::f64::consts::TAU;
        dopri5(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            0.0,
            tau,
            &mut y,
            Tolerance::default(),
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10);
    }

    #[test]
    fn backward_inverts_forward() {
        let f = |t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[0].sin() + t;
            dy[1] = y[0] * y[1];
            Ok(())
        };
        let mut y = [0.3, 1.0];
        dopri5(f, 0.0, 1.0, &mut y, Tolerance::default()).unwrap();
        dopri5(f, 1.0, 0.0, &mut y, Tolerance::default()).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-10 && (y[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn matches_closed_form_logistic() {
        let mut y = [0.1];
        dopri5(
            |_, y, dy| {
                dy[0] = y[0] * (1.0 - y[0]);
                Ok(())
            },
            0.0,
            5.0,
            &mut y,
            Tolerance::default(),
        )
        .unwrap();
        let exact = 1.0 / (1.0 + 9.0 * (-5.0f64).exp());
        assert!((y[0] - exact).abs() < 1e-11);
        let mut z = [0.1];
        rk4(
            |_, y, dy| {
                dy[0] = y[0] * (1.0 - y[0]);
                Ok(())
            },
            0.0,
            5.0,
            &mut z,
            400,
        )
        .unwrap();
        assert!((z[0] - exact).abs() < 1e-9);
    }

    #[test]
    fn errors_propagate() {
        let mut y = [0.0];
        let r = dopri5(|t, _, _| if t > 0.5 { Err(LabError::DomainEscape("x".into())) } else { Ok(()) }, 0.0, 1.0, &mut y, Tolerance::default());
        assert!(r.is_err());
    }
}
