use super::{small, PhaseFunction, MAX_N};
use crate::error::{LabError, Result};

/// Result of `sup_p [p·v − H(t, θ, p)]`.
#[derive(Clone, Debug)]
pub struct Legendre {
    pub value: f64,
    pub p: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 50;
const TOL: f64 = 1e-12;

/// Legendre transform by damped Newton on `∂_pH(p) = v`.
pub fn legendre(
    h: &dyn PhaseFunction,
    t: f64,
    theta: &[f64],
    v: &[f64],
    guess: Option<&[f64]>,
) -> Result<Legendre> {
    let n = h.dim();
    let mut p = [0.0; MAX_N];
    match guess {
        Some(g) => p[..n].copy_from_slice(g),
        None => p[..n].copy_from_slice(v),
    }
    let objective = |l: &super::Local, p: &[f64; MAX_N]| -> f64 {
        (0..n).map(|i| p[i] * v[i]).sum::<f64>() - l.value
    };
    let mut l = h.jet(t, theta, &p[..n], 2);
    let mut res = residual(&l, v, n);
    for it in 0..MAX_ITER {
        if res <= TOL {
            return Ok(Legendre { value: objective(&l, &p), p: p[..n].to_vec(), residual: res, iterations: it });
        }
        let mut a = [[0.0; MAX_N]; MAX_N];
        let mut b = [0.0; MAX_N];
        for i in 0..n {
            b[i] = v[i] - l.d_p[i];
            for j in 0..n {
                a[i][j] = l.hpp(i, j);
            }
        }
        if !small::solve(n, &mut a, &mut b) {
            break;
        }
        let f0 = objective(&l, &p);
        let mut step = 1.0;
        loop {
            let mut q = p;
            for i in 0..n {
                q[i] += step * b[i];
            }
            let lq = h.jet(t, theta, &q[..n], 2);
            let rq = residual(&lq, v, n);
            if rq < res || objective(&lq, &q) > f0 || step < 1e-6 {
                p = q;
                l = lq;
                res = rq;
                break;
            }
            step *= 0.5;
        }
    }
    if res <= TOL {
        return Ok(Legendre { value: objective(&l, &p), p: p[..n].to_vec(), residual: res, iterations: MAX_ITER });
    }
    Err(LabError::Convexity { v: v.to_vec(), residual: res })
}

fn residual(l: &super::Local, v: &[f64], n: usize) -> f64 {
    (0..n).map(|i| (l.d_p[i] - v[i]).abs()).fold(0.0, f64::max)
}
