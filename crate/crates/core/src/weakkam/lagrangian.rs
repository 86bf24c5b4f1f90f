//! Lagrangians with second derivatives, for kernel minimization.

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::model::{legendre, small, Hamiltonian, PhaseFunction, MAX_N};

/// Value and derivatives of `L(t, x, v)` up to second order.
#[derive(Clone, Copy, Debug)]
pub struct LagJet {
    pub value: f64,
    pub dx: [f64; MAX_N],
    pub dv: [f64; MAX_N],
    pub hxx: [[f64; MAX_N]; MAX_N],
    /// `∂²L/∂x_i∂v_j`.
    pub hxv: [[f64; MAX_N]; MAX_N],
    pub hvv: [[f64; MAX_N]; MAX_N],
}

impl LagJet {
    fn zero() -> Self {
        LagJet { value: 0.0, dx: [0.0; MAX_N], dv: [0.0; MAX_N], hxx: [[0.0; MAX_N]; MAX_N], hxv: [[0.0; MAX_N]; MAX_N], hvv: [[0.0; MAX_N]; MAX_N] }
    }
}

/// A Lagrangian on `𝕋^d × ℝ^d`, 1-periodic in `t`, convex in `v`.
pub trait Lagrangian: Sync {
    fn dim(&self) -> usize;
    fn jet(&self, t: f64, x: &[f64], v: &[f64]) -> Result<LagJet>;
    /// True when `L` does not depend on `x` or `t`, so kernel rows coincide.
    fn is_translation_invariant(&self) -> bool {
        false
    }
}

/// `L = ½ vᵀ M v − V(t, x)` for a Hamiltonian `½ pᵀ M⁻¹ p + V(t, x)`.
pub struct MechanicalLagrangian<'a> {
    mass: DMatrix<f64>,
    potential: &'a dyn PhaseFunction,
    scale: f64,
    free: bool,
}

impl<'a> MechanicalLagrangian<'a> {
    /// `potential` is evaluated at `p = 0` and multiplied by `scale`.
    pub fn new(inverse_mass: &DMatrix<f64>, potential: &'a dyn PhaseFunction, scale: f64) -> Result<Self> {
        let mass = inverse_mass.clone().try_inverse().ok_or_else(|| LabError::Convexity { v: vec![], residual: f64::NAN })?;
        Ok(MechanicalLagrangian { mass, potential, scale, free: scale == 0.0 })
    }

    /// From a Hamiltonian with homogeneous quadratic `H₀` and action-independent `H₁`.
    pub fn from_hamiltonian(h: &'a Hamiltonian) -> Result<Self> {
        if !h.is_mechanical() {
            return Err(LabError::Precondition("Hamiltonian is not of mechanical type".into()));
        }
        let n = h.n();
        let zero = vec![0.0; n];
        let lin = h.h0.frequency(&zero);
        if lin.iter().any(|v| v.abs() > 1e-14) {
            return Err(LabError::Precondition("H0 has a linear part".into()));
        }
        let free = h.eps == 0.0 || h.h1.is_empty();
        let mut l = Self::new(&h.h0.hessian(&zero), &h.h1, h.eps)?;
        l.free = free;
        Ok(l)
    }
}

impl Lagrangian for MechanicalLagrangian<'_> {
    fn dim(&self) -> usize {
        self.mass.nrows()
    }

    fn jet(&self, t: f64, x: &[f64], v: &[f64]) -> Result<LagJet> {
        let d = self.dim();
        let mut j = LagJet::zero();
        for a in 0..d {
            let mut mv = 0.0;
            for b in 0..d {
                mv += self.mass[(a, b)] * v[b];
                j.hvv[a][b] = self.mass[(a, b)];
            }
            j.dv[a] = mv;
            j.value += 0.5 * v[a] * mv;
        }
        if !self.free {
            let zero = [0.0; MAX_N];
            let p = self.potential.jet(t, x, &zero[..d], 2);
            j.value -= self.scale * p.value;
            for a in 0..d {
                j.dx[a] = -self.scale * p.d_theta[a];
                for b in 0..d {
                    j.hxx[a][b] = -self.scale * p.hess[a][b];
                }
            }
        }
        Ok(j)
    }

    fn is_translation_invariant(&self) -> bool {
        self.free
    }
}

/// `L(t, x, v) = sup_p p·v − H(t, x, p)` for any convex `H`, with derivatives
/// `L_x = −H_x`, `L_v = p`, `L_vv = H_pp⁻¹`, `L_xv = −H_xp H_pp⁻¹`,
/// `L_xx = −H_xx + H_xp H_pp⁻¹ H_px`.
pub struct LegendreLagrangian<'a> {
    pub h: &'a dyn PhaseFunction,
}

impl Lagrangian for LegendreLagrangian<'_> {
    fn dim(&self) -> usize {
        self.h.dim()
    }

    fn jet(&self, t: f64, x: &[f64], v: &[f64]) -> Result<LagJet> {
        let d = self.dim();
        let lg = legendre(self.h, t, x, v, None)?;
        let hj = self.h.jet(t, x, &lg.p, 2);
        // columns of H_pp⁻¹
        let mut inv = [[0.0; MAX_N]; MAX_N];
        for c in 0..d {
            let mut a = [[0.0; MAX_N]; MAX_N];
            let mut b = [0.0; MAX_N];
            for r in 0..d {
                for s in 0..d {
                    a[r][s] = hj.hpp(r, s);
                }
            }
            b[c] = 1.0;
            if !small::solve(d, &mut a, &mut b) {
                return Err(LabError::Convexity { v: v.to_vec(), residual: f64::NAN });
            }
            for r in 0..d {
                inv[r][c] = b[r];
            }
        }
        let hxp = |i: usize, k: usize| hj.hess[i][d + k];
        let mut j = LagJet::zero();
        j.value = lg.value;
        for a in 0..d {
            j.dx[a] = -hj.d_theta[a];
            j.dv[a] = lg.p[a];
            for b in 0..d {
                j.hvv[a][b] = inv[a][b];
                j.hxv[a][b] = -(0..d).map(|k| hxp(a, k) * inv[k][b]).sum::<f64>();
                let mut s = -hj.hess[a][b];
                for k in 0..d {
                    for l in 0..d {
                        s += hxp(a, k) * inv[k][l] * hxp(b, l);
                    }
                }
                j.hxx[a][b] = s;
            }
        }
        Ok(j)
    }
}
