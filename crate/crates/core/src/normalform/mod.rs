//! Resonant normal form `H∘Φ = H₀ + εZ + εR` near a single resonance.

mod cutoff;
mod generator;
mod verify;

pub use cutoff::{bump, bump_jet, Jet3};
pub use generator::{rho_k, CutoffParams, Generator, ResonantPart};
pub use verify::{symplectic_defect, parameter_advisor, verify_normal_form, Advice, NormalFormReport, SamplePlan, SampleRow};

use crate::error::{LabError, Result};
use crate::model::{wrap, Hamiltonian, PhaseFunction, PhasePoint, TrigPoly};
use crate::ode::{dopri5, Tolerance};

/// Image of a point under the time-one map of `εG`, with the energy shift
/// of the autonomized flow.
#[derive(Clone, Debug)]
pub struct Transformed {
    pub point: PhasePoint,
    pub energy_shift: f64,
    /// `∫₀¹ ({H, G} − ∂_tG)∘Φ^s ds` along the path (forward maps only).
    pub quadrature: f64,
}

/// Generator, averaged potential and the transform they define.
#[derive(Clone, Debug)]
pub struct NormalForm {
    pub h: Hamiltonian,
    pub z: TrigPoly,
    pub generator: Generator,
    pub resonant: ResonantPart,
    pub tol: Tolerance,
}

impl NormalForm {
    pub fn build(h: &Hamiltonian, k_max: i64, beta: f64) -> Result<NormalForm> {
        if !(beta > 0.0 && h.eps > 0.0) {
            return Err(LabError::Precondition("beta and epsilon must be positive".into()));
        }
        let params = CutoffParams { k_max, beta, eps: h.eps };
        Ok(NormalForm {
            h: h.clone(),
            z: h.h1.resonant_average(),
            generator: Generator::build(&h.h0, &h.h1, params),
            resonant: ResonantPart::new(&h.h0, &h.h1, params),
            tol: Tolerance::default(),
        })
    }

    pub fn params(&self) -> CutoffParams {
        self.generator.params()
    }

    fn flow(&self, x: &PhasePoint, direction: f64, with_quadrature: bool) -> Result<Transformed> {
        let n = x.dim();
        let eps = self.h.eps;
        let t = x.t;
        let mut y = vec![0.0; 2 * n + 2];
        y[..n].copy_from_slice(&x.theta);
        y[n..2 * n].copy_from_slice(&x.p);
        if self.generator.is_zero() {
            return Ok(Transformed { point: x.clone(), energy_shift: 0.0, quadrature: 0.0 });
        }
        let bx = self.h.h0.action_box();
        let rhs = |_s: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            let (th, p) = (&y[..n], &y[n..2 * n]);
            if !bx.contains(p) {
                return Err(LabError::DomainEscape(format!("normal-form flow reached p = {p:?}")));
            }
            let g = self.generator.jet(t, th, p, 1);
            for i in 0..n {
                dy[i] = direction * eps * g.d_p[i];
                dy[n + i] = -direction * eps * g.d_theta[i];
            }
            dy[2 * n] = -direction * eps * g.d_t;
            dy[2 * n + 1] = if with_quadrature {
                let hj = self.h.jet(t, th, p, 1);
                (0..n).map(|i| hj.d_theta[i] * g.d_p[i] - hj.d_p[i] * g.d_theta[i]).sum::<f64>() - g.d_t
            } else {
                0.0
            };
            Ok(())
        };
        dopri5(rhs, 0.0, 1.0, &mut y, self.tol)?;
        let point = PhasePoint { theta: y[..n].iter().map(|&a| wrap(a)).collect(), p: y[n..2 * n].to_vec(), t };
        if !bx.contains(&point.p) {
            return Err(LabError::DomainEscape(format!("normal-form flow reached p = {:?}", point.p)));
        }
        Ok(Transformed { point, energy_shift: y[2 * n], quadrature: y[2 * n + 1] })
    }

    /// `Φ(x)`.
    pub fn phi(&self, x: &PhasePoint) -> Result<Transformed> {
        self.flow(x, 1.0, true)
    }

    /// `Φ⁻¹(x)`.
    pub fn phi_inv(&self, x: &PhasePoint) -> Result<Transformed> {
        self.flow(x, -1.0, false)
    }

    /// `R(x)` from the path integral of the Lie derivative; accurate independently of `ε`.
    pub fn remainder(&self, x: &PhasePoint) -> Result<f64> {
        let tr = self.phi(x)?;
        Ok(self.remainder_from(x, &tr))
    }

    fn remainder_from(&self, x: &PhasePoint, tr: &Transformed) -> f64 {
        self.h.h1.value(x.t, &x.theta, &x.p) - self.z.value(x.t, &x.theta, &x.p) + tr.quadrature
    }

    /// `R(x) = (H(Φx) + Δe − H₀(x) − εZ(x))/ε`, evaluated directly.
    pub fn remainder_direct(&self, x: &PhasePoint) -> Result<f64> {
        let tr = self.phi(x)?;
        let y = &tr.point;
        let eps = self.h.eps;
        let hy = self.h.value(y.t, &y.theta, &y.p);
        let base = self.h.h0.value_at(&x.p) + eps * self.z.value(x.t, &x.theta, &x.p);
        Ok((hy + tr.energy_shift - base) / eps)
    }
}

#[cfg(test)]
mod tests;
