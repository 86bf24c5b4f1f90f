//! Double covers, slow reductions and localized potentials.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use super::kernel::{action_kernel, ActionKernel, KernelConfig};
use super::lagrangian::MechanicalLagrangian;
use super::solve::{mather_sets, solve_weak_kam, MatherConfig, MatherData, SolveConfig, WeakKamSolution};
use crate::error::{LabError, Result};
use crate::model::{ActionBox, Hamiltonian, IntegrablePart, Local, Mode, PhaseFunction, Poly, TrigPoly};

/// `H̃(ψ, p̃) = H(ξ(ψ), p̃ / 2)` with `ξ` doubling angle `slot`. Modes `k_slot`
/// become `2k_slot`; the action in that slot is halved inside every coefficient.
pub fn double_cover(h: &Hamiltonian, slot: usize) -> Result<Hamiltonian> {
    let n = h.n();
    if slot >= n {
        return Err(LabError::Dimension(format!("no angle {slot} in dimension {n}")));
    }
    let mut s = vec![1.0; n];
    s[slot] = 0.5;
    let h0 = &h.h0;
    let bx = h0.action_box();
    let (mut lo, mut hi) = (bx.lo.clone(), bx.hi.clone());
    lo[slot] *= 2.0;
    hi[slot] *= 2.0;
    // eigenvalues of the Hessian shrink by at most 4
    let lifted0 = IntegrablePart::new(h0.poly().rescale_vars(&s), 4.0 * h0.convexity(), ActionBox::new(lo, hi)?)?;
    let h1 = h.h1.map_modes(|m| {
        let mut k = m.k.clone();
        k[slot] *= 2;
        Mode { k, coeff: m.coeff.rescale_vars(&s) }
    })?;
    Hamiltonian::new(lifted0, h1, h.eps)
}

/// Cohomology on the cover: the pullback of `c·dθ` under `θ_slot = 2ψ`.
pub fn lift_cohomology(c: &[f64], slot: usize) -> Vec<f64> {
    let mut out = c.to_vec();
    out[slot] *= 2.0;
    out
}

/// Grid node `ψ` of a cover of resolution `2N` lying over node `θ` of resolution `N`.
pub fn cover_preimages(theta: usize, n: usize) -> [usize; 2] {
    [theta, theta + n]
}

/// One-degree-of-freedom system for the slow angle at fixed fast action `c_f`,
/// valid when `H = ½|p|² + εZ(θ_s, p_f)` with `Z` independent of `θ_f`, `t`
/// and `p_s`. Then `α(c_s, c_f) = ½c_f² + α_red(c_s)` exactly.
pub fn reduce_slow(h: &Hamiltonian, c_f: f64) -> Result<Hamiltonian> {
    if h.n() != 2 {
        return Err(LabError::Dimension("slow reduction needs two degrees of freedom".into()));
    }
    let zero = [0.0, 0.0];
    let hess = h.h0.hessian(&zero);
    let lin = h.h0.frequency(&zero);
    let half_norm = (hess[(0, 0)] - 1.0).abs() + (hess[(1, 1)] - 1.0).abs() + hess[(0, 1)].abs();
    if !h.h0.is_quadratic() || half_norm > 1e-14 || lin.iter().any(|v| v.abs() > 1e-14) {
        return Err(LabError::Precondition("slow reduction needs H0 = ½|p|²".into()));
    }
    let mut modes = Vec::new();
    for m in h.h1.modes() {
        if m.k[1] != 0 || m.k[2] != 0 {
            return Err(LabError::Precondition("perturbation depends on the fast angle or on time".into()));
        }
        if m.coeff.terms().iter().any(|(e, c)| e[0] != 0 && c.norm() != 0.0) {
            return Err(LabError::Precondition("perturbation depends on the slow action".into()));
        }
        let v = m.coeff.eval(&[0.0, c_f]);
        modes.push(Mode { k: vec![m.k[0], 0], coeff: Poly::constant(1, v) });
    }
    let r = h.h0.action_box().hi[0].abs().max(h.h0.action_box().lo[0].abs());
    Hamiltonian::new(IntegrablePart::quadratic(1, r), TrigPoly::new(1, h.h1.smoothness(), modes)?, h.eps)
}

/// `s ↦ 6s⁵ − 15s⁴ + 10s³` on `[0, 1]`, clamped.
fn smoothstep(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let s2 = s * s;
    (s2 * s * (10.0 - 15.0 * s + 6.0 * s2), 30.0 * s2 * (1.0 - s) * (1.0 - s), 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s))
}

/// Signed distance on the circle, in `(−½, ½]`.
fn circle_offset(x: f64) -> f64 {
    let d = x - x.round();
    if d <= -0.5 {
        d + 1.0
    } else {
        d
    }
}

/// Potential on the circle equal to `Z` near `center` and to a cosine cap
/// `Q = Z(center) − C(1 − cos 2πΔ)/(2π²)` outside `ρ̄`, blended by a quintic
/// step between `ρ₀` and `ρ̄`.
#[derive(Clone, Debug, Serialize)]
pub struct LocalPotential {
    #[serde(skip)]
    base: TrigPoly,
    pub center: f64,
    pub peak: f64,
    pub cap: f64,
    pub rho0: f64,
    pub rho_bar: f64,
}

impl LocalPotential {
    fn q_jet(&self, d: f64) -> (f64, f64, f64) {
        let a = TAU * d;
        let k = self.cap / (2.0 * PI * PI);
        (self.peak - k * (1.0 - a.cos()), -k * TAU * a.sin(), -k * TAU * TAU * a.cos())
    }

    fn z_jet(&self, x: f64) -> (f64, f64, f64) {
        let l = self.base.jet(0.0, &[x], &[0.0], 2);
        (l.value, l.d_theta[0], l.hess[0][0])
    }

    /// Value, first and second derivative at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let d = circle_offset(x - self.center);
        let (z, z1, z2) = self.z_jet(x);
        let w = self.rho_bar - self.rho0;
        let (f, f1, f2) = smoothstep((d.abs() - self.rho0) / w);
        if f == 0.0 && f1 == 0.0 {
            return if d.abs() <= self.rho0 { (z, z1, z2) } else { self.q_jet(d) };
        }
        let sg = d.signum();
        let (p1, p2) = (f1 * sg / w, f2 / (w * w));
        let (q, q1, q2) = self.q_jet(d);
        let diff = (q - z, q1 - z1, q2 - z2);
        (z + f * diff.0, z1 + p1 * diff.0 + f * diff.1, z2 + p2 * diff.0 + 2.0 * p1 * diff.1 + f * diff.2)
    }
}

impl PhaseFunction for LocalPotential {
    fn dim(&self) -> usize {
        1
    }

    fn jet(&self, _t: f64, theta: &[f64], _p: &[f64], order: u8) -> Local {
        let (v, d1, d2) = self.eval(theta[0]);
        let mut l = Local::zero(1);
        l.value = v;
        if order >= 1 {
            l.d_theta[0] = d1;
        }
        if order >= 2 {
            l.hess[0][0] = d2;
        }
        l
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModificationCheck {
    /// `max |Z_j − Z|` on the `ρ₀`-ball.
    pub inner_mismatch: f64,
    /// `max (Z_j − Z)`, must be `≤ 0`.
    pub excess: f64,
    /// `min [Z_j(center) − Z_j(θ) − (b/2)Δ²]`, must be `≥ 0`.
    pub quadratic_margin: f64,
    /// `max Z_j` away from the center, relative to the peak.
    pub unique_peak_margin: f64,
}

/// Builds the localized potential around the local maximum `center` of the
/// one-dimensional `z` and checks its defining inequalities on a fine sample.
pub fn local_potential(z: &TrigPoly, center: f64, b: f64, rho0: f64, rho_bar: f64) -> Result<(LocalPotential, ModificationCheck)> {
    if z.n() != 1 {
        return Err(LabError::Dimension("localized potential is built in one slow angle".into()));
    }
    if !(0.0 < rho0 && rho0 < rho_bar && rho_bar < 0.5 && b > 0.0) {
        return Err(LabError::Precondition(format!("need 0 < ρ₀ < ρ̄ < ½ and b > 0 (got {rho0}, {rho_bar}, {b})")));
    }
    let zc = |x: f64| z.value(0.0, &[x], &[0.0]);
    let peak = zc(center);
    // smallest cap keeping Q below Z outside ρ₀, and at least 1.25 b for the quadratic bound
    let samples = 4096;
    let mut cap = 1.25 * b;
    for i in 0..samples {
        let d = -0.5 + (i as f64 + 0.5) / samples as f64;
        if d.abs() < rho0 {
            continue;
        }
        let bump = (1.0 - (TAU * d).cos()) / (2.0 * PI * PI);
        cap = cap.max((peak - zc(center + d)) / bump * 1.0);
    }
    let pot = LocalPotential { base: z.clone(), center, peak, cap: cap * 1.05 + 1e-12, rho0, rho_bar };
    let mut chk = ModificationCheck { inner_mismatch: 0.0, excess: f64::NEG_INFINITY, quadratic_margin: f64::INFINITY, unique_peak_margin: f64::INFINITY };
    for i in 0..=samples {
        let d = -0.5 + i as f64 / samples as f64;
        let x = center + d;
        let (zj, zv) = (pot.eval(x).0, zc(x));
        if d.abs() <= rho0 {
            chk.inner_mismatch = chk.inner_mismatch.max((zj - zv).abs());
        }
        chk.excess = chk.excess.max(zj - zv);
        chk.quadratic_margin = chk.quadratic_margin.min(peak - zj - 0.5 * b * d * d);
        if d.abs() >= rho0 {
            chk.unique_peak_margin = chk.unique_peak_margin.min(peak - zj);
        }
    }
    if chk.inner_mismatch > 1e-13 {
        return Err(LabError::Modification(format!("agreement on the inner ball (mismatch {:e})", chk.inner_mismatch)));
    }
    if chk.excess > 1e-13 {
        return Err(LabError::Modification(format!("Z_j ≤ Z (excess {:e})", chk.excess)));
    }
    if chk.quadratic_margin < -1e-13 {
        return Err(LabError::Modification(format!("the quadratic peak bound (margin {:e}); shrink ρ̄ or b", chk.quadratic_margin)));
    }
    Ok((pot, chk))
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalAubry {
    pub potential: LocalPotential,
    pub check: ModificationCheck,
    pub alpha: f64,
    pub solution: WeakKamSolution,
    pub mather: MatherData,
    /// Largest circle distance from the center among Aubry nodes.
    pub aubry_radius: f64,
}

/// Local critical value and Aubry set of `½p² + ε Z_j` on a one-dimensional grid.
pub fn local_aubry(h_red: &Hamiltonian, center: f64, b: f64, radii: (f64, f64), c: f64, kcfg: &KernelConfig, scfg: &SolveConfig) -> Result<LocalAubry> {
    if h_red.n() != 1 || !h_red.is_mechanical() {
        return Err(LabError::Precondition("local Aubry sets are computed for one-degree-of-freedom mechanical systems".into()));
    }
    let (pot, check) = local_potential(&h_red.h1, center, b, radii.0, radii.1)?;
    let lag = MechanicalLagrangian::new(&h_red.h0.hessian(&[0.0]), &pot, h_red.eps)?;
    let kernel: ActionKernel = action_kernel(&lag, &[c], kcfg)?;
    let solution = solve_weak_kam(&kernel, scfg)?;
    let mather = mather_sets(&kernel, &solution, &MatherConfig::default());
    let aubry_radius = mather.aubry.iter().map(|&x| circle_offset(kernel.grid.coords(x)[0] - center).abs()).fold(0.0, f64::max);
    Ok(LocalAubry { potential: pot, check, alpha: solution.alpha, solution, mather, aubry_radius })
}
