//! Normally hyperbolic invariant cylinder: slow–fast chart, isolating-block
//! certificate and the cylinder itself as a graph.
//!
//! The chart follows a *maximum* of the averaged potential (where `−∂²Z` is
//! positive definite), which is what makes the slow fixed point hyperbolic.

mod block;
mod chart;
mod cylinder;
pub mod matrix;

pub use block::{certify_block, fd_steps, jacobian, BlockCertificate, BlockField, ChartField, ExtendedField, IsolatingBlock, OffBlocks};
pub use chart::{chart_matrices, Chart, ChartDefects, ChartPoint, ChartSample, ChartSlopes, HessianPair};
pub use cylinder::{compute_cylinder, orbit_check, slowest_rate, CylinderGraph, CylinderGrid, CylinderNode, OrbitCheck, Shooter, ShootingConfig};

/// `Θ = γθ^f` with `γ = √δ`, floored so the chart stays invertible when `δ = 0`.
pub fn default_gamma(delta: f64) -> f64 {
    delta.max(0.0).sqrt().max(1e-6)
}

/// Block radius: the log-midpoint of `[λ^{-3/4}δ + λ^{-1/2}√ε, 2λ^{5/4}]`
/// (the upper end when the window is empty).
pub fn default_radius(lambda: f64, delta: f64, eps: f64) -> f64 {
    let lo = lambda.powf(-0.75) * delta + lambda.powf(-0.5) * eps.sqrt();
    let hi = 2.0 * lambda.powf(1.25);
    if lo <= hi {
        (lo * hi).sqrt()
    } else {
        hi
    }
}

/// Block over the fast-action interval `[a₋, a₊]`: `I ∈ [(a₋ − λ/2)/√ε, (a₊ + λ/2)/√ε]`
/// with margin `σ = λ/(2√ε)`.
pub fn block_for(ns: usize, (a_lo, a_hi): (f64, f64), lambda: f64, eps: f64, radius: f64, gamma: f64, density: usize) -> IsolatingBlock {
    let r = eps.sqrt();
    IsolatingBlock {
        ns,
        radius_u: radius,
        radius_s: radius,
        i_lo: (a_lo - 0.5 * lambda) / r,
        i_hi: (a_hi + 0.5 * lambda) / r,
        sigma: 0.5 * lambda / r,
        theta_period: gamma,
        density,
    }
}
