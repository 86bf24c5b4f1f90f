//! Discrete weak KAM theory on a torus grid.
//!
//! The time-one minimal action between grid nodes defines a min-plus kernel.
//! Its Lax–Oleinik fixed point gives `α(c)` and a weak KAM solution; the
//! graph of zero reduced weights gives Aubry nodes and static classes, and
//! shortest paths give the Mañé potential and the Peierls barrier.

pub mod classify;
pub mod cover;
pub mod kernel;
pub mod lagrangian;
pub mod solve;
pub mod twist;

pub use classify::{classify_cohomology, Classification, CohomologyLabel, CoverData};
pub use cover::{double_cover, lift_cohomology, local_aubry, local_potential, reduce_slow, LocalAubry, LocalPotential};
pub use kernel::{action_kernel, minimal_action, ActionKernel, KernelConfig, TorusGrid};
pub use lagrangian::{LagJet, Lagrangian, LegendreLagrangian, MechanicalLagrangian};
pub use solve::{
    barrier_by_squaring, barrier_functions, lax_oleinik, lax_oleinik_backward, mather_sets, minplus_product, peierls_barrier, solve_weak_kam, BarrierFunctions, MatherConfig, MatherData,
    PeierlsBarrier, ReducedGraph, SolveConfig, WeakKamSolution,
};
pub use twist::{aubry_orbit, cycle_rotation, non_crossing, periodic_configurations, rotation_number, Configuration, PeriodicMinimizers};

#[cfg(test)]
mod tests;
