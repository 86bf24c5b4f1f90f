use std::f64::consts::TAU;

use proptest::prelude::*;

use super::solve::dense_kernel;
use super::*;
use crate::model::{Hamiltonian, IntegrablePart, PhaseFunction, TrigPoly};

fn pendulum(eps: f64) -> Hamiltonian {
    Hamiltonian::new(IntegrablePart::quadratic(1, 3.0), TrigPoly::cos(1, &[1, 0], 1.0), eps).unwrap()
}

fn free() -> Hamiltonian {
    Hamiltonian::new(IntegrablePart::quadratic(1, 3.0), TrigPoly::zero(1), 0.0).unwrap()
}

fn cfg1(n: usize, knots: usize, cap: f64) -> KernelConfig {
    KernelConfig { n, knots, center: vec![0.0], cap: vec![cap] }
}

fn kernel_of(h: &Hamiltonian, c: f64, cfg: &KernelConfig) -> ActionKernel {
    let l = MechanicalLagrangian::from_hamiltonian(h).unwrap();
    action_kernel(&l, &[c], cfg).unwrap()
}

fn solve(k: &ActionKernel) -> WeakKamSolution {
    solve_weak_kam(k, &SolveConfig::default()).unwrap()
}

/// `∫ √(2ε(1 − cos 2πs)) ds` from 0 to `x`, by composite Simpson.
fn separatrix_action(eps: f64, x: f64) -> f64 {
    let m = 2000;
    let f = |s: f64| (2.0 * eps * (1.0 - (TAU * s).cos())).max(0.0).sqrt();
    let h = x / m as f64;
    (0..=m).map(|i| f(i as f64 * h) * if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 }).sum::<f64>() * h / 3.0
}

#[test]
fn straight_lines_give_the_free_kernel() {
    let k = kernel_of(&free(), 0.0, &cfg1(16, 3, 0.5));
    assert_eq!(k.action[..k.nd()], k.action[5 * k.nd()..6 * k.nd()]);
    for x in [0, 5] {
        for (i, d) in k.displacements.iter().enumerate() {
            let v = d[0] as f64 / 16.0;
            assert!((k.entry(x, i) - 0.5 * v * v).abs() < 1e-14);
        }
    }
}

#[test]
fn rest_entries_are_below_the_constant_curve() {
    let eps = 0.05;
    let h = pendulum(eps);
    let k = kernel_of(&h, 0.0, &cfg1(16, 4, 0.5));
    let rest = k.rest().unwrap();
    for x in 0..16 {
        let theta = x as f64 / 16.0;
        assert!(k.entry(x, rest) <= -eps * (TAU * theta).cos() + 1e-14);
    }
    // the maximum of the potential is a rest point
    assert!((k.entry(0, rest) + eps).abs() < 1e-14);
}

#[test]
fn cohomology_shifts_entries_by_the_displacement() {
    let k0 = kernel_of(&pendulum(0.05), 0.0, &cfg1(12, 3, 0.5));
    let k1 = k0.with_cohomology(&[0.37]);
    for x in 0..12 {
        for i in 0..k0.nd() {
            let shift = 0.37 * k0.displacements[i][0] as f64 / 12.0;
            assert!((k0.entry(x, i) - k1.entry(x, i) - shift).abs() < 1e-15);
        }
    }
}

#[test]
fn knot_refinement_converges() {
    let h = pendulum(0.005);
    let (a, b) = (kernel_of(&h, 0.0, &cfg1(16, 8, 0.3)), kernel_of(&h, 0.0, &cfg1(16, 16, 0.3)));
    let worst = a.action.iter().zip(&b.action).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst:e}");
}

#[test]
fn dense_knots_match_an_independent_minimizer() {
    // gradient descent on a fine uniform discretization of the same curve problem
    let eps = 0.05;
    let (x0, x1) = (0.1, 0.35);
    let m = 64;
    let l = |x: f64, v: f64| 0.5 * v * v - eps * (TAU * x).cos();
    let mut y: Vec<f64> = (0..=m).map(|i| x0 + (x1 - x0) * i as f64 / m as f64).collect();
    let dt = 1.0 / m as f64;
    for _ in 0..200_000 {
        let mut g = vec![0.0; m + 1];
        for i in 1..m {
            g[i] = (2.0 * y[i] - y[i - 1] - y[i + 1]) / dt + dt * eps * TAU * (TAU * y[i]).sin();
        }
        for i in 1..m {
            y[i] -= 0.4 * dt * g[i];
        }
    }
    let kinetic: f64 = (0..m).map(|i| dt * l(0.0, (y[i + 1] - y[i]) / dt)).sum::<f64>() + eps;
    let potential: f64 = (0..=m).map(|i| if i == 0 || i == m { 0.5 } else { 1.0 } * dt * eps * (TAU * y[i]).cos()).sum();
    let oracle = kinetic - potential;
    let h = pendulum(eps);
    let lag = MechanicalLagrangian::from_hamiltonian(&h).unwrap();
    let (s, _) = minimal_action(&lag, &[x0], &[x1], 8).unwrap();
    assert!((s - oracle).abs() < 5e-5, "{s} vs {oracle}");
}

#[test]
fn legendre_and_mechanical_lagrangians_agree() {
    let h = pendulum(0.05);
    let mech = MechanicalLagrangian::from_hamiltonian(&h).unwrap();
    let leg = LegendreLagrangian { h: &h };
    for &(t, x, v) in &[(0.0, 0.1, 0.3), (0.4, 0.7, -0.2)] {
        let (a, b) = (mech.jet(t, &[x], &[v]).unwrap(), leg.jet(t, &[x], &[v]).unwrap());
        assert!((a.value - b.value).abs() < 1e-10);
        assert!((a.dx[0] - b.dx[0]).abs() < 1e-9 && (a.dv[0] - b.dv[0]).abs() < 1e-9);
        assert!((a.hxx[0][0] - b.hxx[0][0]).abs() < 1e-8 && (a.hvv[0][0] - b.hvv[0][0]).abs() < 1e-8);
    }
}

#[test]
fn zero_start_on_the_free_kernel_stays_zero() {
    let k = kernel_of(&free(), 0.0, &cfg1(8, 2, 0.5));
    assert!(lax_oleinik(&[0.0; 8], &k).iter().all(|v| *v == 0.0));
}

#[test]
fn two_steps_equal_the_squared_kernel() {
    let k = kernel_of(&pendulum(0.1), 0.2, &cfg1(10, 3, 0.4));
    let g = dense_kernel(&k, 0.0);
    let g2 = minplus_product(&g, &g);
    let u: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
    let twice = lax_oleinik(&lax_oleinik(&u, &k), &k);
    for y in 0..10 {
        let direct = (0..10).map(|x| u[x] + g2[x][y]).fold(f64::INFINITY, f64::min);
        assert!((twice[y] - direct).abs() < 1e-12);
    }
    // (G^2 ⊗ G) = (G ⊗ G^2) = G^3
    let (left, right) = (minplus_product(&g2, &g), minplus_product(&g, &g2));
    for (a, b) in left.iter().flatten().zip(right.iter().flatten()) {
        assert!((a - b).abs() <= 1e-12 || (a.is_infinite() && b.is_infinite()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lax_oleinik_is_monotone_and_commutes_with_constants(
        u in prop::collection::vec(-1.0f64..1.0, 8),
        bump in prop::collection::vec(0.0f64..0.5, 8),
        shift in -3.0f64..3.0,
    ) {
        let k = kernel_of(&pendulum(0.1), 0.3, &cfg1(8, 2, 0.5));
        let v: Vec<f64> = u.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let (tu, tv) = (lax_oleinik(&u, &k), lax_oleinik(&v, &k));
        for i in 0..8 {
            prop_assert!(tu[i] <= tv[i] + 1e-15);
        }
        let shifted: Vec<f64> = u.iter().map(|a| a + shift).collect();
        for (a, b) in lax_oleinik(&shifted, &k).iter().zip(&tu) {
            prop_assert!((a - b - shift).abs() < 1e-12);
        }
    }
}

#[test]
fn integrable_critical_value_has_exact_grid_error() {
    let c = 1.0 / 3.0;
    for n in [32usize, 64] {
        let cfg = KernelConfig { n, knots: 0, center: vec![c], cap: vec![0.25] };
        let k = kernel_of(&free(), c, &cfg);
        let s = solve(&k);
        let expect = 0.5 * c * c - 1.0 / (18.0 * (n * n) as f64);
        assert!((s.alpha - expect).abs() < 1e-12, "N={n}: {} vs {expect}", s.alpha);
        assert!(s.residual <= 1e-9);
        let m = mather_sets(&k, &s, &MatherConfig::default());
        assert_eq!(m.aubry.len(), n);
        assert_eq!(m.calibrated.len(), n);
    }
}

#[test]
fn integrable_rest_class_has_constant_solution() {
    let k = kernel_of(&free(), 0.0, &cfg1(16, 0, 0.5));
    let s = solve(&k);
    assert!(s.alpha.abs() < 1e-15 && s.u.iter().all(|v| v.abs() < 1e-12));
    let m = mather_sets(&k, &s, &MatherConfig::default());
    assert_eq!(m.aubry.len(), 16);
    assert!(m.max_momentum_offset < 1e-10);
    assert_eq!(m.static_classes.len(), 16);
}

#[test]
fn pendulum_critical_value_and_aubry_set() {
    let eps = 0.05;
    let k = kernel_of(&pendulum(eps), 0.0, &cfg1(32, 4, 0.4));
    let s = solve(&k);
    assert!((s.alpha - eps).abs() < 1e-9, "{}", s.alpha);
    let m = mather_sets(&k, &s, &MatherConfig::default());
    assert_eq!(m.aubry, vec![0]);
    assert_eq!(m.static_classes, vec![vec![0]]);
    assert!(m.calibrated.contains(&0));
    // vertical bound with A = 1, one degree of freedom
    assert!(m.max_momentum_offset <= 6.0 * eps.sqrt(), "{}", m.max_momentum_offset);
    assert!(m.sensitivity.0 <= m.calibrated.len() && m.calibrated.len() <= m.sensitivity.1);
}

#[test]
fn barrier_vanishes_on_the_aubry_set_and_is_a_pseudometric() {
    let k = kernel_of(&pendulum(0.05), 0.1, &cfg1(16, 3, 0.4));
    let s = solve(&k);
    let m = mather_sets(&k, &s, &MatherConfig::default());
    let all: Vec<usize> = (0..16).collect();
    let h = peierls_barrier(&k, &s, &m.aubry, &all).unwrap();
    for &a in &m.aubry {
        assert!(h[a][a].abs() < 1e-9, "{}", h[a][a]);
    }
    for x in 0..16 {
        for y in 0..16 {
            assert!(h[x][y] + h[y][x] >= -1e-9);
            for z in (0..16).step_by(3) {
                assert!(h[x][z] <= h[x][y] + h[y][z] + 1e-9);
            }
        }
    }
    let sq = barrier_by_squaring(&k, s.alpha, 1e-12, 40).unwrap();
    let worst = (0..16).flat_map(|x| (0..16).map(move |y| (x, y))).map(|(x, y)| (sq[x][y] - h[x][y]).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn pendulum_barrier_approaches_the_separatrix_action() {
    let eps = 0.05;
    let run = |n: usize| {
        let k = kernel_of(&pendulum(eps), 0.0, &cfg1(n, 4, 0.4));
        let s = solve(&k);
        let m = mather_sets(&k, &s, &MatherConfig::default());
        let h = peierls_barrier(&k, &s, &m.aubry, &[0]).unwrap();
        h[0][n / 4]
    };
    let (coarse, fine) = (run(32), run(64));
    let oracle = separatrix_action(eps, 0.25);
    let grid_error = (coarse - fine).abs();
    assert!((coarse - oracle).abs() <= 2.0 * grid_error, "coarse {coarse}, fine {fine}, oracle {oracle}");
}

#[test]
fn integrable_periodic_minimizers_are_uniform() {
    let n = 24;
    let cfg = KernelConfig { n, knots: 0, center: vec![0.5], cap: vec![0.6] };
    let k = kernel_of(&free(), 0.0, &cfg);
    for &(p, q) in &[(1i64, 3usize), (2, 3), (1, 4), (3, 8)] {
        let r = periodic_configurations(&k, p, q, 1e-12).unwrap();
        let w = p as f64 / q as f64;
        assert!((r.min_action - q as f64 * 0.5 * w * w).abs() < 1e-12);
        for c in &r.configurations {
            for i in 0..q {
                assert_eq!(c.at(i + 1, p, n) - c.at(i, p, n), p * n as i64 / q as i64);
            }
        }
        for a in &r.configurations {
            for b in &r.configurations {
                assert!(non_crossing(a, b, p, n));
            }
        }
    }
}

#[test]
fn crossing_configurations_are_detected() {
    let a = Configuration { cells: vec![0, 5], action: 0.0 };
    let b = Configuration { cells: vec![1, 4], action: 0.0 };
    assert!(!non_crossing(&a, &b, 1, 10));
    assert!(non_crossing(&a, &a, 1, 10) && non_crossing(&b, &b, 1, 10));
}

#[test]
fn rotation_of_a_periodic_orbit_is_exact() {
    let x: Vec<f64> = (0..=40).map(|i| (i * 3 / 7) as f64).collect();
    let r = rotation_number(&x).unwrap();
    assert!((r - 3.0 / 7.0).abs() <= 1.0 / 20.0);
    let y: Vec<f64> = (0..=42).map(|i| (3 * i / 7) as f64 + 0.5).collect();
    assert!((rotation_number(&y).unwrap() - 3.0 / 7.0).abs() < 1e-12);
}

#[test]
fn double_cover_doubles_slow_modes() {
    let h = Hamiltonian::new(IntegrablePart::quadratic(2, 1.0), TrigPoly::cos(2, &[1, 1, 0], 1.0), 0.1).unwrap();
    let g = double_cover(&h, 0).unwrap();
    for &(psi, f, ps, pf) in &[(0.1, 0.3, 0.4, -0.2), (0.77, 0.05, -1.1, 0.3)] {
        let lifted = g.value(0.0, &[psi, f], &[ps, pf]);
        let base = h.value(0.0, &[2.0 * psi, f], &[ps / 2.0, pf]);
        assert!((lifted - base).abs() < 1e-14);
    }
    assert_eq!(lift_cohomology(&[0.3, 0.1], 0), vec![0.6, 0.1]);
}

#[test]
fn cover_splits_the_hyperbolic_point_and_keeps_alpha() {
    let eps = 0.05;
    let h = pendulum(eps);
    let g = double_cover(&h, 0).unwrap();
    let base = kernel_of(&h, 0.0, &cfg1(16, 4, 0.4));
    let lifted = kernel_of(&g, 0.0, &cfg1(32, 4, 0.8));
    let (sb, sl) = (solve(&base), solve(&lifted));
    assert!((sb.alpha - sl.alpha).abs() < 1e-9);
    let ml = mather_sets(&lifted, &sl, &MatherConfig::default());
    assert_eq!(ml.static_classes, vec![vec![0], vec![16]]);
}

#[test]
fn local_potential_keeps_the_peak_and_caps_the_rest() {
    let z = TrigPoly::cos(1, &[2, 0], 1.0).add(&TrigPoly::cos(1, &[1, 0], 0.2));
    let (pot, chk) = local_potential(&z, 0.0, 1.0, 0.08, 0.16).unwrap();
    assert_eq!(chk.inner_mismatch, 0.0);
    assert!(chk.excess <= 0.0 && chk.quadratic_margin >= 0.0);
    for x in [0.0, 0.03, -0.07] {
        assert_eq!(pot.eval(x).0, z.value(0.0, &[x], &[0.0]));
    }
    // second peak at ½ is removed
    assert!(pot.eval(0.5).0 < z.value(0.0, &[0.5], &[0.0]) - 0.1);
    // quintic blend keeps the derivative consistent
    let x = 0.12;
    let fd = (pot.eval(x + 1e-6).0 - pot.eval(x - 1e-6).0) / 2e-6;
    assert!((fd - pot.eval(x).1).abs() < 1e-6);
    assert!(matches!(local_potential(&z, 0.0, 400.0, 0.08, 0.16), Err(crate::LabError::Modification(_))));
}

#[test]
fn local_critical_values_recover_the_global_one() {
    let eps = 0.05;
    let n = 32;
    let kc = cfg1(n, 4, 0.4);
    for pf in [-0.2, 0.0, 0.2] {
        let z = TrigPoly::cos(1, &[2, 0], 1.0).add(&TrigPoly::cos(1, &[1, 0], pf));
        let h = Hamiltonian::new(IntegrablePart::quadratic(1, 3.0), z, eps).unwrap();
        let global = solve(&kernel_of(&h, 0.0, &kc)).alpha;
        let peaks: Vec<f64> = [0.0, 0.5]
            .iter()
            .map(|&c| local_aubry(&h, c, 4.0, (0.06, 0.14), 0.0, &kc, &SolveConfig::default()).unwrap())
            .map(|l| {
                assert!(l.aubry_radius < 0.06);
                l.alpha
            })
            .collect();
        let best = peaks[0].max(peaks[1]);
        assert!((global - best).abs() < 1e-9, "p_f={pf}: {global} vs {peaks:?}");
    }
}

#[test]
fn slow_reduction_keeps_the_fast_action_frozen() {
    let coeff = crate::model::Poly::from_terms(2, vec![(vec![0, 1], num_complex::Complex64::new(1.0, 0.0))]);
    let z = TrigPoly::cos(2, &[2, 0, 0], 1.0).add(&TrigPoly::cos_term(2, &[1, 0, 0], coeff));
    let h = Hamiltonian::new(IntegrablePart::quadratic(2, 2.0), z, 0.1).unwrap();
    let r = reduce_slow(&h, 0.3).unwrap();
    for x in [0.0, 0.2, 0.45] {
        let expect = (2.0 * TAU * x).cos() + 0.3 * (TAU * x).cos();
        assert!((r.h1.value(0.0, &[x], &[0.0]) - expect).abs() < 1e-14);
    }
    let moving = Hamiltonian::new(IntegrablePart::quadratic(2, 2.0), TrigPoly::cos(2, &[1, 1, 0], 1.0), 0.1).unwrap();
    assert!(reduce_slow(&moving, 0.0).is_err());
}

fn two_dim(eps: f64, delta: f64) -> Hamiltonian {
    let v = TrigPoly::cos(2, &[1, 0, 0], 1.0).add(&TrigPoly::cos(2, &[1, 1, 0], delta));
    Hamiltonian::new(IntegrablePart::quadratic(2, 2.0), v, eps).unwrap()
}

#[test]
fn gapped_and_circle_classes_on_a_small_torus() {
    let n = 16;
    let h = two_dim(0.02, 0.3);
    let l = MechanicalLagrangian::from_hamiltonian(&h).unwrap();
    let cfg = KernelConfig { n, knots: 2, center: vec![0.0, 0.0], cap: vec![0.25, 0.5] };
    let k0 = action_kernel(&l, &[0.0, 0.0], &cfg).unwrap();
    let s0 = solve(&k0);
    let m0 = mather_sets(&k0, &s0, &MatherConfig::default());
    let c0 = classify_cohomology(&k0, &s0, &m0, 1, None).unwrap();
    assert_eq!(c0.label, CohomologyLabel::Gamma0, "{:?}", c0.evidence);

    let cf = 3.0 / n as f64;
    let k1 = k0.with_cohomology(&[0.0, cf]);
    let s1 = solve(&k1);
    let m1 = mather_sets(&k1, &s1, &MatherConfig::default());
    let c1 = classify_cohomology(&k1, &s1, &m1, 1, None).unwrap();
    assert_eq!(c1.label, CohomologyLabel::Gamma1, "{:?} {:?}", c1.evidence, m1.aubry);
    assert!(c1.evidence.injective);
}

#[test]
fn lattice_split_circle_is_merged() {
    // θ_f-independent potential at fast velocity 2 cells per step: even and odd
    // columns form separate cycles of the same circle
    let n = 16;
    let h = two_dim(0.02, 0.0);
    let l = MechanicalLagrangian::from_hamiltonian(&h).unwrap();
    let c = [0.0, 2.0 / n as f64];
    let cfg = KernelConfig { n, knots: 2, center: c.to_vec(), cap: vec![0.25, 0.2] };
    let k = action_kernel(&l, &c, &cfg).unwrap();
    let s = solve(&k);
    let m = mather_sets(&k, &s, &MatherConfig::default());
    let cls = classify_cohomology(&k, &s, &m, 1, None).unwrap();
    assert_eq!(m.static_classes.len(), 2);
    assert_eq!(cls.evidence.merged_classes, 1);
    assert_eq!(cls.label, CohomologyLabel::Gamma1, "{:?}", cls.evidence);
}
