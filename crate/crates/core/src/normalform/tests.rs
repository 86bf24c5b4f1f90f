use super::*;
use crate::model::{bracket, cr_norm, ActionBox, IntegrablePart, NormMethod, Poly};
use crate::ode::rk4;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::TAU;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `cos 2πθ₁ + cos 2πθ₂ + p₂ cos 2π(θ₁ + t)`
fn three_mode() -> TrigPoly {
    let n = 2;
    TrigPoly::cos(n, &[1, 0, 0], 1.0)
        .add(&TrigPoly::cos(n, &[0, 1, 0], 1.0))
        .add(&TrigPoly::cos_term(n, &[1, 0, 1], Poly::from_terms(n, vec![(vec![0, 1], c(1.0))])))
}

fn ham(h1: TrigPoly, eps: f64) -> Hamiltonian {
    Hamiltonian::new(IntegrablePart::quadratic(2, 1.0), h1, eps).unwrap()
}

fn golden() -> f64 {
    0.5 * (5f64.sqrt() - 1.0)
}

#[test]
fn cutoff_examples() {
    let h0 = IntegrablePart::quadratic(2, 2.0);
    let params = CutoffParams { k_max: 3, beta: 0.5, eps: 1e-4 };
    let s = params.width();
    assert_eq!(rho_k(&h0, &[1, 0, 0], &[0.0, 0.3], &params), 1.0);
    assert_eq!(rho_k(&h0, &[2, 1, 0], &[0.0, 0.0], &params), 1.0);
    // [k] = 2, k·ω = 2 p₁
    assert_eq!(rho_k(&h0, &[2, 1, 0], &[3.0 * s, 0.0], &params), 0.0);
    let mid = rho_k(&h0, &[1, 0, 0], &[1.5 * s, 0.0], &params);
    assert!(mid > 0.0 && mid < 1.0);
    assert!((mid - bump(1.5)).abs() < 1e-15);
    let vals: Vec<f64> = (0..100).map(|i| rho_k(&h0, &[1, 0, 0], &[(1.0 + i as f64 / 99.0) * s, 0.0], &params)).collect();
    assert!(vals.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn resonant_modes_give_zero_generator_on_resonance() {
    let h = ham(TrigPoly::cos(2, &[1, 0, 0], 1.0).add(&TrigPoly::cos(2, &[2, 0, 0], 0.3)), 1e-4);
    let nf = NormalForm::build(&h, 4, 0.5).unwrap();
    for &(th, pf) in &[(0.1, 0.3), (0.7, -0.5), (0.33, 0.9)] {
        let l = nf.generator.jet(0.2, &[th, 0.4], &[0.0, pf], 1);
        assert_eq!(l.value, 0.0);
        assert_eq!(l.d_theta[0], 0.0);
    }
}

#[test]
fn fast_mode_matches_spectral_solution() {
    let h = ham(TrigPoly::cos(2, &[0, 1, 0], 1.0), 1e-4);
    let nf = NormalForm::build(&h, 3, 0.5).unwrap();
    let pf = golden();
    let w = pf;
    // spectral solution of −ω ∂_θG = −H₁ by trapezoid Fourier coefficients
    let m = 64;
    let coeff = |j: i64| -> Complex64 {
        (0..m)
            .map(|i| {
                let th = i as f64 / m as f64;
                Complex64::from_polar(1.0, -TAU * j as f64 * th) * (TAU * th).cos() / m as f64
            })
            .sum()
    };
    for &th in &[0.0, 0.13, 0.5, 0.77] {
        let oracle: f64 = (-4..=4i64)
            .filter(|&j| j != 0)
            .map(|j| (coeff(j) * Complex64::from_polar(1.0, TAU * j as f64 * th) / Complex64::new(0.0, TAU * j as f64 * w)).re)
            .sum();
        let g = nf.generator.value(0.3, &[0.2, th], &[0.05, pf]);
        assert!((g - oracle).abs() < 1e-12, "{g} vs {oracle}");
        assert!((g - (TAU * th).sin() / (TAU * w)).abs() < 1e-12);
    }
}

#[test]
fn fully_resonant_modes_are_dropped() {
    let h0 = IntegrablePart::quadratic(2, 0.01);
    let h = Hamiltonian::new(h0, three_mode(), 1e-2).unwrap();
    let nf = NormalForm::build(&h, 3, 100.0).unwrap();
    assert!(nf.generator.is_zero());
    assert_eq!(nf.generator.dropped().len(), 3);
}

#[test]
fn resonant_part_examples() {
    let h = ham(three_mode(), 1e-4);
    let nf = NormalForm::build(&h, 2, 0.1).unwrap();
    // exact resonance: p₁ = 0 keeps the slow mode with weight 1
    let x = PhasePoint::new(vec![0.3, 0.8], vec![0.0, 0.6], 0.45);
    let z = nf.z.value(x.t, &x.theta, &x.p);
    assert!((nf.resonant.value(x.t, &x.theta, &x.p) - z).abs() < 1e-12);
    assert!((z - (TAU * 0.3).cos()).abs() < 1e-14);

    // inside D: R₁ = Z − Π⁺Z (all of Z has [k] ≤ K here)
    let s = nf.params().width();
    for &(th, ps, pf, t) in &[(0.1, 0.3, 0.6, 0.2), (0.9, -0.5, 0.65, 0.7), (0.4, 0.9, 0.58, 0.0)] {
        let p = [ps * s, pf];
        assert!(crate::resonance::in_domain_d(&h.h0, &p, 2, s).inside);
        let low_z = nf.z.filter(|k| bracket(k) <= 2);
        let a = nf.resonant.value(t, &[th, 0.1], &p);
        let b = low_z.value(t, &[th, 0.1], &p);
        assert!((a - b).abs() <= 1e-10);
    }

    // huge ε: every cutoff is 1 and R₁ = Π_K H₁
    let big = ham(three_mode(), 1e8);
    let nf = NormalForm::build(&big, 2, 10.0).unwrap();
    let x = PhasePoint::new(vec![0.3, 0.8], vec![0.2, -0.6], 0.45);
    assert!((nf.resonant.value(x.t, &x.theta, &x.p) - three_mode().value(x.t, &x.theta, &x.p)).abs() < 1e-12);
}

#[test]
fn cohomological_equation_holds() {
    use rand::{Rng, SeedableRng};
    let h = ham(three_mode(), 1e-3);
    let nf = NormalForm::build(&h, 2, 0.3).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let low = three_mode().filter(|k| bracket(k) <= 2);
    for _ in 0..200 {
        let th = [rng.gen::<f64>(), rng.gen::<f64>()];
        let p = [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)];
        let t = rng.gen::<f64>();
        let g = nf.generator.jet(t, &th, &p, 1);
        let h0 = h.h0.jet(t, &th, &p, 1);
        let bracket_h0_g: f64 = (0..2).map(|i| h0.d_theta[i] * g.d_p[i] - h0.d_p[i] * g.d_theta[i]).sum();
        let lhs = bracket_h0_g - g.d_t + low.value(t, &th, &p);
        assert!((lhs - nf.resonant.value(t, &th, &p)).abs() < 1e-9, "{lhs}");
    }
}

#[test]
fn generator_gradient_matches_differences() {
    let h = ham(three_mode(), 1e-3);
    let nf = NormalForm::build(&h, 2, 0.3).unwrap();
    let s = nf.params().width();
    let hstep = 1e-6;
    // p₁ inside the transition zone of the slow mode
    for &p1 in &[1.2 * s, 1.7 * s, 0.5] {
        let (th, p, t) = ([0.21, 0.63], [p1, 0.4], 0.37);
        let l = nf.generator.jet(t, &th, &p, 2);
        for j in 0..2 {
            let mut a = p;
            let mut b = p;
            a[j] += hstep;
            b[j] -= hstep;
            let fd = (nf.generator.value(t, &th, &a) - nf.generator.value(t, &th, &b)) / (2.0 * hstep);
            assert!((l.d_p[j] - fd).abs() < 1e-5 * (1.0 + fd.abs()), "{} vs {fd}", l.d_p[j]);
        }
        let fd_t = (nf.generator.value(t + hstep, &th, &p) - nf.generator.value(t - hstep, &th, &p)) / (2.0 * hstep);
        assert!((l.d_t - fd_t).abs() < 1e-6 * (1.0 + fd_t.abs()));
    }
}

#[test]
fn zero_generator_is_identity() {
    let h = ham(TrigPoly::cos(2, &[1, 0, 0], 1.0), 1e-3);
    let nf = NormalForm::build(&h, 2, 0.3).unwrap();
    let x = PhasePoint::new(vec![0.3, 0.2], vec![0.0, 0.5], 0.1);
    let g_zero_here = nf.generator.jet(x.t, &x.theta, &x.p, 1);
    assert_eq!(g_zero_here.d_p[0], 0.0);
    let h = ham(TrigPoly::zero(2), 1e-3);
    let nf = NormalForm::build(&h, 2, 0.3).unwrap();
    let y = nf.phi(&x).unwrap();
    assert_eq!(y.point, x);
    assert_eq!(y.energy_shift, 0.0);
}

#[test]
fn flow_matches_reference_and_inverts() {
    use rand::{Rng, SeedableRng};
    let eps = 1e-3;
    let h = ham(three_mode(), eps);
    let nf = NormalForm::build(&h, 2, 0.1).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let s = nf.params().width();
    let pts: Vec<PhasePoint> = (0..1000)
        .map(|_| PhasePoint::new(vec![rng.gen(), rng.gen()], vec![rng.gen_range(-s..s), rng.gen_range(0.55..0.7)], rng.gen()))
        .collect();
    let g1 = pts
        .iter()
        .map(|x| {
            let l = nf.generator.jet(x.t, &x.theta, &x.p, 1);
            (0..2).map(|i| l.d_theta[i].abs().max(l.d_p[i].abs())).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let mut worst_ratio: f64 = 0.0;
    for x in &pts {
        let y = nf.phi(x).unwrap().point;
        let d = (0..2)
            .map(|i| crate::model::wrap_centered(y.theta[i] - x.theta[i]).abs().max((y.p[i] - x.p[i]).abs()))
            .fold(0.0, f64::max);
        worst_ratio = worst_ratio.max(d / (eps * g1));
        let back = nf.phi_inv(&y).unwrap().point;
        for i in 0..2 {
            assert!(crate::model::wrap_centered(back.theta[i] - x.theta[i]).abs() < 1e-9);
            assert!((back.p[i] - x.p[i]).abs() < 1e-9);
        }
        assert_eq!(y.t, x.t);
    }
    assert!(worst_ratio <= 1.01, "{worst_ratio}");

    // explicit small-step reference
    let x = PhasePoint::new(vec![0.3, 0.6], vec![0.1, 0.62], 0.4);
    let mut y = vec![0.3, 0.6, 0.1, 0.62];
    rk4(
        |_, y, dy| {
            let l = nf.generator.jet(x.t, &y[..2], &y[2..], 1);
            for i in 0..2 {
                dy[i] = eps * l.d_p[i];
                dy[2 + i] = -eps * l.d_theta[i];
            }
            Ok(())
        },
        0.0,
        1.0,
        &mut y,
        200,
    )
    .unwrap();
    let z = nf.phi(&x).unwrap().point;
    for i in 0..2 {
        assert!((z.theta[i] - y[i]).abs() < 1e-12);
        assert!((z.p[i] - y[2 + i]).abs() < 1e-12);
    }
}

#[test]
fn remainder_identity_and_symplecticity() {
    let eps = 1e-3;
    let h = ham(three_mode(), eps);
    let nf = NormalForm::build(&h, 2, 0.1).unwrap();
    for x in [
        PhasePoint::new(vec![0.3, 0.6], vec![0.01, 0.62], 0.4),
        PhasePoint::new(vec![0.9, 0.1], vec![-0.015, 0.58], 0.8),
    ] {
        let a = nf.remainder(&x).unwrap();
        let b = nf.remainder_direct(&x).unwrap();
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        assert!(verify::symplectic_defect(&nf, &x, 1e-5).unwrap() < 1e-6);
    }
}

#[test]
fn purely_resonant_perturbation_has_tiny_remainder() {
    let h = ham(TrigPoly::cos(2, &[1, 0, 0], 1.0).add(&TrigPoly::cos(2, &[2, 0, 0], 0.5)), 1e-4);
    let nf = NormalForm::build(&h, 3, 0.1).unwrap();
    let plan = SamplePlan { derivative_samples: 5, ..SamplePlan::new(100, ActionBox::new(vec![-0.005, 0.56], vec![0.005, 0.7]).unwrap()) };
    let r = verify_normal_form(&nf, &plan, 0.1).unwrap();
    assert!(r.r_norm_c2 <= 1e-9, "{}", r.r_norm_c2);
    assert!(r.phi_c0 == 0.0);
}

#[test]
fn samples_outside_domain_are_rejected_or_refused() {
    let h = ham(three_mode(), 1e-4);
    let nf = NormalForm::build(&h, 2, 0.1).unwrap();
    let plan = SamplePlan {
        reject_outside: false,
        ..SamplePlan::new(10, ActionBox::new(vec![0.3, 0.4], vec![0.5, 0.6]).unwrap())
    };
    assert!(matches!(verify_normal_form(&nf, &plan, 0.1), Err(LabError::Precondition(_))));
}

#[test]
fn advisor_examples() {
    let a = parameter_advisor(0.1, 2, 6, 1.0, 1.0).unwrap();
    assert!((a.k0 - 100.0).abs() < 1e-9);
    assert!((a.beta - 1000.0).abs() < 1e-9);
    assert!((a.eps0 - 1e-17).abs() < 1e-28);
    assert_eq!(a.r2, 9);
    assert!(a.k_smooth.is_none());
    let b = parameter_advisor(1.0, 2, 8, 1.0, 3.0).unwrap();
    assert_eq!(b.k0, 3.0);
    assert!(b.k_smooth.is_some());
    assert!(parameter_advisor(0.0, 2, 6, 1.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fourier_estimate_on_single_modes(
        amps in prop::collection::vec(-1.0f64..1.0, 4),
        ks in prop::collection::vec(prop::collection::vec(-4i64..=4, 2), 4),
        r in 1u32..5,
        l in 0u32..5,
    ) {
        prop_assume!(l <= r);
        let mut g = TrigPoly::zero(1);
        for (a, k) in amps.iter().zip(&ks) {
            if k.iter().any(|&x| x != 0) {
                g = g.add(&TrigPoly::cos(1, k, *a));
            }
        }
        prop_assume!(!g.is_empty());
        let b = ActionBox::cube(1, 1.0);
        let norm_r = cr_norm(&g, r, NormMethod::CoefficientSum, &b).unwrap();
        for m in g.modes() {
            let single = TrigPoly::new(1, 0, vec![m.clone(), crate::model::Mode { k: m.k.iter().map(|x| -x).collect(), coeff: m.coeff.conj() }]).unwrap();
            let lhs = cr_norm(&single, l, NormMethod::CoefficientSum, &b).unwrap() / 2.0;
            let kb = bracket(&m.k) as f64;
            prop_assert!(lhs <= kb.powi(l as i32 - r as i32) * norm_r * (1.0 + 1e-12));
        }
    }
}

#[test]
fn remainder_shrinks_with_epsilon() {
    let mut sups = Vec::new();
    for eps in [1e-3, 1e-4] {
        let h = ham(three_mode(), eps);
        let nf = NormalForm::build(&h, 2, 0.1).unwrap();
        let s = nf.params().width();
        let plan = SamplePlan { derivative_samples: 0, symplectic_samples: 0, ..SamplePlan::new(200, ActionBox::new(vec![-s, 0.56], vec![s, 0.7]).unwrap()) };
        let r = verify_normal_form(&nf, &plan, 1.0).unwrap();
        assert!(r.phi_within_sqrt_eps);
        assert!(r.inverse_error < 1e-9);
        sups.push(r.r_c0);
    }
    let slope = (sups[0] / sups[1]).log10();
    assert!(slope >= 0.4, "{sups:?}");
}
