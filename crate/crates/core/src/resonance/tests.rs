use super::*;
use crate::model::{ActionBox, Poly, TrigPoly};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn coupled() -> IntegrablePart {
    let poly = Poly::from_terms(2, vec![(vec![2, 0], c(0.5)), (vec![0, 2], c(0.5)), (vec![1, 1], c(0.1))]);
    IntegrablePart::new(poly, 2.0, ActionBox::cube(2, 3.0)).unwrap()
}

fn double_peak(shift: f64) -> TrigPoly {
    let n = 2;
    let pf = Poly::from_terms(n, vec![(vec![0, 1], c(1.0)), (vec![0, 0], c(-shift))]);
    TrigPoly::cos(n, &[2, 0, 0], 1.0).add(&TrigPoly::cos_term(n, &[1, 0, 0], pf))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn p_star_for_quadratic_is_zero() {
    let h0 = IntegrablePart::quadratic(2, 2.0);
    let c = solve_p_star(&h0, 0.7, None).unwrap();
    assert_eq!(c.ps, vec![0.0]);
}

#[test]
fn p_star_for_coupled_quadratic() {
    let h0 = coupled();
    for &pf in &[-1.5, 0.0, 0.4, 2.0] {
        let c = solve_p_star(&h0, pf, None).unwrap();
        // linear solve: p₁ + 0.1 p₂ = 0
        assert!((c.ps[0] + 0.1 * pf).abs() < 1e-14);
    }
}

#[test]
fn p_star_residual_on_200_samples() {
    let poly = Poly::from_terms(
        2,
        vec![(vec![2, 0], c(0.5)), (vec![0, 2], c(0.5)), (vec![1, 1], c(0.2)), (vec![4, 0], c(0.05)), (vec![3, 1], c(0.01))],
    );
    let h0 = IntegrablePart::new(poly, 3.0, ActionBox::cube(2, 2.0)).unwrap();
    let curve = sample_curve(&h0, -1.5, 1.5, 200).unwrap();
    assert_eq!(curve.len(), 200);
    for cp in &curve {
        assert!(cp.residual <= 1e-10);
        let g = h0.frequency(&cp.action());
        assert!(g[0].abs() <= 1e-10);
    }
}

#[test]
fn p_star_leaving_box_is_an_error() {
    let poly = Poly::from_terms(2, vec![(vec![2, 0], c(0.5)), (vec![0, 2], c(0.5)), (vec![1, 1], c(0.9))]);
    let h0 = IntegrablePart::new(poly, 20.0, ActionBox::cube(2, 1.0)).unwrap();
    assert!(matches!(solve_p_star(&h0, 1.0, None), Ok(_)));
    let narrow = h0.with_box(ActionBox::new(vec![-0.5, -1.0], vec![0.5, 1.0]).unwrap());
    assert!(matches!(solve_p_star(&narrow, 1.0, None), Err(LabError::Geometry(_))));
}

fn enumerate_rationals(k_max: i64, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::new();
    for k in 1..=k_max {
        for l in -k_max..=k_max {
            let x = l as f64 / k as f64;
            if x >= lo && x <= hi && !v.iter().any(|y| (y - x).abs() < 1e-12) {
                v.push(x);
            }
        }
    }
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn punctures_of_quadratic_order_two() {
    let h0 = IntegrablePart::quadratic(2, 3.0);
    let p = punctures(&h0, 2, Interval::closed(-2.5, 2.5)).unwrap();
    let got: Vec<f64> = p.iter().map(|x| x.pf).collect();
    assert!(close(&got, &[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0], 1e-12), "{got:?}");
    assert!(close(&got, &enumerate_rationals(2, -2.5, 2.5), 1e-12));
    let half = p.iter().find(|x| (x.pf - 0.5).abs() < 1e-9).unwrap();
    assert_eq!((half.k, half.l), (2, -1));
    let zero = p.iter().find(|x| x.pf.abs() < 1e-9).unwrap();
    assert_eq!((zero.k, zero.l), (1, 0));
}

#[test]
fn punctures_of_order_three() {
    let h0 = IntegrablePart::quadratic(2, 3.0);
    let got: Vec<f64> = punctures(&h0, 3, Interval::closed(0.1, 0.9)).unwrap().iter().map(|x| x.pf).collect();
    assert!(close(&got, &[1.0 / 3.0, 0.5, 2.0 / 3.0], 1e-12), "{got:?}");
}

#[test]
fn no_punctures_inside_open_unit_interval() {
    let h0 = IntegrablePart::quadratic(2, 3.0);
    assert!(punctures(&h0, 1, Interval::open(0.0, 1.0)).unwrap().is_empty());
}

#[test]
fn punctures_follow_coupled_frequency() {
    let h0 = coupled();
    for p in punctures(&h0, 3, Interval::closed(-2.0, 2.0)).unwrap() {
        let cp = solve_p_star(&h0, p.pf, None).unwrap();
        assert!((p.k as f64 * fast_frequency(&h0, &cp) + p.l as f64).abs() < 1e-12);
    }
}

#[test]
fn passage_segments_examples() {
    let s = passage_segments(&[0.5], 1e-6, Interval::closed(0.0, 1.0)).unwrap();
    assert_eq!(s.len(), 2);
    assert!((s[0].0 - 0.0).abs() < 1e-15 && (s[0].1 - 0.2).abs() < 1e-12);
    assert!((s[1].0 - 0.8).abs() < 1e-12 && (s[1].1 - 1.0).abs() < 1e-15);
    assert!(passage_segments(&[0.5], 1e-2, Interval::closed(0.0, 1.0)).unwrap().is_empty());
    assert!(passage_segments(&[0.5], 0.0, Interval::closed(0.0, 1.0)).is_err());
}

#[test]
fn domain_examples() {
    let h0 = IntegrablePart::quadratic(2, 3.0);
    let golden = 0.5 * (1.0 + 5f64.sqrt());
    assert!(in_domain_d(&h0, &[0.0, golden], 5, 1e-3).inside);
    // direct scan oracle
    let min_gap = (0..=5i64)
        .flat_map(|kf| (-5..=5i64).map(move |kt| (kf, kt)))
        .filter(|&(kf, kt)| kf > 0 || kt > 0)
        .map(|(kf, kt)| (kf as f64 * golden + kt as f64).abs())
        .fold(f64::INFINITY, f64::min);
    assert!(!in_domain_d(&h0, &[0.0, golden], 5, 1.01 * min_gap / 15.0).inside);

    for s in [1e-9, 0.01, 0.3] {
        let r = in_domain_d(&h0, &[0.0, 0.5], 2, s);
        assert!(!r.inside);
        assert_eq!(r.witness, Some(DomainWitness::Resonance { kf: 2, kt: -1 }));
    }
    let r = in_domain_d(&h0, &[0.5, 0.3], 3, 0.1);
    assert!(!r.inside);
    assert!(matches!(r.witness, Some(DomainWitness::SlowFrequency(_))));
}

#[test]
fn geometry_bundle() {
    let h0 = IntegrablePart::quadratic(2, 3.0);
    let g = ResonanceGeometry::build(&h0, Interval::closed(0.1, 0.9), 50, 3, 1e-9).unwrap();
    assert_eq!(g.curve.len(), 50);
    assert_eq!(g.punctures.len(), 3);
    let r = 3.0 * 1e-9f64.powf(1.0 / 6.0);
    for (a, b) in &g.segments {
        for p in &g.punctures {
            assert!((p.pf - a).abs() >= r - 1e-12 && (p.pf - b).abs() >= r - 1e-12);
            assert!(!(p.pf > *a && p.pf < *b));
        }
    }
}

#[test]
fn single_cosine_has_one_branch() {
    let h0 = IntegrablePart::quadratic(2, 2.0);
    let z = TrigPoly::cos(2, &[1, 0, 0], 1.0);
    let curve = sample_curve(&h0, -0.5, 0.5, 21).unwrap();
    let r = check_genericity(&z, &h0, &curve, &GenericityConfig::default()).unwrap();
    assert_eq!(r.branches.len(), 1);
    assert!(r.branches[0].samples.iter().all(|s| s.theta[0].min(1.0 - s.theta[0]) < 1e-12));
    assert!(r.bifurcations.is_empty());
    // −∂²cos 2πθ at 0 is 4π²
    assert!((r.lambda_raw - 4.0 * PI * PI).abs() < 1e-9);
    assert!((r.scale - 8.0 * PI.powi(3)).abs() < 1e-6);
    assert!(r.upper <= 1.0);
    assert!(r.b < r.lambda / 4.0);
    assert!(r.g0 && r.g1 && r.g2 && r.t0 && r.t1 && r.g1_prime && r.passed());
    // (1 − cos 2πθ)/d² is smallest at d = ½
    assert!((r.b_g1_raw - 8.0).abs() < 1e-9, "{}", r.b_g1_raw);
}

#[test]
fn double_peak_bifurcation() {
    let h0 = IntegrablePart::quadratic(2, 2.0);
    let curve = sample_curve(&h0, -0.5, 0.5, 41).unwrap();
    let r = check_genericity(&double_peak(0.0), &h0, &curve, &GenericityConfig::default()).unwrap();
    assert_eq!(r.bifurcations.len(), 1, "{:?}", r.bifurcations);
    let b = &r.bifurcations[0];
    assert!(b.pf.abs() <= 1e-8, "{}", b.pf);
    // values 1 + p^f and 1 − p^f near the two peaks
    assert!((b.gap - 2.0).abs() <= 1e-6, "{}", b.gap);
    assert!(r.g0 && r.g1 && r.g2 && r.t1 && r.t2 && r.g2_prime);
    assert!(r.branches.len() >= 2);
}

#[test]
fn bifurcation_error_tracks_tolerance() {
    let h0 = IntegrablePart::quadratic(2, 2.0);
    let shift = 0.1234567;
    let curve = sample_curve(&h0, -0.3, 0.45, 16).unwrap();
    let mut prev = f64::INFINITY;
    for j in 2..8 {
        let tol = 10f64.powi(-j);
        let cfg = GenericityConfig { bif_tol: tol, grid: 128, ..Default::default() };
        let r = check_genericity(&double_peak(shift), &h0, &curve, &cfg).unwrap();
        let err = (r.bifurcations[0].pf - shift).abs();
        assert!(err <= tol, "{err} > {tol}");
        assert!(err <= prev + 1e-15);
        prev = err;
    }
}

#[test]
fn zero_potential_is_degenerate() {
    let h0 = IntegrablePart::quadratic(2, 2.0);
    let curve = sample_curve(&h0, -0.5, 0.5, 5).unwrap();
    let r = check_genericity(&TrigPoly::zero(2), &h0, &curve, &GenericityConfig::default()).unwrap();
    assert!(!r.g0);
}

#[test]
fn persistent_tie_fails_uniqueness() {
    let h0 = IntegrablePart::quadratic(2, 2.0);
    let curve = sample_curve(&h0, -0.5, 0.5, 11).unwrap();
    let r = check_genericity(&TrigPoly::cos(2, &[2, 0, 0], 1.0), &h0, &curve, &GenericityConfig::default()).unwrap();
    assert!(!r.g1);
}

#[test]
fn two_slow_angles() {
    let h0 = IntegrablePart::quadratic(3, 2.0);
    let z = TrigPoly::cos(3, &[1, 0, 0, 0], 1.0).add(&TrigPoly::cos(3, &[0, 1, 0, 0], 0.5));
    let curve = sample_curve(&h0, -0.2, 0.2, 3).unwrap();
    let cfg = GenericityConfig { grid: 64, ..Default::default() };
    let r = check_genericity(&z, &h0, &curve, &cfg).unwrap();
    assert_eq!(r.branches.len(), 1);
    // −∂²Z = diag(4π², 2π²)
    assert!((r.lambda_raw - 2.0 * PI * PI).abs() < 1e-9);
    assert!((r.upper_raw - 4.0 * PI * PI).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn punctures_symmetric_for_even_h0(k in 1i64..6, a in 0.2f64..2.5) {
        let h0 = IntegrablePart::quadratic(2, 3.0);
        let p = punctures(&h0, k, Interval::closed(-a, a)).unwrap();
        let xs: Vec<f64> = p.iter().map(|x| x.pf).collect();
        let mut ys: Vec<f64> = xs.iter().map(|x| -x).collect();
        ys.sort_by(f64::total_cmp);
        prop_assert!(close(&xs, &ys, 1e-11));
    }

    #[test]
    fn puncture_gaps_at_least_inverse_square(k in 1i64..7) {
        let h0 = coupled();
        let p = punctures(&h0, k, Interval::closed(-2.0, 2.0)).unwrap();
        // frequency slope along the resonance is 1 − 0.01
        let slope = 0.99;
        for w in p.windows(2) {
            prop_assert!(w[1].pf - w[0].pf >= 1.0 / (slope * (k * k) as f64) - 1e-12);
        }
    }

    #[test]
    fn segments_avoid_punctures(xs in prop::collection::vec(-1.0f64..2.0, 0..6), e in 1e-12f64..1e-3) {
        let segs = passage_segments(&xs, e, Interval::closed(0.0, 1.0)).unwrap();
        let r = 3.0 * e.powf(1.0 / 6.0);
        for (a, b) in &segs {
            prop_assert!(a < b && *a >= 0.0 && *b <= 1.0);
            for x in &xs {
                let d = if x < a { a - x } else if x > b { x - b } else { 0.0 };
                prop_assert!(d >= r - 1e-12);
            }
        }
        for w in segs.windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
    }

    #[test]
    fn branches_are_continuous(shift in -0.2f64..0.2) {
        let h0 = IntegrablePart::quadratic(2, 2.0);
        let curve = sample_curve(&h0, -0.4, 0.4, 17).unwrap();
        let cfg = GenericityConfig { grid: 64, ..Default::default() };
        let r = check_genericity(&double_peak(shift), &h0, &curve, &cfg).unwrap();
        let dp = curve[1].pf - curve[0].pf;
        // |∂_{p^f}∂_θ Z| ≤ 2π, λ ≥ 4π²·(2−0.6)−4π²·0.6 on this range
        let c = 2.0 * PI / (4.0 * PI * PI * 0.8);
        for b in &r.branches {
            for w in b.samples.windows(2) {
                let d = crate::model::wrap_centered(w[1].theta[0] - w[0].theta[0]).abs();
                prop_assert!(d <= c * dp * 1.5 + 1e-12, "{} vs {}", d, c * dp);
            }
        }
    }
}
