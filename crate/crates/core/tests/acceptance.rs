//! End-to-end acceptance checks. Each prints one `PASS`/`FAIL` line.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::time::Instant;

use arnold_lab::nhic::*;
use arnold_lab::orbits::arnold_example;

fn report(id: u32, ok: bool, detail: String) {
    println!("criterion {id:2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

#[test]
fn c01_matrix_algebra() {
    use arnold_lab::model::IntegrablePart;
    use arnold_lab::nhic::matrix::{eig_range, spd_sqrt, sqrt_frechet};
    use arnold_lab::resonance::{check_genericity, sample_curve, GenericityConfig};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    // spectrum in [lo, hi], random orthogonal frame
    let spd = |rng: &mut rand_chacha::ChaCha8Rng, d: usize, lo: f64, hi: f64| {
        let g = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let q = g.qr().q();
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| rng.gen_range(lo..=hi)));
        let m = &q * diag * q.transpose();
        (&m + m.transpose()) * 0.5
    };
    let (mut sq, mut fr, mut ident, mut eig_margin) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for i in 0..100 {
        let d = 1 + i % 4;
        let m = spd(&mut rng, d, 0.05, 20.0);
        let r = spd_sqrt(&m).unwrap();
        sq = sq.max((&r * &r - &m).amax() / m.amax());
        let dir = {
            let g = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
            &g + g.transpose()
        };
        let h = 1e-6;
        let fd = (spd_sqrt(&(&m + &dir * h)).unwrap() - spd_sqrt(&(&m - &dir * h)).unwrap()) / (2.0 * h);
        fr = fr.max((sqrt_frechet(&m, &dir).unwrap() - fd).amax());
        // a pair passing the genericity bounds: λ ≤ A ≤ 1, 1/D ≤ B ≤ D
        let lambda = rng.gen_range(0.05..1.0);
        let big_d: f64 = rng.gen_range(1.0..10.0);
        let a = spd(&mut rng, d, lambda, 1.0);
        let b = spd(&mut rng, d, 1.0 / big_d, big_d);
        let (l, l_inv, lam) = chart_matrices(&a, &b).unwrap();
        let l2 = &l * &l;
        ident = ident.max((&l2 * &a * &l2 - &b).amax()).max((&l * &a * &l - &lam).amax()).max((&l_inv * &b * &l_inv - &lam).amax());
        eig_margin = eig_margin.min(eig_range(&lam).0 / (lambda / big_d).sqrt() - 1.0);
    }
    // chart samples along a model that passes the genericity check
    let n = 3;
    let h0 = IntegrablePart::quadratic(n, 2.0);
    let z = arnold_lab::model::TrigPoly::cos(n, &[1, 0, 0, 0], 1.0)
        .add(&arnold_lab::model::TrigPoly::cos(n, &[0, 1, 0, 0], 0.5))
        .add(&arnold_lab::model::TrigPoly::cos(n, &[1, -1, 0, 0], 0.2));
    let curve = sample_curve(&h0, 0.1, 0.9, 9).unwrap();
    let gen = check_genericity(&z, &h0, &curve, &GenericityConfig { grid: 48, ..Default::default() }).unwrap();
    let chart = Chart::new(&z, &h0, 1e-3, 0.5, (0.1, 0.9), (0.5, &[0.0, 0.0])).unwrap();
    let mut model_margin = f64::INFINITY;
    for i in 0..9 {
        let dfx = chart.sample(0.1 + 0.1 * i as f64).unwrap().defects();
        ident = ident.max(dfx.conjugation).max(dfx.lambda);
        model_margin = model_margin.min(dfx.lambda_min / dfx.lambda_bound - 1.0);
    }
    let ok = sq <= 1e-12 && fr <= 1e-5 && ident <= 1e-10 && eig_margin >= -1e-12 && gen.passed() && model_margin >= -1e-12;
    report(
        1,
        ok,
        format!("sqrt {sq:.1e}, Frechet vs differences {fr:.1e}, chart identities {ident:.1e}, min eig(Λ)/√(λ/D) − 1 ≥ {eig_margin:.2e} (random) / {model_margin:.2e} (model, genericity {})", gen.passed()),
    );
    assert!(ok);
}

#[test]
fn c02_normal_form() {
    use arnold_lab::model::{ActionBox, Hamiltonian, IntegrablePart, PhaseFunction, PhasePoint, Poly, TrigPoly};
    use arnold_lab::normalform::{verify_normal_form, NormalForm, SamplePlan};
    use num_complex::Complex64;

    let n = 2;
    let h1 = TrigPoly::cos(n, &[1, 0, 0], 1.0)
        .add(&TrigPoly::cos(n, &[0, 1, 0], 1.0))
        .add(&TrigPoly::cos_term(n, &[1, 0, 1], Poly::from_terms(n, vec![(vec![0, 1], Complex64::new(1.0, 0.0))])));
    let (k_max, beta) = (2, 0.1);
    let mut sups = Vec::new();
    let mut phi_ok = true;
    let mut worst_phi = 0.0f64;
    let mut resonant_gap = 0.0f64;
    for eps in [1e-3, 1e-4, 1e-5] {
        let h = Hamiltonian::new(IntegrablePart::quadratic(n, 2.0), h1.clone(), eps).unwrap();
        let nf = NormalForm::build(&h, k_max, beta).unwrap();
        let s = nf.params().width();
        let plan = SamplePlan { derivative_samples: 0, symplectic_samples: 0, ..SamplePlan::new(1000, ActionBox::new(vec![-s, 0.56], vec![s, 0.7]).unwrap()) };
        let r = verify_normal_form(&nf, &plan, 1.0).unwrap();
        phi_ok &= r.phi_within_sqrt_eps;
        worst_phi = worst_phi.max(r.phi_c0 / r.sqrt_eps);
        sups.push(r.r_c0);
        // exact resonance p_s = 0: R₁ keeps the low modes of Z
        let low_z = nf.z.filter(|k| arnold_lab::model::bracket(k) <= k_max);
        for i in 0..50 {
            let x = PhasePoint::new(vec![0.02 * i as f64, 0.37], vec![0.0, 0.56 + 0.14 * i as f64 / 49.0], 0.013 * i as f64);
            resonant_gap = resonant_gap.max((nf.resonant.value(x.t, &x.theta, &x.p) - low_z.value(x.t, &x.theta, &x.p)).abs());
        }
    }
    let slope = ((sups[0] / sups[2]).log10()) / 2.0;
    let ok = phi_ok && slope >= 0.4 && resonant_gap <= 1e-10;
    report(2, ok, format!("max ‖Φ − id‖/√ε = {worst_phi:.3}, sup R = [{}], log-log slope {slope:.3}, R₁ − Π_K Z = {resonant_gap:.1e}", sups.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")));
    assert!(ok);
}

#[test]
fn c03_puncture_enumeration() {
    use arnold_lab::model::IntegrablePart;
    use arnold_lab::resonance::{punctures, Interval};
    let h0 = IntegrablePart::quadratic(2, 3.0);
    let two: Vec<f64> = punctures(&h0, 2, Interval::closed(-2.5, 2.5)).unwrap().iter().map(|p| p.pf).collect();
    let three: Vec<f64> = punctures(&h0, 3, Interval::closed(0.1, 0.9)).unwrap().iter().map(|p| p.pf).collect();
    let same = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y);
    let ok = same(&two, &[-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]) && same(&three, &[1.0 / 3.0, 0.5, 2.0 / 3.0]);
    report(3, ok, format!("K=2: {two:?}; K=3: {three:?}"));
    assert!(ok);
}

#[test]
fn c04_exact_cylinder() {
    let eps = 1e-3;
    let start = Instant::now();
    let h = arnold_example(eps, 0.0);
    let z = h.h1.resonant_average();
    let chart = Chart::new(&z, &h.h0, eps, default_gamma(0.0), (0.05, 0.95), (0.5, &[0.0])).unwrap();
    let lambda = 1.0 / TAU;
    let block = block_for(1, (0.3, 0.7), lambda, eps, default_radius(lambda, 0.0, eps), chart.gamma, 8);
    let cert = certify_block(&ChartField::new(&chart, &h), &block).unwrap();
    let grid = CylinderGrid { n_theta: 32, n_pf: 32, n_t: 8, pf_lo: 0.3, pf_hi: 0.7 };
    let g = compute_cylinder(&chart, &h, &cert, &block, &grid, &ShootingConfig::default()).unwrap();
    let graph = g.nodes.iter().map(|n| arnold_lab::model::wrap_centered(n.theta_s[0]).abs().max(n.p_s[0].abs())).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let ok = cert.k_blk <= FRAC_1_SQRT_2 && graph <= 1e-8 && secs <= 60.0;
    report(4, ok, format!("K_blk = {:.3e}, max graph = {graph:.2e}, {secs:.1} s", cert.k_blk));
    assert!(ok);
}

#[test]
fn c05_perturbed_cylinder() {
    let (eps, mu) = (1e-3, 1e-3);
    let h = arnold_example(eps, mu);
    let z = h.h1.resonant_average();
    let chart = Chart::new(&z, &h.h0, eps, default_gamma(mu), (0.05, 0.95), (0.5, &[0.0])).unwrap();
    let lambda = 1.0 / TAU;
    let block = block_for(1, (0.3, 0.7), lambda, eps, default_radius(lambda, mu, eps), chart.gamma, 8);
    let cert = certify_block(&ChartField::new(&chart, &h), &block).unwrap();
    let grid = CylinderGrid { n_theta: 8, n_pf: 8, n_t: 4, pf_lo: 0.3, pf_hi: 0.7 };
    let cfg = ShootingConfig::default();
    let g = compute_cylinder(&chart, &h, &cert, &block, &grid, &cfg).unwrap();
    let start = &g.nodes[g.nodes.len() / 2];
    let orbit = orbit_check(&chart, &h, &block, start, 10.0 / eps.sqrt(), 10, &cfg).unwrap();
    // a zero residual would make the orbit bound vacuous, so it is floored at 1e-10
    let bound = 10.0 * g.max_residual.max(1e-11);
    let ok = cert.passed && g.max_residual <= 1e-6 && g.max_chart_slope <= 2.0 * cert.k_blk && orbit.max_deviation <= bound;
    report(
        5,
        ok,
        format!(
            "K_blk = {:.3e}, residual = {:.2e}, slope = {:.2e}, orbit deviation = {:.2e} (bound {bound:.1e}, escaped at {:?}, {:.0} e-foldings)",
            cert.k_blk, g.max_residual, g.max_chart_slope, orbit.max_deviation, orbit.escaped_at, orbit.growth_exponent
        ),
    );
    assert!(ok);
}

mod weak {
    pub use arnold_lab::model::{Hamiltonian, IntegrablePart, PhaseFunction, Poly, TrigPoly};
    pub use arnold_lab::weakkam::*;

    pub fn kernel(h: &Hamiltonian, c: &[f64], n: usize, knots: usize, center: &[f64], cap: &[f64]) -> ActionKernel {
        let l = MechanicalLagrangian::from_hamiltonian(h).unwrap();
        action_kernel(&l, c, &KernelConfig { n, knots, center: center.to_vec(), cap: cap.to_vec() }).unwrap()
    }

    pub fn solve(k: &ActionKernel) -> WeakKamSolution {
        solve_weak_kam(k, &SolveConfig::default()).unwrap()
    }
}

#[test]
fn c06_weak_kam_critical_values() {
    use weak::*;
    // integrable, two degrees of freedom, c = (1/3, 2/3): nearest grid velocity is 1/(3N) away
    let free = Hamiltonian::new(IntegrablePart::quadratic(2, 2.0), TrigPoly::zero(2), 0.0).unwrap();
    let c = [1.0 / 3.0, 2.0 / 3.0];
    let exact = 0.5 * (c[0] * c[0] + c[1] * c[1]);
    let mut errs = Vec::new();
    let mut residual = 0.0f64;
    for n in [64, 128, 256] {
        let k = kernel(&free, &c, n, 0, &c, &[0.03, 0.03]);
        let s = solve(&k);
        residual = residual.max(s.residual);
        errs.push((s.alpha - exact).abs());
    }
    let order = (errs[1] / errs[2]).log2();
    // pendulum with its maximum off the grid, at 1/3
    let eps = 0.05;
    let z = TrigPoly::cos(1, &[1, 0], (TAU / 3.0).cos()).add(&TrigPoly::sin(1, &[1, 0], (TAU / 3.0).sin()));
    let pend = Hamiltonian::new(IntegrablePart::quadratic(1, 3.0), z, eps).unwrap();
    let alphas: Vec<f64> = [128, 256]
        .iter()
        .map(|&n| {
            let s = solve(&kernel(&pend, &[0.0], n, 4, &[0.0], &[0.3]));
            residual = residual.max(s.residual);
            s.alpha
        })
        .collect();
    let grid_error = (alphas[0] - alphas[1]).abs();
    let pend_err = (alphas[0] - eps).abs();
    let ok = errs[1] <= 5e-3 && order >= 1.8 && pend_err <= 2.0 * grid_error && residual <= 1e-9;
    report(
        6,
        ok,
        format!(
            "integrable error at N=128 {:.2e}, order {order:.3}; pendulum α(0) − ε = {pend_err:.2e} vs 2× grid error {:.2e}; max residual {residual:.1e}",
            errs[1],
            2.0 * grid_error
        ),
    );
    assert!(ok);
}

#[test]
fn c07_localization() {
    use weak::*;
    // Z = cos(2πθ_s)/4π² has −Z'' = 1 at its peak, so λ = 1 and A = 1; the coupling
    // δ cos(2π(θ_s + θ_f))/4π² has C² norm δ
    let (eps, delta, n) = (0.5, 0.2, 32);
    let s = 1.0 / (TAU * TAU);
    let v = TrigPoly::cos(2, &[1, 0, 0], s).add(&TrigPoly::cos(2, &[1, 1, 0], delta * s));
    let h = Hamiltonian::new(IntegrablePart::quadratic(2, 2.0), v, eps).unwrap();
    let vertical = 6.0 * (2.0 * eps).sqrt();
    let kappa_bound = (48.0 * 2.0f64.sqrt() * 2.0f64.sqrt()).sqrt();
    let mut worst_p = 0.0f64;
    let mut kappa = 0.0f64;
    let mut injective = true;
    let mut graphs = Vec::new();
    for cf in [3.0 / n as f64, 5.0 / n as f64] {
        let k = kernel(&h, &[0.0, cf], n, 2, &[0.0, cf], &[0.15, 0.2]);
        let sol = solve(&k);
        let m = mather_sets(&k, &sol, &MatherConfig::default());
        worst_p = worst_p.max(m.max_momentum_offset);
        let dist = m.mane.iter().map(|&x| {
            let th = k.grid.coords(x)[0];
            (th - th.round()).abs()
        });
        kappa = kappa.max(dist.fold(0.0, f64::max) / delta.powf(0.25));
        let cls = classify_cohomology(&k, &sol, &m, 1, None).unwrap();
        injective &= cls.evidence.injective;
        graphs.push(format!("{:?}", cls.label));
    }
    let ok = worst_p <= vertical && kappa <= kappa_bound && injective;
    report(
        7,
        ok,
        format!("max ‖p − c‖ = {worst_p:.3e} (bound {vertical:.2}), measured κ = {kappa:.3} (bound {kappa_bound:.2}), fast projection injective {injective}, labels {graphs:?}"),
    );
    assert!(ok);
}

#[test]
fn c08_bifurcation_machinery() {
    use arnold_lab::resonance::{check_genericity, sample_curve, GenericityConfig};
    use num_complex::Complex64;
    use weak::*;
    let h0 = IntegrablePart::quadratic(2, 2.0);
    let pf = Poly::from_terms(2, vec![(vec![0, 1], Complex64::new(1.0, 0.0))]);
    let z = TrigPoly::cos(2, &[2, 0, 0], 1.0).add(&TrigPoly::cos_term(2, &[1, 0, 0], pf));
    let curve = sample_curve(&h0, -0.5, 0.5, 41).unwrap();
    let gen = check_genericity(&z, &h0, &curve, &GenericityConfig::default()).unwrap();
    let (bif_pf, gap) = gen.bifurcations.first().map_or((f64::NAN, f64::NAN), |b| (b.pf, b.gap));
    let eps = 0.05;
    let h = Hamiltonian::new(h0, z, eps).unwrap();
    let kc = KernelConfig { n: 64, knots: 4, center: vec![0.0], cap: vec![0.4] };
    let mut worst = 0.0f64;
    let mut crossing = Vec::new();
    for i in 0..=10 {
        let cf = -0.05 + 0.01 * i as f64;
        let red = reduce_slow(&h, cf).unwrap();
        let global = solve(&kernel(&red, &[0.0], kc.n, kc.knots, &kc.center, &kc.cap)).alpha;
        let local: Vec<f64> = [0.0, 0.5].iter().map(|&c| local_aubry(&red, c, 4.0, (0.06, 0.14), 0.0, &kc, &SolveConfig::default()).unwrap().alpha).collect();
        worst = worst.max((global - local[0].max(local[1])).abs());
        crossing.push(local[0] - local[1]);
    }
    let sign_change = crossing.first().is_some_and(|a| *a < 0.0) && crossing.last().is_some_and(|b| *b > 0.0);
    let ok = gen.bifurcations.len() == 1 && bif_pf.abs() <= 1e-8 && (gap - 2.0).abs() <= 1e-6 && worst <= 1e-9 && sign_change;
    report(
        8,
        ok,
        format!("bifurcation at p_f = {bif_pf:.2e}, gap {gap:.9}, max |α − max(α_j, α_j+1)| = {worst:.1e} over c_f ∈ [−0.05, 0.05], local values cross {sign_change}"),
    );
    assert!(ok);
}

#[test]
fn c09_twist_structure() {
    use weak::*;
    // time-periodic pendulum family
    let eps = 0.05;
    let v = TrigPoly::cos(1, &[1, 0], 1.0).add(&TrigPoly::cos(1, &[1, -1], 0.5));
    let h = Hamiltonian::new(IntegrablePart::quadratic(1, 3.0), v, eps).unwrap();
    let n = 120;
    let base = kernel(&h, &[0.0], n, 4, &[0.5], &[0.75]);
    let rationals: [(i64, usize); 10] = [(1, 2), (1, 3), (2, 3), (1, 4), (3, 4), (2, 5), (3, 5), (3, 7), (5, 8), (7, 13)];
    let mut all_ordered = true;
    let mut counts = Vec::new();
    let mut worst_rot = 0.0f64;
    let mut worst_rich = 0.0f64;
    for &(p, q) in &rationals {
        let r = periodic_configurations(&base, p, q, 1e-12).unwrap();
        counts.push(r.configurations.len());
        for a in &r.configurations {
            for b in &r.configurations {
                all_ordered &= non_crossing(a, b, p, n);
            }
        }
        // Aubry orbit at c = p/q against the slope of α there
        let c = p as f64 / q as f64;
        let h_step = 1e-6;
        let alpha = |c: f64| solve(&base.with_cohomology(&[c])).alpha;
        let slope = (alpha(c + h_step) - alpha(c - h_step)) / (2.0 * h_step);
        let k = base.with_cohomology(&[c]);
        let sol = solve(&k);
        let m = mather_sets(&k, &sol, &MatherConfig::default());
        let orbit = aubry_orbit(&k, &sol, &m.aubry, m.aubry[0], 20 * n).unwrap();
        let rho = cycle_rotation(&orbit, n).unwrap_or(f64::NAN);
        let richardson = rotation_number(&orbit.iter().map(|&x| x as f64 / n as f64).collect::<Vec<_>>()).unwrap();
        worst_rich = worst_rich.max((richardson - rho).abs());
        worst_rot = worst_rot.max((rho - slope).abs());
    }
    let ok = all_ordered && worst_rot <= 1e-3;
    report(9, ok, format!("10 rationals, minimizer classes {counts:?}, pairwise non-crossing {all_ordered}, max |ρ(orbit) − dα/dc| = {worst_rot:.1e}, averaged vs cycle rotation {worst_rich:.1e}"));
    assert!(ok);
}

#[test]
fn c10_drift_demonstration() {
    use arnold_lab::model::PhasePoint;
    use arnold_lab::orbits::{drift_demo, integrate, DriftMetric, IntegratorConfig};
    let cfg = IntegratorConfig { dt: 1e-3, duration: 1e3, stride: 1000, ..Default::default() };
    let demo = drift_demo(0.01, 0.01, 64, 7, 0.1, DriftMetric::Full, &cfg).unwrap();
    let best = &demo.runs[demo.best];
    // the full-action threshold is crossed by the pendulum excursion alone (2√ε = 0.2),
    // so the displacement along the resonance is reported next to it
    let along = drift_demo(0.01, 0.01, 8, 7, 0.1, DriftMetric::Fast, &cfg).unwrap();
    let control_h = arnold_example(0.0, 0.0);
    let z0 = PhasePoint { theta: vec![0.0, 0.3], p: vec![0.0, 0.2], t: 0.0 };
    let control = integrate(&control_h, Some(control_h.h0.action_box()), &z0, &cfg).unwrap();
    let ok = demo.reached && best.steps <= 1_000_000 && control.drift <= 1e-10;
    report(
        10,
        ok,
        format!(
            "best sup|p − p0| = {:.3} after {} steps (empirical threshold 0.1), best drift along the resonance {:.3e} over {} steps (8 seeds), control drift {:.1e}",
            best.drift, best.steps, along.runs[along.best].fast_drift, along.runs[along.best].steps, control.drift
        ),
    );
    assert!(ok);
}
