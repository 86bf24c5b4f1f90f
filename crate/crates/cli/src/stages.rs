//! The pipeline stages and their artifacts.

use arnold_lab::model::{ActionBox, Hamiltonian, Mode, ModelFile, NormMethod, PhasePoint, Poly, TrigPoly};
use arnold_lab::nhic::{block_for, certify_block, compute_cylinder, default_gamma, default_radius, Chart, ChartField, CylinderGrid, ShootingConfig};
use arnold_lab::normalform::{parameter_advisor, verify_normal_form, NormalForm, SamplePlan};
use arnold_lab::orbits::{arnold_example, drift_report, integrate, IntegratorConfig};
use arnold_lab::resonance::{check_genericity, sample_curve, solve_p_star, GenericityConfig, GenericityReport};
use arnold_lab::weakkam::{
    action_kernel, classify_cohomology, mather_sets, reduce_slow, solve_weak_kam, Classification, KernelConfig, MatherConfig, MechanicalLagrangian, SolveConfig,
};
use arnold_lab::LabError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::artifacts::{header, indexed, num, nums, Manifest, OutputDir, StageRecord, Status};
use crate::config::{ModelSpec, RunConfig, Stage};
use crate::error::{CliError, EXIT_CERTIFICATE, EXIT_NONCONVERGENCE, EXIT_PASS};

/// Residual below which cylinder nodes count as invariant.
const CYLINDER_RESIDUAL_TOL: f64 = 1e-6;

pub fn load_model(cfg: &RunConfig) -> Result<Hamiltonian, CliError> {
    match &cfg.model {
        ModelSpec::Arnold { mu } => Ok(arnold_example(cfg.params.eps, *mu)),
        ModelSpec::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read model {}: {e}", path.display())))?;
            let model = ModelFile::from_json(&text).map_err(|e| CliError::Config(format!("model {}: {e}", path.display())))?;
            model.hamiltonian(cfg.params.eps).map_err(|e| CliError::Config(format!("model {}: {e}", path.display())))
        }
    }
}

/// What a stage hands back before it is turned into a manifest record.
struct StageOutput {
    verdicts: Vec<(&'static str, bool)>,
    parameters: Value,
    files: Vec<String>,
    /// Headline numbers; they double as the witness when a verdict fails.
    metrics: Value,
    /// Exit status when some verdict is false.
    fail_code: i32,
}

pub struct Runner<'a> {
    cfg: &'a RunConfig,
    h: Hamiltonian,
    out: OutputDir,
    generic: Option<GenericityReport>,
    nf_remainder: Option<f64>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self, CliError> {
        let h = load_model(cfg)?;
        let out = OutputDir::create(&cfg.output)?;
        Ok(Runner { cfg, h, out, generic: None, nf_remainder: None })
    }

    /// Runs `stages` in pipeline order. A failing stage halts its dependents;
    /// independent stages still run. The manifest is written in every case.
    pub fn run(mut self, stages: &[Stage]) -> Result<Manifest, CliError> {
        let mut records: Vec<StageRecord> = Vec::new();
        for stage in Stage::ALL.into_iter().filter(|s| stages.contains(s)) {
            let blocked = stage
                .depends_on()
                .iter()
                .find(|d| records.iter().any(|r| r.stage == d.name() && r.status != Status::Pass));
            let record = match blocked {
                Some(d) => StageRecord {
                    stage: stage.name().into(),
                    status: Status::Skipped,
                    exit_code: EXIT_PASS,
                    verdicts: json!({}),
                    parameters: json!({}),
                    files: vec![],
                    metrics: json!({}),
                    witness: None,
                    error: Some(format!("halted: {} did not pass", d.name())),
                },
                None => self.run_stage(stage),
            };
            records.push(record);
        }
        let exit_code = records.iter().map(|r| r.exit_code).find(|&c| c != EXIT_PASS).unwrap_or(EXIT_PASS);
        let manifest = Manifest {
            tool: "arnold-lab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(self.cfg)?,
            stages: records,
            exit_code,
        };
        self.out.json("manifest.json", &manifest)?;
        Ok(manifest)
    }

    fn run_stage(&mut self, stage: Stage) -> StageRecord {
        let result = match stage {
            Stage::Genericity => self.genericity(),
            Stage::NormalForm => self.normal_form(),
            Stage::Nhic => self.nhic(),
            Stage::WeakKam => self.weak_kam(),
            Stage::Orbit => self.orbit(),
        };
        let name = stage.name().to_string();
        match result {
            Ok(o) => {
                let ok = o.verdicts.iter().all(|(_, v)| *v);
                let verdicts = Value::Object(o.verdicts.iter().map(|(k, v)| (k.to_string(), Value::Bool(*v))).collect());
                StageRecord {
                    stage: name,
                    status: if ok { Status::Pass } else { Status::Fail },
                    exit_code: if ok { EXIT_PASS } else { o.fail_code },
                    verdicts,
                    parameters: o.parameters,
                    files: o.files,
                    witness: if ok { None } else { Some(o.metrics.clone()) },
                    metrics: o.metrics,
                    error: None,
                }
            }
            Err(e) => {
                let witness = match &e {
                    CliError::Lab(LabError::Certificate { witness, .. }) => Some(json!(witness)),
                    CliError::Lab(LabError::BlockTooTight { node }) => Some(json!(node)),
                    _ => None,
                };
                StageRecord {
                    stage: name,
                    status: Status::Fail,
                    exit_code: e.exit_code(),
                    verdicts: json!({}),
                    parameters: json!({}),
                    files: vec![],
                    metrics: json!({}),
                    witness,
                    error: Some(e.to_string()),
                }
            }
        }
    }

    fn n(&self) -> usize {
        self.h.n()
    }

    fn generic(&mut self) -> Result<&GenericityReport, CliError> {
        if self.generic.is_none() {
            let g = &self.cfg.grids;
            let z = self.h.h1.resonant_average();
            let curve = sample_curve(&self.h.h0, g.pf_lo, g.pf_hi, g.pf_samples)?;
            self.generic = Some(check_genericity(&z, &self.h.h0, &curve, &GenericityConfig::default())?);
        }
        Ok(self.generic.as_ref().expect("set above"))
    }

    fn genericity(&mut self) -> Result<StageOutput, CliError> {
        let ns = self.n() - 1;
        let report = self.generic()?.clone();
        let mut cols = header(&["pf", "branch"]);
        cols.extend(indexed("theta_s", ns));
        cols.extend(header(&["value", "min_eig"]));
        let rows: Vec<Vec<String>> = report
            .branch_rows()
            .into_iter()
            .map(|(pf, id, theta, v, e)| {
                let mut r = vec![num(pf), id.to_string()];
                r.extend(nums(&theta));
                r.extend([num(v), num(e)]);
                r
            })
            .collect();
        let files = vec![self.out.json("genericity.json", &report)?, self.out.csv("branches.csv", &cols, &rows)?];
        Ok(StageOutput {
            verdicts: vec![("g0", report.g0), ("g1", report.g1), ("g2", report.g2), ("g1_prime", report.g1_prime), ("g2_prime", report.g2_prime)],
            parameters: json!({ "pf_lo": self.cfg.grids.pf_lo, "pf_hi": self.cfg.grids.pf_hi, "pf_samples": self.cfg.grids.pf_samples, "config": GenericityConfig::default() }),
            files,
            metrics: json!({ "notes": report.notes, "bifurcations": report.bifurcations }),
            fail_code: EXIT_CERTIFICATE,
        })
    }

    fn normal_form(&mut self) -> Result<StageOutput, CliError> {
        let (p, g) = (&self.cfg.params, &self.cfg.grids);
        let n = self.n();
        let h0 = &self.h.h0;
        let nf = NormalForm::build(&self.h, p.k_modes, p.beta)?;
        let s = nf.params().width();
        // slow actions within half the domain width of the resonance, so difference
        // stencils stay clear of the cutoff transition; fast actions in the window
        let curve = sample_curve(h0, g.pf_lo, g.pf_hi, g.pf_samples)?;
        let mut lo: Vec<f64> = (0..n - 1).map(|i| curve.iter().map(|c| c.ps[i]).fold(f64::INFINITY, f64::min) - 0.5 * s).collect();
        let mut hi: Vec<f64> = (0..n - 1).map(|i| curve.iter().map(|c| c.ps[i]).fold(f64::NEG_INFINITY, f64::max) + 0.5 * s).collect();
        lo.push(g.pf_lo);
        hi.push(g.pf_hi);
        let plan = SamplePlan { seed: self.cfg.seed, ..SamplePlan::new(p.nf_samples, ActionBox::new(lo, hi)?) };
        let report = verify_normal_form(&nf, &plan, p.delta_target)?;
        let h0_c4 = arnold_lab::model::cr_norm_h0(h0, 4, NormMethod::GridSup)?;
        let advice = parameter_advisor(p.delta_target, n, self.h.h1.smoothness(), h0_c4, p.advisor_c)?;
        self.nf_remainder = Some(report.r_norm_c2);
        let mut cols = indexed("theta", n);
        cols.extend(indexed("p", n));
        cols.extend(header(&["t", "remainder", "displacement"]));
        let rows: Vec<Vec<String>> = report
            .rows
            .iter()
            .map(|r| {
                let mut v = nums(&r.theta);
                v.extend(nums(&r.p));
                v.extend([num(r.t), num(r.remainder), num(r.displacement)]);
                v
            })
            .collect();
        let files = vec![
            self.out.json("normal_form.json", &json!({ "report": report, "advice": advice }))?,
            self.out.csv("nf_samples.csv", &cols, &rows)?,
        ];
        let below = p.eps <= advice.eps0;
        Ok(StageOutput {
            verdicts: vec![("remainder_within_delta", report.within_delta), ("phi_within_sqrt_eps", report.phi_within_sqrt_eps), ("eps_below_advisor", below)],
            parameters: json!({ "eps": p.eps, "k_modes": p.k_modes, "beta": p.beta, "delta_target": p.delta_target, "width": s, "samples": p.nf_samples, "seed": self.cfg.seed, "eps0": advice.eps0 }),
            files,
            metrics: json!({ "r_norm_c2": report.r_norm_c2, "delta_target": p.delta_target, "phi_c0": report.phi_c0, "sqrt_eps": report.sqrt_eps, "eps": p.eps, "eps0": advice.eps0 }),
            fail_code: EXIT_CERTIFICATE,
        })
    }

    /// Remainder size the cylinder has to absorb.
    fn remainder_size(&self) -> f64 {
        match self.cfg.model {
            ModelSpec::Arnold { mu } => mu,
            ModelSpec::File(_) => self.nf_remainder.unwrap_or(self.cfg.params.delta_target),
        }
    }

    fn nhic(&mut self) -> Result<StageOutput, CliError> {
        let n = self.n();
        if n < 2 {
            return Err(CliError::Config("nhic needs at least two degrees of freedom".into()));
        }
        let ns = n - 1;
        let report = self.generic()?.clone();
        let (p, g) = (&self.cfg.params, &self.cfg.grids);
        let lambda = report.lambda;
        let delta = self.remainder_size();
        let gamma = p.gamma.unwrap_or_else(|| default_gamma(delta));
        let bx = self.h.h0.action_box();
        let (chart_lo, chart_hi) = ((g.pf_lo - g.chart_margin).max(bx.lo[ns]), (g.pf_hi + g.chart_margin).min(bx.hi[ns]));
        let mid = 0.5 * (g.pf_lo + g.pf_hi);
        let seed_theta = global_maximum_near(&report, mid).unwrap_or_else(|| vec![0.0; ns]);
        let z = self.h.h1.resonant_average();
        let chart = Chart::new(&z, &self.h.h0, p.eps, gamma, (chart_lo, chart_hi), (mid, &seed_theta))?;
        let radius = default_radius(lambda, delta, p.eps);
        let block = block_for(ns, (g.pf_lo, g.pf_hi), lambda, p.eps, radius, chart.gamma, g.block_density);
        let cert = certify_block(&ChartField::new(&chart, &self.h), &block)?;
        let parameters = json!({ "eps": p.eps, "lambda": lambda, "delta": delta, "gamma": chart.gamma, "radius": radius, "chart": [chart_lo, chart_hi], "grid": g.cylinder });
        if !cert.passed {
            let files = vec![self.out.json("nhic.json", &json!({ "certificate": cert, "block": block }))?];
            return Ok(StageOutput {
                verdicts: vec![("certificate", false)],
                parameters,
                files,
                metrics: json!({ "reason": cert.reason, "alpha": cert.alpha, "alpha_witness": cert.alpha_witness, "m": cert.m, "m_witness": cert.m_witness }),
                fail_code: EXIT_CERTIFICATE,
            });
        }
        let [n_theta, n_pf, n_t] = g.cylinder;
        let grid = CylinderGrid { n_theta, n_pf, n_t, pf_lo: g.pf_lo, pf_hi: g.pf_hi };
        let graph = compute_cylinder(&chart, &self.h, &cert, &block, &grid, &ShootingConfig::default())?;
        let mut cols = header(&["theta_f", "pf", "t"]);
        cols.extend(indexed("theta_s", ns));
        cols.extend(indexed("p_s", ns));
        cols.push("residual".into());
        let rows: Vec<Vec<String>> = graph.rows().iter().map(|r| nums(r)).collect();
        let files = vec![
            self.out.json("nhic.json", &json!({ "certificate": cert, "block": block, "cylinder": graph }))?,
            self.out.csv("cylinder.csv", &cols, &rows)?,
        ];
        let residual_ok = graph.max_residual <= CYLINDER_RESIDUAL_TOL;
        let slope_ok = graph.max_chart_slope <= 2.0 * cert.k_blk;
        Ok(StageOutput {
            verdicts: vec![("certificate", true), ("converged", graph.converged), ("residual_within", residual_ok), ("slope_within", slope_ok)],
            parameters,
            files,
            metrics: json!({ "max_residual": graph.max_residual, "max_shift": graph.max_shift, "max_chart_slope": graph.max_chart_slope, "k_blk": cert.k_blk }),
            fail_code: if graph.converged { EXIT_CERTIFICATE } else { EXIT_NONCONVERGENCE },
        })
    }

    fn weak_kam(&mut self) -> Result<StageOutput, CliError> {
        if self.n() != 2 {
            return Err(CliError::Config("weak-kam works with two degrees of freedom".into()));
        }
        // the genericity stage is a declared dependency; its report is not needed here
        let (p, g, w) = (&self.cfg.params, &self.cfg.grids, &self.cfg.weak_kam);
        let h0 = &self.h.h0;
        let z = self.h.h1.resonant_average();
        let averaged = Hamiltonian::new(h0.clone(), z.clone(), p.eps)?;
        let scfg = SolveConfig { tol: w.tol, ..SolveConfig::default() };
        let mut alpha_rows = Vec::new();
        let mut aubry_rows = Vec::new();
        let mut barrier_rows = Vec::new();
        let mut labels: Vec<Classification> = Vec::new();
        let mut worst = 0.0f64;
        for cf in self.cfg.cf_values() {
            let c = solve_p_star(h0, cf, None)?.action();
            // coefficients frozen at the resonance point make the averaged system mechanical
            let frozen = Hamiltonian::new(h0.clone(), freeze(&z, &c)?, p.eps)?;
            let lag2 = MechanicalLagrangian::from_hamiltonian(&frozen)?;
            let kc2 = KernelConfig { n: g.classify_grid, knots: g.classify_knots, center: h0.frequency(&c), cap: vec![w.cap, w.fast_cap] };
            let k2 = action_kernel(&lag2, &c, &kc2)?;
            let s2 = solve_weak_kam(&k2, &scfg)?;
            let m2 = mather_sets(&k2, &s2, &MatherConfig::default());
            let cls = classify_cohomology(&k2, &s2, &m2, 1, None)?;
            let (alpha, residual, source) = match reduce_slow(&averaged, cf) {
                Ok(red) => {
                    let lag1 = MechanicalLagrangian::from_hamiltonian(&red)?;
                    let k1 = action_kernel(&lag1, &[0.0], &KernelConfig { n: g.angle_grid, knots: g.knots, center: vec![0.0], cap: vec![w.cap] })?;
                    let s1 = solve_weak_kam(&k1, &scfg)?;
                    (0.5 * cf * cf + s1.alpha, s1.residual, "reduced")
                }
                Err(_) => (s2.alpha, s2.residual, "planar"),
            };
            worst = worst.max(residual).max(s2.residual);
            alpha_rows.push(vec![num(cf), num(alpha), num(s2.alpha), num(residual), num(s2.residual), format!("{:?}", cls.label), source.to_string()]);
            for (node, mom) in m2.calibrated.iter().zip(&m2.momenta) {
                let mut r = vec![num(cf)];
                r.extend(nums(&k2.grid.coords(*node)));
                r.extend(nums(mom));
                r.push(u8::from(m2.aubry.contains(node)).to_string());
                aubry_rows.push(r);
            }
            if let Some(b) = &cls.evidence.barriers {
                for x in 0..k2.grid.len() {
                    let mut r = vec![num(cf)];
                    r.extend(nums(&k2.grid.coords(x)));
                    r.extend([num(b.b_plus[x]), num(b.b_minus[x])]);
                    barrier_rows.push(r);
                }
            }
            labels.push(cls);
        }
        let files = vec![
            self.out.csv("alpha.csv", &header(&["cf", "alpha", "alpha_planar", "residual", "residual_planar", "label", "source"]), &alpha_rows)?,
            self.out.csv("aubry.csv", &header(&["cf", "theta_s", "theta_f", "p_s", "p_f", "aubry"]), &aubry_rows)?,
            self.out.csv("barriers.csv", &header(&["cf", "theta_s", "theta_f", "b_plus", "b_minus"]), &barrier_rows)?,
            self.out.json("classification.json", &labels)?,
        ];
        Ok(StageOutput {
            verdicts: vec![("residual_within_tol", worst <= w.tol)],
            parameters: json!({ "eps": p.eps, "cf": self.cfg.cf_values(), "angle_grid": g.angle_grid, "knots": g.knots, "classify_grid": g.classify_grid, "classify_knots": g.classify_knots, "cap": [w.cap, w.fast_cap], "tol": w.tol }),
            files,
            metrics: json!({ "max_residual": worst }),
            fail_code: EXIT_NONCONVERGENCE,
        })
    }

    fn orbit(&mut self) -> Result<StageOutput, CliError> {
        let (g, o) = (&self.cfg.grids, &self.cfg.orbit);
        let n = self.n();
        let h0 = &self.h.h0;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let icfg = IntegratorConfig { dt: o.dt, duration: o.duration, stride: o.stride, ..IntegratorConfig::default() };
        let mut rows = Vec::new();
        let mut summaries = Vec::new();
        let mut worst_energy = 0.0f64;
        for seed in 0..o.seeds {
            let pf = rng.gen_range(g.pf_lo..=g.pf_hi);
            let star = solve_p_star(h0, pf, None)?;
            let theta: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let mut p: Vec<f64> = star.ps.iter().map(|v| v + o.offset * rng.gen_range(-1.0..=1.0)).collect();
            p.push(pf);
            let z0 = PhasePoint::new(theta, p, 0.0);
            let traj = integrate(&self.h, Some(h0.action_box()), &z0, &icfg)?;
            let drift = drift_report(&traj, h0, None, None)?;
            worst_energy = worst_energy.max(traj.max_energy_defect);
            let mut sup = 0.0f64;
            for (x, e) in traj.points.iter().zip(&traj.energy_defect) {
                let d = x.p.iter().zip(&z0.p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                sup = sup.max(d);
                let mut r = vec![seed.to_string(), num(x.t)];
                r.extend(nums(&x.theta));
                r.extend(nums(&x.p));
                r.extend([num(*e), num(sup)]);
                rows.push(r);
            }
            summaries.push(json!({ "seed": seed, "start": z0, "steps": traj.steps, "escaped_at": traj.escaped_at, "max_energy_defect": traj.max_energy_defect, "drift": drift }));
        }
        let mut cols = header(&["seed", "t"]);
        cols.extend(indexed("theta", n));
        cols.extend(indexed("p", n));
        cols.extend(header(&["energy_defect", "drift"]));
        let files = vec![self.out.csv("orbit.csv", &cols, &rows)?, self.out.json("orbit.json", &summaries)?];
        Ok(StageOutput {
            verdicts: vec![("energy_within_tol", worst_energy <= o.energy_tol)],
            parameters: json!({ "seeds": o.seeds, "seed": self.cfg.seed, "dt": o.dt, "duration": o.duration, "stride": o.stride, "offset": o.offset, "energy_tol": o.energy_tol }),
            files,
            metrics: json!({ "max_energy_defect": worst_energy }),
            fail_code: EXIT_NONCONVERGENCE,
        })
    }
}

/// Slow angles of the global maximum at the sample nearest `pf`.
fn global_maximum_near(report: &GenericityReport, pf: f64) -> Option<Vec<f64>> {
    let &(at, id) = report.global.iter().min_by(|a, b| (a.0 - pf).abs().total_cmp(&(b.0 - pf).abs()))?;
    let branch = report.branches.iter().find(|b| b.id == id)?;
    branch.samples.iter().min_by(|a, b| (a.pf - at).abs().total_cmp(&(b.pf - at).abs())).map(|s| s.theta.clone())
}

/// Replaces each coefficient by its value at the action `p`.
fn freeze(z: &TrigPoly, p: &[f64]) -> Result<TrigPoly, CliError> {
    let n = z.n();
    Ok(z.map_modes(|m| Mode { k: m.k.clone(), coeff: Poly::constant(n, m.coeff.eval(p)) })?)
}

