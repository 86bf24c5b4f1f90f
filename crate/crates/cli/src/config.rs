//! Run configuration: a JSON document, optionally overridden from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Where the Hamiltonian comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    /// JSON model document; relative paths resolve against the config file.
    File(PathBuf),
    /// Built-in pendulum × rotator with forcing amplitude `mu`.
    Arnold { mu: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub eps: f64,
    /// Remainder size the normal form must reach, in `(0, 1]`.
    pub delta_target: f64,
    pub k_modes: i64,
    pub beta: f64,
    /// Fast-angle stretch of the cylinder chart; derived from the remainder when absent.
    pub gamma: Option<f64>,
    /// Constant of the advisory scalings.
    pub advisor_c: f64,
    pub nf_samples: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params { eps: 1e-3, delta_target: 1.0, k_modes: 2, beta: 0.1, gamma: None, advisor_c: 1.0, nf_samples: 1000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// Fast-action window along the resonance.
    pub pf_lo: f64,
    pub pf_hi: f64,
    pub pf_samples: usize,
    /// Extra room on each side of the window for the cylinder chart.
    pub chart_margin: f64,
    /// Cylinder nodes in `θ^f`, `p^f` and `t`.
    pub cylinder: [usize; 3],
    pub block_density: usize,
    /// Angle grid of the one-dimensional reduced kernel.
    pub angle_grid: usize,
    pub knots: usize,
    /// Angle grid and knots of the two-dimensional kernel used for labels.
    pub classify_grid: usize,
    pub classify_knots: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            pf_lo: 0.3,
            pf_hi: 0.7,
            pf_samples: 41,
            chart_margin: 0.25,
            cylinder: [8, 8, 4],
            block_density: 8,
            angle_grid: 64,
            knots: 4,
            classify_grid: 24,
            classify_knots: 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub genericity: bool,
    pub normal_form: bool,
    pub nhic: bool,
    pub weak_kam: bool,
    pub orbit: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages { genericity: true, normal_form: true, nhic: true, weak_kam: true, orbit: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakKamSettings {
    /// Explicit fast cohomologies; otherwise `cf_count` points spanning the window.
    pub cf_values: Option<Vec<f64>>,
    pub cf_count: usize,
    /// Velocity caps around the resonant frequency, slow and fast.
    pub cap: f64,
    pub fast_cap: f64,
    pub tol: f64,
}

impl Default for WeakKamSettings {
    fn default() -> Self {
        WeakKamSettings { cf_values: None, cf_count: 5, cap: 0.5, fast_cap: 0.2, tol: 1e-9 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSettings {
    pub seeds: usize,
    pub dt: f64,
    pub duration: f64,
    pub stride: usize,
    /// Seeds sit this close to the resonance in the slow variables.
    pub offset: f64,
    pub energy_tol: f64,
}

impl Default for OrbitSettings {
    fn default() -> Self {
        OrbitSettings { seeds: 4, dt: 1e-2, duration: 100.0, stride: 100, offset: 1e-3, energy_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub stages: Stages,
    #[serde(default)]
    pub weak_kam: WeakKamSettings,
    #[serde(default)]
    pub orbit: OrbitSettings,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads for the parallel stages; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    1
}

/// Pipeline stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Genericity,
    NormalForm,
    Nhic,
    WeakKam,
    Orbit,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Genericity, Stage::NormalForm, Stage::Nhic, Stage::WeakKam, Stage::Orbit];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Genericity => "genericity",
            Stage::NormalForm => "normal-form",
            Stage::Nhic => "nhic",
            Stage::WeakKam => "weak-kam",
            Stage::Orbit => "orbit",
        }
    }

    /// Stages whose failure halts this one.
    pub fn depends_on(self) -> &'static [Stage] {
        match self {
            Stage::Genericity | Stage::Orbit => &[],
            Stage::NormalForm | Stage::WeakKam => &[Stage::Genericity],
            Stage::Nhic => &[Stage::Genericity, Stage::NormalForm],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let ModelSpec::File(p) = &mut cfg.model {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn enabled(&self) -> Vec<Stage> {
        let s = &self.stages;
        let on = [s.genericity, s.normal_form, s.nhic, s.weak_kam, s.orbit];
        Stage::ALL.iter().zip(on).filter(|(_, b)| *b).map(|(s, _)| *s).collect()
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.model, ModelSpec::Arnold { .. })
    }

    /// Fast cohomologies for the weak KAM stage.
    pub fn cf_values(&self) -> Vec<f64> {
        if let Some(v) = &self.weak_kam.cf_values {
            return v.clone();
        }
        let m = self.weak_kam.cf_count;
        let (lo, hi) = (self.grids.pf_lo, self.grids.pf_hi);
        if m == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
    }

    /// Checks parameter ranges and that every requested stage has what it needs.
    pub fn validate(&self, stages: &[Stage]) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        let p = &self.params;
        let g = &self.grids;
        if !(p.eps > 0.0 && p.eps.is_finite()) {
            return bad("eps must be positive");
        }
        if !(p.delta_target > 0.0 && p.delta_target <= 1.0) {
            return bad("delta_target must lie in (0, 1]");
        }
        if p.k_modes < 1 || !(p.beta > 0.0) || !(p.advisor_c > 0.0) || p.nf_samples == 0 {
            return bad("k_modes, beta, advisor_c and nf_samples must be positive");
        }
        if p.gamma.is_some_and(|v| !(v > 0.0)) {
            return bad("gamma must be positive");
        }
        if !(g.pf_lo < g.pf_hi) || g.pf_samples < 2 || g.chart_margin < 0.0 {
            return bad("need pf_lo < pf_hi, pf_samples ≥ 2 and chart_margin ≥ 0");
        }
        if g.cylinder.iter().any(|&v| v == 0) || g.block_density < 2 {
            return bad("cylinder grid sizes must be positive and block_density ≥ 2");
        }
        if let ModelSpec::Arnold { mu } = self.model {
            if !(mu >= 0.0 && mu.is_finite()) {
                return bad("mu must be non-negative");
            }
        }
        if stages.contains(&Stage::Nhic) && !self.is_analytic() && !stages.contains(&Stage::NormalForm) {
            return bad("nhic needs the normal-form stage or an analytic model");
        }
        if stages.contains(&Stage::WeakKam) {
            let w = &self.weak_kam;
            if g.angle_grid < 4 || g.classify_grid < 4 {
                return bad("weak-kam needs angle grids of at least 4 cells");
            }
            if !(w.cap > 0.0 && w.fast_cap > 0.0 && w.tol > 0.0) || self.cf_values().is_empty() {
                return bad("weak-kam needs positive caps and tolerance and at least one c^f");
            }
        }
        if stages.contains(&Stage::Orbit) {
            let o = &self.orbit;
            if o.seeds == 0 || !(o.dt > 0.0 && o.duration > 0.0) || o.stride == 0 || o.offset < 0.0 || !(o.energy_tol > 0.0) {
                return bad("orbit needs seeds ≥ 1, positive dt, duration, stride and energy_tol");
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive");
        }
        Ok(())
    }
}
