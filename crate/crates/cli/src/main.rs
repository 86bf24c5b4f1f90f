//! `arnold-lab`: configuration-driven front end for the resonance pipeline.
//!
//! Exit statuses: 0 pass, 2 certificate failure, 3 numerical non-convergence,
//! 4 configuration error.

mod artifacts;
mod config;
mod error;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, Stage};
use crate::error::{CliError, EXIT_CONFIG, EXIT_PASS};

#[derive(Parser)]
#[command(name = "arnold-lab", version, about = "Normal forms, invariant cylinders and weak KAM diagnostics along a resonance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every stage; they override the config file.
#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Maxima of the averaged potential along the resonance and the nondegeneracy conditions.
    Genericity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pf_samples: Option<usize>,
    },
    /// Builds the resonant normal form and verifies its remainder on random samples.
    NormalForm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k_modes: Option<i64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Certifies an isolating block and computes the invariant cylinder.
    Nhic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_theta: Option<usize>,
        #[arg(long)]
        n_pf: Option<usize>,
        #[arg(long)]
        n_t: Option<usize>,
    },
    /// Critical values, Aubry sets, barriers and labels over a range of fast cohomologies.
    WeakKam {
        #[command(flatten)]
        common: Common,
        /// Explicit fast cohomologies, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        cf: Option<Vec<f64>>,
        #[arg(long, allow_negative_numbers = true)]
        cf_lo: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        cf_hi: Option<f64>,
        #[arg(long)]
        cf_count: Option<usize>,
        /// Angle grid of the reduced kernel.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        classify_grid: Option<usize>,
        #[arg(long)]
        knots: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Long symplectic orbits seeded near the resonance.
    Orbit {
        #[command(flatten)]
        common: Common,
        /// Integration time.
        #[arg(long = "T", alias = "duration")]
        duration: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Runs every enabled stage in order and writes the manifest.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
    /// Summarizes a finished run from its manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for the report files; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(v) = &common.out {
        cfg.output = v.clone();
    }
    if let Some(v) = common.eps {
        cfg.params.eps = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.workers {
        cfg.workers = Some(v);
    }
    Ok(cfg)
}

/// Config with overrides applied, and the stages to run.
fn prepare(command: Command) -> Result<(RunConfig, Vec<Stage>), CliError> {
    let (cfg, stages) = match command {
        Command::Genericity { common, pf_samples } => {
            let mut cfg = load(&common)?;
            if let Some(v) = pf_samples {
                cfg.grids.pf_samples = v;
            }
            (cfg, vec![Stage::Genericity])
        }
        Command::NormalForm { common, k_modes, beta, delta, samples } => {
            let mut cfg = load(&common)?;
            let p = &mut cfg.params;
            p.k_modes = k_modes.unwrap_or(p.k_modes);
            p.beta = beta.unwrap_or(p.beta);
            p.delta_target = delta.unwrap_or(p.delta_target);
            p.nf_samples = samples.unwrap_or(p.nf_samples);
            (cfg, vec![Stage::NormalForm])
        }
        Command::Nhic { common, n_theta, n_pf, n_t } => {
            let mut cfg = load(&common)?;
            let c = &mut cfg.grids.cylinder;
            *c = [n_theta.unwrap_or(c[0]), n_pf.unwrap_or(c[1]), n_t.unwrap_or(c[2])];
            (cfg, vec![Stage::Nhic])
        }
        Command::WeakKam { common, cf, cf_lo, cf_hi, cf_count, grid, classify_grid, knots, tol } => {
            let mut cfg = load(&common)?;
            let w = &mut cfg.weak_kam;
            if cf.is_some() {
                w.cf_values = cf;
            } else if cf_lo.is_some() || cf_hi.is_some() || cf_count.is_some() {
                let (lo, hi) = (cf_lo.unwrap_or(cfg.grids.pf_lo), cf_hi.unwrap_or(cfg.grids.pf_hi));
                let m = cf_count.unwrap_or(w.cf_count);
                w.cf_values = Some(match m {
                    0 => vec![],
                    1 => vec![0.5 * (lo + hi)],
                    _ => (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect(),
                });
            }
            w.tol = tol.unwrap_or(w.tol);
            let g = &mut cfg.grids;
            g.angle_grid = grid.unwrap_or(g.angle_grid);
            g.classify_grid = classify_grid.unwrap_or(g.classify_grid);
            g.knots = knots.unwrap_or(g.knots);
            (cfg, vec![Stage::WeakKam])
        }
        Command::Orbit { common, duration, dt, seeds } => {
            let mut cfg = load(&common)?;
            let o = &mut cfg.orbit;
            o.duration = duration.unwrap_or(o.duration);
            o.dt = dt.unwrap_or(o.dt);
            o.seeds = seeds.unwrap_or(o.seeds);
            (cfg, vec![Stage::Orbit])
        }
        Command::Pipeline { common } => {
            let cfg = load(&common)?;
            let stages = cfg.enabled();
            (cfg, stages)
        }
        Command::Report { .. } => unreachable!("handled before"),
    };
    cfg.validate(&stages)?;
    Ok((cfg, stages))
}

fn run(command: Command) -> Result<i32, CliError> {
    if let Command::Report { manifest, out } = command {
        for f in report::report(&manifest, out)? {
            println!("{f}");
        }
        return Ok(EXIT_PASS);
    }
    let (cfg, stages) = prepare(command)?;
    if let Some(w) = cfg.workers {
        // read once by the thread pool on first use
        std::env::set_var("RAYON_NUM_THREADS", w.to_string());
    }
    let manifest = stages::Runner::new(&cfg)?.run(&stages)?;
    for s in &manifest.stages {
        let detail = s.error.as_deref().map(|e| format!(": {e}")).unwrap_or_default();
        println!("{:<12} {:?}{detail}", s.stage, s.status);
    }
    println!("manifest: {}", cfg.output.join("manifest.json").display());
    Ok(manifest.exit_code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG as u8) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
