//! Human-readable summary and plot-ready tables assembled from a finished run.
//! Nothing is recomputed: every number is copied from the stage files.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::artifacts::{header, Manifest, OutputDir, Status};
use crate::error::CliError;

/// A stage table read back as strings.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Table, CliError> {
        let err = |source| CliError::Csv { path: path.display().to_string(), source };
        let mut r = csv::Reader::from_path(path).map_err(err)?;
        let header = r.headers().map_err(err)?.iter().map(String::from).collect();
        let rows = r.records().map(|rec| rec.map(|x| x.iter().map(String::from).collect())).collect::<Result<_, _>>().map_err(err)?;
        Ok(Table { header, rows })
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Keeps the named columns, in order.
    fn project(&self, names: &[&str]) -> Option<(Vec<String>, Vec<Vec<String>>)> {
        let idx: Vec<usize> = names.iter().map(|n| self.col(n)).collect::<Option<_>>()?;
        let rows = self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
        Some((header(names), rows))
    }
}

struct Family {
    output: &'static str,
    stage: &'static str,
    source: &'static str,
}

const FAMILIES: [Family; 5] = [
    Family { output: "report_branches.csv", stage: "genericity", source: "branches.csv" },
    Family { output: "report_remainder.csv", stage: "normal-form", source: "nf_samples.csv" },
    Family { output: "report_cylinder_slices.csv", stage: "nhic", source: "cylinder.csv" },
    Family { output: "report_alpha.csv", stage: "weak-kam", source: "alpha.csv" },
    Family { output: "report_drift.csv", stage: "orbit", source: "orbit.csv" },
];

/// Writes `report.txt` and one plot-ready CSV per available table family.
/// Returns the files written.
pub fn report(manifest_path: &Path, out: Option<PathBuf>) -> Result<Vec<String>, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    let run_dir = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let dir = OutputDir::create(&out.unwrap_or_else(|| run_dir.clone()))?;
    let mut text = String::new();
    let _ = writeln!(text, "{} {} run, exit status {}", manifest.tool, manifest.version, manifest.exit_code);
    for s in &manifest.stages {
        let _ = writeln!(text, "\n[{}] {:?} (exit {})", s.stage, s.status, s.exit_code);
        if let Some(map) = s.verdicts.as_object() {
            for (k, v) in map {
                let _ = writeln!(text, "  {k}: {v}");
            }
        }
        if let Some(map) = s.metrics.as_object() {
            for (k, v) in map {
                let _ = writeln!(text, "  {k} = {v}");
            }
        }
        if let Some(e) = &s.error {
            let _ = writeln!(text, "  error: {e}");
        }
        if let Some(w) = &s.witness {
            let _ = writeln!(text, "  witness: {w}");
        }
    }
    let _ = writeln!(text, "\ntables:");
    let mut files = Vec::new();
    for fam in &FAMILIES {
        let rec = manifest.stage(fam.stage);
        let present = rec.is_some_and(|r| r.status != Status::Skipped && r.files.iter().any(|f| f == fam.source));
        let src = run_dir.join(fam.source);
        if !present || !src.exists() {
            let why = match rec {
                None => "stage not run",
                Some(r) if r.status == Status::Skipped => "stage skipped",
                Some(_) => "stage file missing",
            };
            let _ = writeln!(text, "  {}: gap ({why})", fam.output);
            continue;
        }
        let table = Table::read(&src)?;
        let shaped = match fam.stage {
            "genericity" => branches(&table, &run_dir),
            "normal-form" => remainder(&table),
            "nhic" => slices(&table),
            "weak-kam" => table.project(&["cf", "alpha", "label"]),
            _ => table.project(&["seed", "t", "drift"]),
        };
        match shaped {
            Some((h, rows)) => {
                let _ = writeln!(text, "  {}: {} rows from {}", fam.output, rows.len(), fam.source);
                files.push(dir.csv(fam.output, &h, &rows)?);
            }
            None => {
                let _ = writeln!(text, "  {}: gap (unexpected columns in {})", fam.output, fam.source);
            }
        }
    }
    let path = dir.path().join("report.txt");
    std::fs::write(&path, &text).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    files.insert(0, "report.txt".into());
    Ok(files)
}

/// Branch table with a flag marking the branch that carries the global maximum.
fn branches(t: &Table, run_dir: &Path) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let global: HashSet<(u64, String)> = std::fs::read_to_string(run_dir.join("genericity.json"))
        .ok()
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
        .and_then(|v| v.get("global").cloned())
        .and_then(|g| serde_json::from_value::<Vec<(f64, usize)>>(g).ok())
        .unwrap_or_default()
        .into_iter()
        .map(|(pf, id)| (pf.to_bits(), id.to_string()))
        .collect();
    let (pf, br) = (t.col("pf")?, t.col("branch")?);
    let (h, rows) = t.project(&["pf", "branch", "value", "min_eig"])?;
    let mut h = h;
    h.push("global".into());
    let rows = rows
        .into_iter()
        .zip(&t.rows)
        .map(|(mut r, src)| {
            let key = (src[pf].parse::<f64>().map(f64::to_bits).unwrap_or(u64::MAX), src[br].clone());
            r.push(u8::from(global.contains(&key)).to_string());
            r
        })
        .collect();
    Some((h, rows))
}

/// `|R|` against the fast action.
fn remainder(t: &Table) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let n = t.header.iter().filter(|h| h.starts_with("p_")).count();
    let pf = format!("p_{n}");
    t.project(&[pf.as_str(), "remainder", "displacement"])
}

/// Cylinder at the first stored time and fast angle, as a function of `p^f`.
fn slices(t: &Table) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let (tc, fc) = (t.col("t")?, t.col("theta_f")?);
    let first = |c: usize| t.rows.iter().map(|r| r[c].parse::<f64>().unwrap_or(f64::INFINITY)).fold(f64::INFINITY, f64::min);
    let (t0, f0) = (first(tc), first(fc));
    let keep: Vec<&str> = t.header.iter().map(String::as_str).filter(|h| *h != "t" && *h != "theta_f").collect();
    let (h, rows) = t.project(&keep)?;
    let rows = rows
        .into_iter()
        .zip(&t.rows)
        .filter(|(_, src)| src[tc].parse::<f64>().ok() == Some(t0) && src[fc].parse::<f64>().ok() == Some(f0))
        .map(|(r, _)| r)
        .collect();
    Some((h, rows))
}
