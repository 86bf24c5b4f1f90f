//! Labels a cohomology class from grid evidence.

use serde::Serialize;

use super::kernel::ActionKernel;
use super::solve::{barrier_functions, BarrierFunctions, MatherData, WeakKamSolution};
use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CohomologyLabel {
    /// Projection to the fast angle misses an interval.
    Gamma0,
    /// Aubry set is an invariant circle, graph over the fast angle.
    Gamma1,
    /// Circle whose double-cover barriers have isolated minima.
    Gamma1Star,
    /// Two static classes.
    Gamma2,
    /// Two static classes with isolated barrier minima.
    Gamma2Star,
    Unresolved,
}

#[derive(Clone, Debug, Serialize)]
pub struct Evidence {
    /// Longest run of fast-angle cells missed by the calibrated set.
    pub fast_gap_cells: usize,
    pub static_classes: usize,
    /// Classes left after merging fast-axis translates that tile one circle.
    pub merged_classes: usize,
    /// Every fast-angle column holds exactly one Aubry node.
    pub circle_graph: bool,
    /// No column holds two nodes of the same static class.
    pub injective: bool,
    pub barriers: Option<BarrierFunctions>,
    pub cover_classes: Option<usize>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub c: Vec<f64>,
    pub label: CohomologyLabel,
    pub evidence: Evidence,
}

/// Solved data on the double cover, used to star a circle.
pub struct CoverData<'a> {
    pub kernel: &'a ActionKernel,
    pub solution: &'a WeakKamSolution,
    pub mather: &'a MatherData,
}

fn longest_gap(hit: &[bool]) -> usize {
    let n = hit.len();
    if hit.iter().all(|&h| !h) {
        return n;
    }
    let start = hit.iter().position(|&h| h).unwrap_or(0);
    let (mut best, mut run) = (0, 0);
    for i in 1..=n {
        if hit[(start + i) % n] {
            run = 0;
        } else {
            run += 1;
            best = best.max(run);
        }
    }
    best
}

/// Projection of `nodes` to the fast axis, as column counts.
fn columns(kernel: &ActionKernel, nodes: &[usize], fast_axis: usize) -> Vec<usize> {
    let mut count = vec![0; kernel.grid.n];
    for &x in nodes {
        count[kernel.grid.multi(x)[fast_axis] as usize] += 1;
    }
    count
}

/// Groups static classes that are translates of one another along the fast
/// axis and together meet every fast column exactly once. A grid step of `g`
/// cells with `g | N` splits one circle into `g` such cycles.
fn merge_translates(kernel: &ActionKernel, classes: &[Vec<usize>], fast_axis: usize) -> Vec<Vec<usize>> {
    let g = &kernel.grid;
    let sorted: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| {
            let mut v = c.clone();
            v.sort_unstable();
            v
        })
        .collect();
    let translate = |a: &[usize], b: &[usize]| {
        a.len() == b.len()
            && (1..g.n as i64).any(|s| {
                let mut d = vec![0; g.dim];
                d[fast_axis] = s;
                let mut t: Vec<usize> = a.iter().map(|&x| g.shift(x, &d)).collect();
                t.sort_unstable();
                t == b
            })
    };
    let mut family = vec![usize::MAX; classes.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..classes.len() {
        if family[i] != usize::MAX {
            continue;
        }
        let members: Vec<usize> = (i..classes.len()).filter(|&j| family[j] == usize::MAX && (j == i || translate(&sorted[i], &sorted[j]))).collect();
        let union: Vec<usize> = members.iter().flat_map(|&j| classes[j].iter().copied()).collect();
        let tiles = members.len() > 1 && columns(kernel, &union, fast_axis).iter().all(|&c| c == 1);
        let members = if tiles { members } else { vec![i] };
        for &j in &members {
            family[j] = groups.len();
        }
        groups.push(members.iter().flat_map(|&j| classes[j].iter().copied()).collect());
    }
    groups
}

pub fn classify_cohomology(kernel: &ActionKernel, sol: &WeakKamSolution, mather: &MatherData, fast_axis: usize, cover: Option<CoverData>) -> Result<Classification> {
    if fast_axis >= kernel.grid.dim {
        return Err(LabError::Dimension(format!("fast axis {fast_axis} outside a grid of dimension {}", kernel.grid.dim)));
    }
    let hit: Vec<bool> = columns(kernel, &mather.calibrated, fast_axis).iter().map(|&c| c > 0).collect();
    let fast_gap_cells = longest_gap(&hit);
    let aubry_cols = columns(kernel, &mather.aubry, fast_axis);
    let circle_graph = aubry_cols.iter().all(|&c| c == 1);
    let injective = mather.static_classes.iter().all(|cl| columns(kernel, cl, fast_axis).iter().all(|&c| c <= 1));
    let classes = merge_translates(kernel, &mather.static_classes, fast_axis);
    let mut ev = Evidence { fast_gap_cells, static_classes: mather.static_classes.len(), merged_classes: classes.len(), circle_graph, injective, barriers: None, cover_classes: None, notes: vec![] };
    let label = if fast_gap_cells >= 2 {
        CohomologyLabel::Gamma0
    } else {
        if classes.len() < mather.static_classes.len() {
            ev.notes.push(format!("{} static classes are fast-axis translates tiling {} circle(s)", mather.static_classes.len(), classes.len()));
        }
        match classes.len() {
            1 if circle_graph => match cover {
                Some(cv) => {
                    ev.cover_classes = Some(cv.mather.static_classes.len());
                    if cv.mather.static_classes.len() == 2 {
                        let (a, b) = (cv.mather.static_classes[0][0], cv.mather.static_classes[1][0]);
                        ev.notes.push(format!("cover barriers through nodes {a} and {b}, the lowest index of each class"));
                        let bf = barrier_functions(cv.kernel, cv.solution, cv.mather, a, b)?;
                        let star = bf.nondegenerate;
                        ev.barriers = Some(bf);
                        if star {
                            CohomologyLabel::Gamma1Star
                        } else {
                            CohomologyLabel::Gamma1
                        }
                    } else {
                        ev.notes.push("cover does not split the circle into two classes".into());
                        CohomologyLabel::Unresolved
                    }
                }
                None => {
                    ev.notes.push("no cover data: star not decided".into());
                    CohomologyLabel::Gamma1
                }
            },
            1 => {
                ev.notes.push("one static class that is neither gapped nor a circle graph".into());
                CohomologyLabel::Unresolved
            }
            2 => {
                let (a, b) = (classes[0].iter().copied().min().unwrap_or(0), classes[1].iter().copied().min().unwrap_or(0));
                ev.notes.push(format!("barriers through nodes {a} and {b}, the lowest index of each class"));
                let bf = barrier_functions(kernel, sol, mather, a, b)?;
                let star = bf.nondegenerate;
                ev.barriers = Some(bf);
                if star {
                    CohomologyLabel::Gamma2Star
                } else {
                    CohomologyLabel::Gamma2
                }
            }
            k => {
                ev.notes.push(format!("{k} static classes"));
                CohomologyLabel::Unresolved
            }
        }
    };
    Ok(Classification { c: kernel.c.clone(), label, evidence: ev })
}
