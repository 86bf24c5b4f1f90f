//! JSON model documents.
//!
//! ```json
//! { "n": 2,
//!   "h0": { "coeff": { "2,0": 0.5, "0,2": 0.5 }, "convexity": 1.0,
//!           "box": { "lo": [-1, -1], "hi": [1, 1] } },
//!   "h1": { "smoothness": 6,
//!           "modes": [ { "k": [1, 0, 0], "coeff": { "0,0": [0.5, 0.0] } } ] } }
//! ```
//! Exponent keys list one power per action variable. Modes may be given for
//! `k ⪰ 0` only; the conjugate partners are filled in.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ActionBox, Hamiltonian, IntegrablePart, Mode, Poly, TrigPoly};
use crate::error::{LabError, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxFile {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H0File {
    pub coeff: BTreeMap<String, f64>,
    pub convexity: f64,
    #[serde(rename = "box")]
    pub action_box: BoxFile,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeFile {
    pub k: Vec<i64>,
    pub coeff: BTreeMap<String, [f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H1File {
    #[serde(default = "default_smoothness")]
    pub smoothness: u32,
    pub modes: Vec<ModeFile>,
}

fn default_smoothness() -> u32 {
    6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub h0: H0File,
    pub h1: H1File,
}

fn parse_exponent(key: &str, n: usize) -> Result<Vec<u32>> {
    let e: std::result::Result<Vec<u32>, _> = key.split(',').map(|s| s.trim().parse::<u32>()).collect();
    match e {
        Ok(v) if v.len() == n => Ok(v),
        _ => Err(LabError::Model(format!("bad exponent key {key:?} for n = {n}"))),
    }
}

fn exponent_key(e: &[u32]) -> String {
    e.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn integrable_part(&self) -> Result<IntegrablePart> {
        let n = self.n;
        let mut terms = Vec::new();
        for (key, c) in &self.h0.coeff {
            terms.push((parse_exponent(key, n)?, Complex64::new(*c, 0.0)));
        }
        let b = ActionBox::new(self.h0.action_box.lo.clone(), self.h0.action_box.hi.clone())?;
        IntegrablePart::new(Poly::from_terms(n, terms), self.h0.convexity, b)
    }

    pub fn perturbation(&self) -> Result<TrigPoly> {
        let n = self.n;
        let mut modes = Vec::new();
        for m in &self.h1.modes {
            if m.k.len() != n + 1 {
                return Err(LabError::Model(format!("mode {:?} needs {} entries", m.k, n + 1)));
            }
            let mut terms = Vec::new();
            for (key, [re, im]) in &m.coeff {
                terms.push((parse_exponent(key, n)?, Complex64::new(*re, *im)));
            }
            modes.push(Mode { k: m.k.clone(), coeff: Poly::from_terms(n, terms) });
        }
        TrigPoly::from_half(n, self.h1.smoothness, modes)
    }

    pub fn hamiltonian(&self, eps: f64) -> Result<Hamiltonian> {
        Hamiltonian::new(self.integrable_part()?, self.perturbation()?, eps)
    }

    /// Serializes a Hamiltonian, storing only modes `k ⪰ 0`.
    pub fn from_parts(h0: &IntegrablePart, h1: &TrigPoly) -> Self {
        let n = h0.n();
        let coeff = h0.poly().terms().iter().map(|(e, c)| (exponent_key(e), c.re)).collect();
        let modes = h1
            .modes()
            .iter()
            .filter(|m| m.k.iter().find(|&&x| x != 0).map_or(true, |&x| x > 0))
            .map(|m| ModeFile {
                k: m.k.clone(),
                coeff: m.coeff.terms().iter().map(|(e, c)| (exponent_key(e), [c.re, c.im])).collect(),
            })
            .collect();
        ModelFile {
            n,
            h0: H0File {
                coeff,
                convexity: h0.convexity(),
                action_box: BoxFile { lo: h0.action_box().lo.clone(), hi: h0.action_box().hi.clone() },
            },
            h1: H1File { smoothness: h1.smoothness(), modes },
        }
    }
}
