//! Multivariate polynomials in the action variables.

use num_complex::Complex64;

use super::MAX_N;

/// Sparse polynomial `Σ c_e p^e` with complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: Vec<(Vec<u32>, Complex64)>,
}

fn falling(e: u32, a: u32) -> f64 {
    (0..a).map(|j| (e - j) as f64).product()
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: Vec::new() }
    }

    pub fn constant(nvars: usize, c: Complex64) -> Self {
        Poly::from_terms(nvars, vec![(vec![0; nvars], c)])
    }

    /// Builds a polynomial, merging repeated exponents and dropping zeros.
    pub fn from_terms(nvars: usize, terms: Vec<(Vec<u32>, Complex64)>) -> Self {
        let mut merged: Vec<(Vec<u32>, Complex64)> = Vec::new();
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent length");
            match merged.iter_mut().find(|(f, _)| *f == e) {
                Some(slot) => slot.1 += c,
                None => merged.push((e, c)),
            }
        }
        merged.retain(|(_, c)| c.norm() != 0.0);
        merged.sort_by(|a, b| a.0.cmp(&b.0));
        Poly { nvars, terms: merged }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[(Vec<u32>, Complex64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    pub fn conj(&self) -> Self {
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c.conj())).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Poly::from_terms(self.nvars, self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect())
    }

    pub fn add(&self, other: &Poly) -> Self {
        let mut t = self.terms.clone();
        t.extend(other.terms.iter().cloned());
        Poly::from_terms(self.nvars, t)
    }

    /// Substitutes `p_i -> s_i p_i`.
    pub fn rescale_vars(&self, s: &[f64]) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let f: f64 = e.iter().zip(s).map(|(&k, &si)| si.powi(k as i32)).product();
                (e.clone(), c * f)
            })
            .collect();
        Poly::from_terms(self.nvars, terms)
    }

    /// Largest coefficient distance between two polynomials.
    pub fn max_diff(&self, other: &Poly) -> f64 {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
            .terms
            .iter()
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
    }

    pub fn eval(&self, p: &[f64]) -> Complex64 {
        self.eval_deriv(p, &vec![0; self.nvars])
    }

    /// Exact partial derivative `∂^a` evaluated at `p`.
    pub fn eval_deriv(&self, p: &[f64], a: &[u32]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        'terms: for (e, c) in &self.terms {
            let mut m = 1.0;
            for i in 0..self.nvars {
                if e[i] < a[i] {
                    continue 'terms;
                }
                m *= falling(e[i], a[i]) * p[i].powi((e[i] - a[i]) as i32);
            }
            acc += c * m;
        }
        acc
    }

    /// Value, gradient and Hessian in one pass.
    pub fn jet2(&self, p: &[f64]) -> (Complex64, [Complex64; MAX_N], [[Complex64; MAX_N]; MAX_N]) {
        let n = self.nvars;
        let zero = Complex64::new(0.0, 0.0);
        let mut v = zero;
        let mut g = [zero; MAX_N];
        let mut h = [[zero; MAX_N]; MAX_N];
        for (e, c) in &self.terms {
            let mut pw = [1.0; MAX_N];
            let mut pw1 = [0.0; MAX_N];
            let mut pw2 = [0.0; MAX_N];
            for i in 0..n {
                let k = e[i] as i32;
                pw[i] = p[i].powi(k);
                if k >= 1 {
                    pw1[i] = k as f64 * p[i].powi(k - 1);
                }
                if k >= 2 {
                    pw2[i] = (k * (k - 1)) as f64 * p[i].powi(k - 2);
                }
            }
            let prod_except = |skip: &[usize]| -> f64 {
                (0..n).filter(|j| !skip.contains(j)).map(|j| pw[j]).product()
            };
            v += c * prod_except(&[]);
            for i in 0..n {
                if e[i] == 0 {
                    continue;
                }
                g[i] += c * (pw1[i] * prod_except(&[i]));
                h[i][i] += c * (pw2[i] * prod_except(&[i]));
                for j in (i + 1)..n {
                    if e[j] == 0 {
                        continue;
                    }
                    let d = c * (pw1[i] * pw1[j] * prod_except(&[i, j]));
                    h[i][j] += d;
                    h[j][i] += d;
                }
            }
        }
        (v, g, h)
    }

    /// Upper bound of `sup |∂^a P|` over the box `Π [lo_i, hi_i]`.
    pub fn deriv_bound(&self, a: &[u32], lo: &[f64], hi: &[f64]) -> f64 {
        let mut acc = 0.0;
        'terms: for (e, c) in &self.terms {
            let mut m = 1.0;
            for i in 0..self.nvars {
                if e[i] < a[i] {
                    continue 'terms;
                }
                let r = lo[i].abs().max(hi[i].abs());
                m *= falling(e[i], a[i]) * r.powi((e[i] - a[i]) as i32);
            }
            acc += c.norm() * m;
        }
        acc
    }
}
