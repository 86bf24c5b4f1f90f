//! Smooth cutoff `ρ` and the truncated Taylor arithmetic used to differentiate it.

use std::ops::{Add, Mul, Neg, Sub};

/// Taylor coefficients `(f, f', f''/2, f'''/6)` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3(pub [f64; 4]);

impl Jet3 {
    pub fn constant(c: f64) -> Self {
        Jet3([c, 0.0, 0.0, 0.0])
    }

    pub fn variable(x: f64) -> Self {
        Jet3([x, 1.0, 0.0, 0.0])
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// `[f, f', f'', f''']`.
    pub fn derivatives(&self) -> [f64; 4] {
        let c = self.0;
        [c[0], c[1], 2.0 * c[2], 6.0 * c[3]]
    }

    pub fn recip(self) -> Self {
        let c0 = self.0[0];
        let u = Jet3([0.0, self.0[1] / c0, self.0[2] / c0, self.0[3] / c0]);
        let u2 = u * u;
        let u3 = u2 * u;
        let s = Jet3::constant(1.0) - u + u2 - u3;
        s.scale(1.0 / c0)
    }

    pub fn exp(self) -> Self {
        let e = self.0[0].exp();
        let u = Jet3([0.0, self.0[1], self.0[2], self.0[3]]);
        let u2 = u * u;
        let u3 = u2 * u;
        (Jet3::constant(1.0) + u + u2.scale(0.5) + u3.scale(1.0 / 6.0)).scale(e)
    }

    pub fn scale(self, s: f64) -> Self {
        Jet3([self.0[0] * s, self.0[1] * s, self.0[2] * s, self.0[3] * s])
    }

    pub fn div(self, other: Self) -> Self {
        self * other.recip()
    }
}

impl Add for Jet3 {
    type Output = Jet3;
    fn add(self, o: Jet3) -> Jet3 {
        Jet3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2], self.0[3] + o.0[3]])
    }
}

impl Sub for Jet3 {
    type Output = Jet3;
    fn sub(self, o: Jet3) -> Jet3 {
        self + (-o)
    }
}

impl Neg for Jet3 {
    type Output = Jet3;
    fn neg(self) -> Jet3 {
        self.scale(-1.0)
    }
}

impl Mul for Jet3 {
    type Output = Jet3;
    fn mul(self, o: Jet3) -> Jet3 {
        let (a, b) = (self.0, o.0);
        Jet3([
            a[0] * b[0],
            a[0] * b[1] + a[1] * b[0],
            a[0] * b[2] + a[1] * b[1] + a[2] * b[0],
            a[0] * b[3] + a[1] * b[2] + a[2] * b[1] + a[3] * b[0],
        ])
    }
}

// e^{-1/t}, flat at 0
fn flat(t: Jet3) -> Jet3 {
    if t.value() < 1e-3 {
        return Jet3::constant(0.0);
    }
    (-t.recip()).exp()
}

/// The bump: 1 on `|x| ≤ 1`, 0 on `|x| ≥ 2`, a smooth monotone step in between.
pub fn bump_jet(x: f64) -> Jet3 {
    let y = x.abs();
    if y <= 1.0 {
        return Jet3::constant(1.0);
    }
    if y >= 2.0 {
        return Jet3::constant(0.0);
    }
    let s = Jet3::variable(y) - Jet3::constant(1.0);
    let a = flat(Jet3::constant(1.0) - s);
    let b = flat(s);
    let mut j = a.div(a + b);
    if x < 0.0 {
        j.0[1] = -j.0[1];
        j.0[3] = -j.0[3];
    }
    j
}

pub fn bump(x: f64) -> f64 {
    bump_jet(x).value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_and_plateau() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(-1.0), 1.0);
        assert_eq!(bump(2.0), 0.0);
        assert_eq!(bump(-3.0), 0.0);
        assert!((bump(1.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 1..100 {
            let v = bump(1.0 + i as f64 / 100.0);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            if (5..=95).contains(&i) {
                assert!(v > 0.0 && v < 1.0 && v < prev);
            }
            prev = v;
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-4;
        for &x in &[1.1, 1.37, 1.5, 1.81, -1.6, -1.2] {
            let d = bump_jet(x).derivatives();
            let fd = |k: usize| {
                let f = |y: f64| bump_jet(y).derivatives()[k];
                (f(x + h) - f(x - h)) / (2.0 * h)
            };
            for k in 0..3 {
                let scale = 1.0 + d[k + 1].abs();
                assert!((d[k + 1] - fd(k)).abs() < 1e-5 * scale * 10.0, "x={x} k={k}: {} vs {}", d[k + 1], fd(k));
            }
        }
    }

    #[test]
    fn jet_arithmetic() {
        // 1/(1+x) and e^x at x = 0
        let x = Jet3::variable(0.0);
        let r = (Jet3::constant(1.0) + x).recip();
        assert_eq!(r.0, [1.0, -1.0, 1.0, -1.0]);
        let e = x.exp();
        assert!((e.0[3] - 1.0 / 6.0).abs() < 1e-16);
    }
}
