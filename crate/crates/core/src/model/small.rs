//! Dense solves for the tiny systems that appear in inner loops.

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
/// Only the leading `n × n` block is used. Returns `false` on a singular pivot.
pub fn solve<const M: usize>(n: usize, a: &mut [[f64; M]; M], b: &mut [f64; M]) -> bool {
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return false;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in (r + 1)..n {
            s -= a[r][c] * b[c];
        }
        b[r] = s / a[r][r];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_pivoting_system() {
        let mut a = [[0.0, 2.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 3.0]];
        let mut b = [2.0, 3.0, 6.0];
        assert!(solve(3, &mut a, &mut b));
        assert!((b[0] - 2.0).abs() < 1e-15 && (b[1] - 1.0).abs() < 1e-15 && (b[2] - 2.0).abs() < 1e-15);
    }
}
