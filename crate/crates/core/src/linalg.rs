//! Dense symmetric solves for the weighted normal equations.
//!
//! Matrices here are small (p up to a few dozen), so a hand-rolled Cholesky
//! is plenty. Factorization works on the diagonally equilibrated matrix
//! `D^{-1/2} A D^{-1/2}` so the pivot-ratio rank rule is scale invariant.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};

/// Scaled pivot below which the matrix is declared rank deficient.
pub const PIVOT_TOL: f64 = 1e-10;

/// Cholesky factorization of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SymFactor {
    /// Lower-triangular factor of the equilibrated matrix.
    l: Array2<f64>,
    /// `1/sqrt(diag(A))` used for equilibration.
    scale: Array1<f64>,
    p: usize,
}

impl SymFactor {
    /// Factor `a`, failing with [`Error::RankDeficient`] when any scaled
    /// pivot falls below `PIVOT_TOL`.
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let p = a.nrows();
        assert_eq!(p, a.ncols(), "SymFactor requires a square matrix");
        let mut scale = Array1::zeros(p);
        for j in 0..p {
            let d = a[(j, j)];
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::RankDeficient { col: j, pivot: 0.0 });
            }
            scale[j] = 1.0 / d.sqrt();
        }
        let mut l = Array2::zeros((p, p));
        for j in 0..p {
            for i in j..p {
                let mut s = a[(i, j)] * scale[i] * scale[j];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    // s is the scaled pivot; exactly 1 at j=0, in (0,1] for a
                    // well-conditioned matrix.
                    if !(s.is_finite() && s > PIVOT_TOL) {
                        return Err(Error::RankDeficient { col: j, pivot: s });
                    }
                    l[(j, j)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(Self { l, scale, p })
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let mut x = Array1::zeros(self.p);
        // A = D^{1/2} L L^T D^{1/2}  =>  x = D^{-1/2} L^-T L^-1 D^{-1/2} b
        for i in 0..self.p {
            let mut s = b[i] * self.scale[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        for i in (0..self.p).rev() {
            let mut s = x[i];
            for k in i + 1..self.p {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        for i in 0..self.p {
            x[i] *= self.scale[i];
        }
        x
    }

    /// Inverse of the factored matrix.
    pub fn inverse(&self) -> Array2<f64> {
        let mut inv = Array2::zeros((self.p, self.p));
        let mut e = Array1::zeros(self.p);
        for j in 0..self.p {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.solve(e.view());
            inv.column_mut(j).assign(&col);
        }
        // symmetrize to wash out round-off
        for i in 0..self.p {
            for j in 0..i {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }

    /// Quadratic form `x^T A^{-1} x` via one forward substitution.
    pub fn inv_quad_form(&self, x: ArrayView1<f64>) -> f64 {
        let mut v = Array1::zeros(self.p);
        for i in 0..self.p {
            let mut s = x[i] * self.scale[i];
            for k in 0..i {
                s -= self.l[(i, k)] * v[k];
            }
            v[i] = s / self.l[(i, i)];
        }
        v.iter().map(|t| t * t).sum()
    }
}

/// Accumulate the weighted Gram matrix `X^T diag(w) X` (lower half mirrored).
pub fn weighted_gram(x: &Array2<f64>, w: &Array1<f64>) -> Array2<f64> {
    let (n, p) = x.dim();
    let mut g = Array2::zeros((p, p));
    for i in 0..n {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        let row = x.row(i);
        for a in 0..p {
            let ra = wi * row[a];
            for b in 0..=a {
                g[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(b, a)] = g[(a, b)];
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solve_and_inverse_round_trip() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, -0.2], [0.5, -0.2, 2.0]];
        let f = SymFactor::new(&a).unwrap();
        let b = array![1.0, -2.0, 0.3];
        let x = f.solve(b.view());
        let back = a.dot(&x);
        for i in 0..3 {
            assert!((back[i] - b[i]).abs() < 1e-12);
        }
        let inv = f.inverse();
        let prod = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() < 1e-10);
            }
        }
        let q = f.inv_quad_form(b.view());
        assert!((q - b.dot(&x)).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_detected() {
        // second column is twice the first
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        match SymFactor::new(&a) {
            Err(Error::RankDeficient { .. }) => {}
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn scale_invariance_of_pivot_rule() {
        // same geometry at wildly different column scales still factors
        let a = array![[1e-8, 0.0], [0.0, 1e8]];
        assert!(SymFactor::new(&a).is_ok());
    }
}
