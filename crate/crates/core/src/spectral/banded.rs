//! Banded LU with partial pivoting, used for shift-invert and sparse solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// LU factors of a banded matrix. Row `i` stores columns
/// `i - kl ..= i + kl + ku` to leave room for pivoting fill.
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    /// Factors `a + shift * I`.
    pub fn factor(a: &CsrMatrix, shift: f64) -> Result<Self> {
        let n = a.nrows();
        let b = a.bandwidth();
        let (kl, ku) = (b, b);
        let width = 2 * kl + ku + 1;
        let mut lu = Self { n, kl, ku, width, ab: vec![0.0; n * width], piv: vec![0; n] };
        for i in 0..n {
            for (j, v) in a.row(i) {
                let k = lu.idx(i, j);
                lu.ab[k] += v;
            }
            let k = lu.idx(i, i);
            lu.ab[k] += shift;
        }
        let scale = a.max_abs().max(shift.abs()).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.ab[lu.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = lu.ab[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            lu.piv[k] = p;
            if best <= 1e-300 || best <= f64::EPSILON * 1e-3 * scale {
                return Err(Error::Singular(format!("zero pivot at column {k}")));
            }
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a1, a2) = (lu.idx(k, j), lu.idx(p, j));
                    lu.ab.swap(a1, a2);
                }
            }
            let pivot = lu.ab[lu.idx(k, k)];
            for i in k + 1..=last {
                let ik = lu.idx(i, k);
                let l = lu.ab[ik] / pivot;
                lu.ab[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let kj = lu.ab[lu.idx(k, j)];
                        let ij = lu.idx(i, j);
                        lu.ab[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut x = rhs.clone();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap_rows(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + self.kl).min(n.saturating_sub(1)) {
                x[i] -= self.ab[self.idx(i, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + self.kl + self.ku).min(n - 1) {
                s -= self.ab[self.idx(k, j)] * x[j];
            }
            x[k] = s / self.ab[self.idx(k, k)];
        }
        x
    }
}

/// A factored linear operator, dense or banded.
pub enum Factored {
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Band(BandLu),
}

impl Factored {
    /// Factors `a + shift * I`, banded when the bandwidth is small.
    pub fn sparse(a: &CsrMatrix, shift: f64) -> Result<Self> {
        let n = a.nrows();
        if a.bandwidth() * 4 <= n.max(8) {
            BandLu::factor(a, shift).map(Factored::Band)
        } else {
            let mut d = a.to_dense();
            for i in 0..n {
                d[(i, i)] += shift;
            }
            Self::dense(d)
        }
    }

    pub fn dense(a: DMatrix<f64>) -> Result<Self> {
        let scale = a.amax().max(f64::MIN_POSITIVE);
        let lu = a.lu();
        let u = lu.u();
        let tiny = f64::EPSILON * 1e-3 * scale;
        if (0..u.nrows()).any(|i| u[(i, i)].abs() <= tiny || !u[(i, i)].is_finite()) {
            return Err(Error::Singular("zero pivot in dense LU".into()));
        }
        Ok(Factored::Dense(lu))
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Factored::Dense(lu) => lu.solve(rhs).expect("checked nonsingular"),
            Factored::Band(b) => b.solve(rhs),
        }
    }
}
