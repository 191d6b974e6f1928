//! Shift-invert Lanczos with full reorthogonalization, and MINRES.

use nalgebra::{DMatrix, DVector};

use super::banded::Factored;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Eigenpairs sorted by ascending eigenvalue.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
}

fn start_vector(n: usize, salt: usize) -> DVector<f64> {
    // Deterministic, not aligned with any grid mode.
    let v = DVector::from_fn(n, |i, _| {
        let x = (i + 1) as f64 * 0.618_033_988_749_895 + salt as f64 * 0.414_213_562;
        1.0 + 0.5 * (x * 12.9898).sin()
    });
    let nv = v.norm();
    v / nv
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
}

/// The `want` eigenpairs of symmetric `a` nearest to `sigma`.
pub fn eigs_near(a: &CsrMatrix, sigma: f64, want: usize) -> Result<EigenPairs> {
    let n = a.nrows();
    if n == 0 || want == 0 {
        return Ok(EigenPairs { values: vec![], vectors: vec![] });
    }
    let want = want.min(n);
    let scale = a.norm_inf().max(1.0);
    let mut shift = sigma;
    let mut fact = None;
    for attempt in 0..6 {
        match Factored::sparse(a, -shift) {
            Ok(f) => {
                fact = Some(f);
                break;
            }
            Err(_) => shift = sigma + scale * 1e-10 * (attempt as f64 + 1.0) * 7.3,
        }
    }
    let fact = fact.ok_or_else(|| Error::EigenNonConvergence("shift-invert factorization failed".into()))?;

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut q = start_vector(n, 0);
    let mut restarts = 0;
    let mut target = (2 * want + 20).max(30).min(n);
    loop {
        while basis.len() < target {
            basis.push(q.clone());
            let mut w = fact.solve(&q);
            let a_k = q.dot(&w);
            alpha.push(a_k);
            orthogonalize(&mut w, &basis);
            let b_k = w.norm();
            if basis.len() == n {
                break;
            }
            if b_k <= 1e-12 * a_k.abs().max(1e-300) || b_k == 0.0 {
                // Invariant subspace found; restart with a fresh direction.
                restarts += 1;
                let mut r = start_vector(n, restarts);
                orthogonalize(&mut r, &basis);
                let nr = r.norm();
                if nr < 1e-10 {
                    break;
                }
                beta.push(0.0);
                q = r / nr;
            } else {
                beta.push(b_k);
                q = w / b_k;
            }
        }
        let k = basis.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = t.symmetric_eigen();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].abs().total_cmp(&eig.eigenvalues[x].abs()));
        let resid_beta = if beta.len() >= k { beta[k - 1] } else { 0.0 };
        let converged = order.iter().take(want).all(|&i| {
            let theta = eig.eigenvalues[i];
            (resid_beta * eig.eigenvectors[(k - 1, i)]).abs() <= 1e-11 * theta.abs()
        });
        if converged || k >= n {
            let mut pairs: Vec<(f64, DVector<f64>)> = order
                .iter()
                .take(want)
                .map(|&i| {
                    let s = eig.eigenvectors.column(i);
                    let mut x = DVector::zeros(n);
                    for (j, qj) in basis.iter().enumerate() {
                        x.axpy(s[j], qj, 1.0);
                    }
                    let nx = x.norm();
                    x /= nx;
                    let lam = x.dot(&a.mul_vec(&x));
                    (lam, x)
                })
                .collect();
            for (lam, x) in &pairs {
                let r = (a.mul_vec(x) - x * *lam).norm();
                if r > 1e-7 * scale {
                    return Err(Error::EigenNonConvergence(format!("Ritz residual {r:.3e}")));
                }
            }
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            return Ok(EigenPairs {
                values: pairs.iter().map(|p| p.0).collect(),
                vectors: pairs.into_iter().map(|p| p.1).collect(),
            });
        }
        target = (target * 2).min(n);
    }
}

/// MINRES for a symmetric, possibly indefinite operator given by `apply`.
/// Returns the solution and the final relative residual.
pub fn minres<F>(apply: F, b: &DVector<f64>, rtol: f64, max_iter: usize) -> (DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = b.len();
    let mut x = DVector::zeros(n);
    let beta1 = b.norm();
    if beta1 == 0.0 {
        return (x, 0.0);
    }
    let mut r1 = b.clone();
    let mut r2 = b.clone();
    let mut y = b.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = DVector::zeros(n);
    let mut w2 = DVector::zeros(n);
    for itn in 1..=max_iter {
        let v = &y / beta;
        y = apply(&v);
        if itn >= 2 {
            y.axpy(-beta / oldb, &r1, 1.0);
        }
        let alfa = v.dot(&y);
        y.axpy(-alfa / beta, &r2, 1.0);
        r1 = std::mem::replace(&mut r2, y.clone());
        oldb = beta;
        beta = y.norm();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, w.clone());
        w = (&v - &w1 * oldeps - &w2 * delta) / gamma;
        x.axpy(phi, &w, 1.0);
        if phibar <= rtol * beta1 || beta == 0.0 {
            break;
        }
    }
    let r = (b - apply(&x)).norm() / beta1;
    (x, r)
}
