//! Smallest-modulus eigenpairs, spectra and the rank-one shifted solve.
//!
//! Dense-stored matrices (up to [`DENSE_LIMIT`]) use the dense symmetric
//! eigensolver; sparse operators above [`SPARSE_DENSE_CUTOFF`] go through
//! shift-invert Lanczos.

pub mod banded;
pub mod lanczos;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
pub use lanczos::{eigs_near, minres, EigenPairs};

pub const DENSE_LIMIT: usize = 512;

/// Sparse operators at most this large are still solved densely.
pub const SPARSE_DENSE_CUTOFF: usize = 160;

/// Smallest-modulus eigenpair of a symmetric Jacobian.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenProbe {
    pub lambda_s: f64,
    pub phi_s: DVector<f64>,
    /// Distance to the eigenvalue of next-smallest modulus.
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumSlice {
    pub eigenvalues: Vec<f64>,
    pub morse_index: usize,
}

/// Flips `phi` so its largest-magnitude entry is positive (first such
/// entry on ties).
pub fn stabilize_sign(phi: &mut DVector<f64>) {
    let m = phi.amax();
    if m == 0.0 {
        return;
    }
    let lead = phi.iter().position(|v| v.abs() >= m * (1.0 - 1e-9)).unwrap_or(0);
    if phi[lead] < 0.0 {
        phi.neg_mut();
    }
}

/// Flips `phi` to agree with the previous eigenvector along a path.
pub fn align_with(phi: &mut DVector<f64>, prev: &DVector<f64>) {
    if phi.dot(prev) < 0.0 {
        phi.neg_mut();
    }
}

fn dense_eigen(j: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if !j.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("Jacobian"));
    }
    let n = j.nrows();
    let sym = (j + j.transpose()) * 0.5;
    let e = sym
        .try_symmetric_eigen(f64::EPSILON, 1000 * n.max(10))
        .ok_or_else(|| Error::EigenNonConvergence("dense symmetric QR".into()))?;
    Ok((e.eigenvalues.as_slice().to_vec(), e.eigenvectors))
}

fn probe_from(values: &[f64], vectors: &[DVector<f64>]) -> EigenProbe {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()));
    let s = order[0];
    let gap = order.get(1).map(|&t| (values[t] - values[s]).abs()).unwrap_or(f64::INFINITY);
    let mut phi = vectors[s].clone();
    let nphi = phi.norm();
    phi /= nphi;
    stabilize_sign(&mut phi);
    EigenProbe { lambda_s: values[s], phi_s: phi, gap }
}

/// Smallest-modulus eigenpair of a dense symmetric matrix.
pub fn smallest_modulus_eigenpair(j: &DMatrix<f64>) -> Result<EigenProbe> {
    if j.nrows() != j.ncols() || j.nrows() == 0 {
        return Err(Error::InvalidInput("Jacobian must be square and nonempty".into()));
    }
    let (vals, vecs) = dense_eigen(j)?;
    let cols: Vec<DVector<f64>> = (0..vals.len()).map(|i| vecs.column(i).into_owned()).collect();
    Ok(probe_from(&vals, &cols))
}

/// All eigenvalues, ascending, with the Morse index.
pub fn full_spectrum(j: &DMatrix<f64>) -> Result<SpectrumSlice> {
    let (mut vals, _) = dense_eigen(j)?;
    vals.sort_by(f64::total_cmp);
    let morse_index = vals.iter().filter(|&&v| v < 0.0).count();
    Ok(SpectrumSlice { eigenvalues: vals, morse_index })
}

/// A symmetric linearization in either storage.
#[derive(Clone, Debug)]
pub enum SymOperator {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

/// Smallest-modulus probe plus the Morse index.
#[derive(Clone, Debug)]
pub struct ProbeWithIndex {
    pub probe: EigenProbe,
    pub morse_index: usize,
}

impl SymOperator {
    pub fn dim(&self) -> usize {
        match self {
            SymOperator::Dense(m) => m.nrows(),
            SymOperator::Sparse(m) => m.nrows(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SymOperator::Dense(m) => m * x,
            SymOperator::Sparse(m) => m.mul_vec(x),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SymOperator::Dense(m) => m.clone(),
            SymOperator::Sparse(m) => m.to_dense(),
        }
    }

    fn uses_dense(&self) -> bool {
        matches!(self, SymOperator::Dense(_)) || self.dim() <= SPARSE_DENSE_CUTOFF
    }

    /// Lowest `m` eigenpairs, ascending.
    pub fn lowest(&self, m: usize) -> Result<EigenPairs> {
        if self.uses_dense() {
            let (vals, vecs) = dense_eigen(&self.to_dense())?;
            let mut order: Vec<usize> = (0..vals.len()).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            let take = m.min(vals.len());
            Ok(EigenPairs {
                values: order[..take].iter().map(|&i| vals[i]).collect(),
                vectors: order[..take].iter().map(|&i| vecs.column(i).into_owned()).collect(),
            })
        } else {
            let SymOperator::Sparse(a) = self else { unreachable!() };
            eigs_near(a, a.gershgorin_lower() - 1.0, m)
        }
    }

    /// Smallest-modulus eigenpair and Morse index. `hint` is a guess of the
    /// Morse index used to size the sparse eigensolve.
    pub fn probe(&self, hint: usize) -> Result<ProbeWithIndex> {
        let n = self.dim();
        if self.uses_dense() {
            let (vals, vecs) = dense_eigen(&self.to_dense())?;
            let cols: Vec<DVector<f64>> = (0..vals.len()).map(|i| vecs.column(i).into_owned()).collect();
            let morse_index = vals.iter().filter(|&&v| v < 0.0).count();
            return Ok(ProbeWithIndex { probe: probe_from(&vals, &cols), morse_index });
        }
        let mut m = (hint + 3).min(n);
        loop {
            let pairs = self.lowest(m)?;
            let positives = pairs.values.iter().filter(|&&v| v >= 0.0).count();
            if positives >= 2 || m == n {
                let morse_index = pairs.values.iter().filter(|&&v| v < 0.0).count();
                return Ok(ProbeWithIndex { probe: probe_from(&pairs.values, &pairs.vectors), morse_index });
            }
            m = (m * 2).min(n);
        }
    }
}

fn check_shift_inputs(n: usize, phi: &DVector<f64>, alpha: f64, rhs: &DVector<f64>) -> Result<()> {
    if phi.len() != n || rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: phi.len().min(rhs.len()) });
    }
    if (phi.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput("phi must have unit norm".into()));
    }
    if alpha < 1.0 || !alpha.is_finite() {
        return Err(Error::InvalidInput("alpha must be >= 1".into()));
    }
    Ok(())
}

/// Solves (J + alpha phi phi^T) x = rhs with a direct factorization.
pub fn rank_one_shifted_solve(
    j: &DMatrix<f64>,
    phi: &DVector<f64>,
    alpha: f64,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_shift_inputs(j.nrows(), phi, alpha, rhs)?;
    let s = j + phi * phi.transpose() * alpha;
    let lu = banded::Factored::dense(s.clone()).map_err(|_| Error::SingularShiftedOperator)?;
    let x = lu.solve(rhs);
    let r = (&s * &x - rhs).norm();
    if !x.iter().all(|v| v.is_finite()) || r > 1e-8 * (1.0 + s.amax() * x.norm()) {
        return Err(Error::SingularShiftedOperator);
    }
    Ok(x)
}

/// Sparse variant through the bordered system [[J, phi], [phi^T, -1/alpha]].
pub fn rank_one_shifted_solve_sparse(
    j: &CsrMatrix,
    phi: &DVector<f64>,
    alpha: f64,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = j.nrows();
    check_shift_inputs(n, phi, alpha, rhs)?;
    if n <= SPARSE_DENSE_CUTOFF {
        return rank_one_shifted_solve(&j.to_dense(), phi, alpha, rhs);
    }
    let apply = |v: &DVector<f64>| {
        let x = v.rows(0, n).into_owned();
        let y = v[n];
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(&(j.mul_vec(&x) + phi * y));
        out[n] = phi.dot(&x) - y / alpha;
        out
    };
    let mut b = DVector::zeros(n + 1);
    b.rows_mut(0, n).copy_from(rhs);
    let (sol, rel) = minres(apply, &b, 1e-13, 20 * (n + 1));
    if !sol.iter().all(|v| v.is_finite()) || rel > 1e-9 {
        return Err(Error::SingularShiftedOperator);
    }
    Ok(sol.rows(0, n).into_owned())
}

/// Rank-one shifted solve dispatching on storage.
pub fn shifted_solve(op: &SymOperator, phi: &DVector<f64>, alpha: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    match op {
        SymOperator::Dense(m) => rank_one_shifted_solve(m, phi, alpha, rhs),
        SymOperator::Sparse(m) => rank_one_shifted_solve_sparse(m, phi, alpha, rhs),
    }
}
