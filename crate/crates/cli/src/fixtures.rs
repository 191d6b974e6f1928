//! Generated inputs for bundled configs.

use foldtrace::elliptic::{build_fd_laplacian, GridDomain};
use foldtrace::sparse::CsrMatrix;
use foldtrace::{Error, Result};

/// Stiffness matrix on the fd annulus grid whose lowest eigenvalues are
/// exactly `targets` and whose next one is `ceiling`.
///
/// The fd operator is scaled so that its (m+1)-th eigenvalue equals
/// `ceiling`, then its first m eigenpairs are moved onto the targets by
/// rank-one updates. Eigenvectors are those of the fd annulus, so the
/// ground state keeps its sign. The result is dense.
pub fn matched_annulus_operator(n: usize, targets: &[f64], ceiling: f64) -> Result<CsrMatrix> {
    let m = targets.len();
    if m == 0 || targets.windows(2).any(|w| !(w[0] < w[1])) || !(targets[0] > 0.0) || !(targets[m - 1] < ceiling) {
        return Err(Error::InvalidInput("targets must be positive, increasing and below the ceiling".into()));
    }
    let op = build_fd_laplacian(&GridDomain::annulus(n)?)?;
    if op.dim() <= m {
        return Err(Error::InvalidInput(format!("grid has {} unknowns, need more than {m}", op.dim())));
    }
    let k = op.stiffness.to_dense();
    let eig = k.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let c = ceiling / eig.eigenvalues[order[m]];
    let mut out = &k * c;
    for (t, &i) in targets.iter().zip(&order) {
        let v = eig.eigenvectors.column(i);
        out += v * v.transpose() * (t - c * eig.eigenvalues[i]);
    }
    let sym = (&out + out.transpose()) * 0.5;
    Ok(CsrMatrix::from_dense(&sym))
}
