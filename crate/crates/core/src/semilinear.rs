//! Semilinear maps F(u) = L u - f(u) with f acting componentwise.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{NonlinearMap, PiecewiseLinear, State};
use crate::sparse::CsrMatrix;
use crate::spectral::{self, SymOperator};

/// f(x) = l_- x for x < 0 and l_+ x for x >= 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PLNonlinearity {
    pub ell_minus: f64,
    pub ell_plus: f64,
}

impl PLNonlinearity {
    pub fn new(ell_minus: f64, ell_plus: f64) -> Result<Self> {
        if !(ell_minus.is_finite() && ell_plus.is_finite()) {
            return Err(Error::NonFinite("slopes"));
        }
        Ok(Self { ell_minus, ell_plus })
    }

    pub fn slope(&self, positive: bool) -> f64 {
        if positive {
            self.ell_plus
        } else {
            self.ell_minus
        }
    }
}

/// f'(x) = alpha atan(x) + beta, with f(0) = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ALNonlinearity {
    pub alpha: f64,
    pub beta: f64,
}

impl ALNonlinearity {
    /// Limits of f' at -inf and +inf.
    pub fn limits(&self) -> (f64, f64) {
        let half = self.alpha * std::f64::consts::FRAC_PI_2;
        (self.beta - half, self.beta + half)
    }
}

/// The arctan nonlinearity whose slopes tend to (ell_minus, ell_plus).
pub fn calibrate_arctan(ell_minus: f64, ell_plus: f64) -> Result<ALNonlinearity> {
    if !(ell_minus < ell_plus) {
        return Err(Error::InvalidInput(format!("need ell_minus < ell_plus, got {ell_minus} >= {ell_plus}")));
    }
    Ok(ALNonlinearity { alpha: (ell_plus - ell_minus) / std::f64::consts::PI, beta: 0.5 * (ell_plus + ell_minus) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Nonlinearity {
    PiecewiseLinear(PLNonlinearity),
    Arctan(ALNonlinearity),
    Linear { slope: f64 },
}

impl Nonlinearity {
    pub fn f(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::PiecewiseLinear(p) => p.slope(x >= 0.0) * x,
            Nonlinearity::Arctan(a) => a.alpha * (x * x.atan() - 0.5 * x.mul_add(x, 1.0).ln()) + a.beta * x,
            Nonlinearity::Linear { slope } => slope * x,
        }
    }

    pub fn df(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::PiecewiseLinear(p) => p.slope(x >= 0.0),
            Nonlinearity::Arctan(a) => a.alpha * x.atan() + a.beta,
            Nonlinearity::Linear { slope } => slope,
        }
    }

    pub fn d2f(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Arctan(a) => a.alpha / (1.0 + x * x),
            _ => 0.0,
        }
    }

    /// Limits of f' at -inf and +inf.
    pub fn limits(&self) -> (f64, f64) {
        match *self {
            Nonlinearity::PiecewiseLinear(p) => (p.ell_minus, p.ell_plus),
            Nonlinearity::Arctan(a) => a.limits(),
            Nonlinearity::Linear { slope } => (slope, slope),
        }
    }
}

/// (1/h^2) tridiag(-1, 2, -1) on n interior nodes of (0, pi).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalOperator {
    pub n: usize,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub n: usize,
    pub h: f64,
}

impl MeshSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("mesh needs at least one interior node".into()));
        }
        Ok(Self { n, h: std::f64::consts::PI / (n as f64 + 1.0) })
    }

    /// Interior nodes x_i = i h, i = 1..n.
    pub fn nodes(&self) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| (i + 1) as f64 * self.h)
    }
}

impl TridiagonalOperator {
    /// Builds the operator and checks every closed-form eigenpair against
    /// the stencil.
    pub fn new(mesh: MeshSpec) -> Result<Self> {
        let op = Self { n: mesh.n, h: mesh.h };
        let scale = 4.0 / (op.h * op.h);
        for k in 1..=op.n {
            let v = op.mode(k);
            let r = (op.apply(&v) - &v * op.eigenvalue(k)).amax();
            if r > 1e-9 * scale {
                return Err(Error::InvalidInput(format!("closed-form eigenpair {k} fails (residual {r:.3e})")));
            }
        }
        Ok(op)
    }

    pub fn with_nodes(n: usize) -> Result<Self> {
        Self::new(MeshSpec::new(n)?)
    }

    pub fn mesh(&self) -> MeshSpec {
        MeshSpec { n: self.n, h: self.h }
    }

    /// lambda_k = (2/h^2)(1 - cos k h), k = 1..n.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        2.0 / (self.h * self.h) * (1.0 - (k as f64 * self.h).cos())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.n).map(|k| self.eigenvalue(k)).collect()
    }

    /// Unnormalized mode sin(k x_i).
    pub fn mode(&self, k: usize) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| ((k * (i + 1)) as f64 * self.h).sin())
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let c = 1.0 / (self.h * self.h);
        DVector::from_fn(self.n, |i, _| {
            let left = if i > 0 { u[i - 1] } else { 0.0 };
            let right = if i + 1 < self.n { u[i + 1] } else { 0.0 };
            c * (2.0 * u[i] - left - right)
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let c = 1.0 / (self.h * self.h);
        DMatrix::from_fn(self.n, self.n, |i, j| match i.abs_diff(j) {
            0 => 2.0 * c,
            1 => -c,
            _ => 0.0,
        })
    }

    pub fn to_sparse(&self) -> CsrMatrix {
        CsrMatrix::from_dense(&self.to_dense())
    }
}

/// The linear part L of a semilinear map.
#[derive(Clone, Debug)]
pub enum LinearPart {
    Tridiagonal(TridiagonalOperator),
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl LinearPart {
    pub fn dim(&self) -> usize {
        match self {
            LinearPart::Tridiagonal(t) => t.n,
            LinearPart::Dense(m) => m.nrows(),
            LinearPart::Sparse(m) => m.nrows(),
        }
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            LinearPart::Tridiagonal(t) => t.apply(u),
            LinearPart::Dense(m) => m * u,
            LinearPart::Sparse(m) => m.mul_vec(u),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            LinearPart::Tridiagonal(t) => t.to_dense(),
            LinearPart::Dense(m) => m.clone(),
            LinearPart::Sparse(m) => m.to_dense(),
        }
    }

    pub fn to_sparse(&self) -> CsrMatrix {
        match self {
            LinearPart::Tridiagonal(t) => t.to_sparse(),
            LinearPart::Dense(m) => CsrMatrix::from_dense(m),
            LinearPart::Sparse(m) => m.clone(),
        }
    }

    fn sym_operator(&self) -> SymOperator {
        match self {
            LinearPart::Sparse(m) => SymOperator::Sparse(m.clone()),
            other => SymOperator::Dense(other.to_dense()),
        }
    }

    /// Lowest `m` eigenpairs of L, eigenvectors unit l2 with the ground
    /// state made positive.
    pub fn lowest_modes(&self, m: usize) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
        if let LinearPart::Tridiagonal(t) = self {
            let vals = (1..=m.min(t.n)).map(|k| t.eigenvalue(k)).collect();
            let vecs = (1..=m.min(t.n)).map(|k| t.mode(k).normalize()).collect();
            return Ok((vals, vecs));
        }
        let pairs = self.sym_operator().lowest(m)?;
        let mut vecs = pairs.vectors;
        for v in vecs.iter_mut() {
            spectral::stabilize_sign(v);
        }
        if let Some(v0) = vecs.first_mut() {
            if v0.sum() < 0.0 {
                v0.neg_mut();
            }
        }
        Ok((pairs.values, vecs))
    }
}

/// F(u) = L u - f(u).
#[derive(Clone, Debug)]
pub struct SemilinearMap {
    pub op: LinearPart,
    pub nl: Nonlinearity,
}

impl SemilinearMap {
    pub fn new(op: LinearPart, nl: Nonlinearity) -> Self {
        Self { op, nl }
    }

    fn df_vec(&self, u: &State) -> DVector<f64> {
        u.map(|x| self.nl.df(x))
    }

    /// Jacobian on an orthant when f is piecewise linear.
    pub fn orthant_matrix(&self, positive: &[bool]) -> DMatrix<f64> {
        let mut m = self.op.to_dense();
        for (i, &p) in positive.iter().enumerate() {
            let x = if p { 1.0 } else { -1.0 };
            m[(i, i)] -= self.nl.df(x);
        }
        m
    }
}

impl NonlinearMap for SemilinearMap {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn eval(&self, u: &State) -> State {
        self.op.apply(u) - u.map(|x| self.nl.f(x))
    }

    fn jacobian(&self, u: &State) -> Option<DMatrix<f64>> {
        if matches!(self.op, LinearPart::Sparse(_)) {
            return None;
        }
        let mut m = self.op.to_dense();
        let d = self.df_vec(u);
        for i in 0..d.len() {
            m[(i, i)] -= d[i];
        }
        Some(m)
    }

    fn sparse_jacobian(&self, u: &State) -> Option<CsrMatrix> {
        match &self.op {
            LinearPart::Sparse(m) => Some(m.add_diagonal(&-self.df_vec(u))),
            _ => None,
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn piecewise_linear(&self) -> Option<&dyn PiecewiseLinear> {
        match self.nl {
            Nonlinearity::PiecewiseLinear(_) | Nonlinearity::Linear { .. } => Some(self),
            _ => None,
        }
    }

    fn name(&self) -> String {
        match self.nl {
            Nonlinearity::PiecewiseLinear(_) => "semilinear-pl".into(),
            Nonlinearity::Arctan(_) => "semilinear-arctan".into(),
            Nonlinearity::Linear { .. } => "semilinear-linear".into(),
        }
    }
}

impl PiecewiseLinear for SemilinearMap {
    fn piece_matrix(&self, positive: &[bool]) -> DMatrix<f64> {
        self.orthant_matrix(positive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arctan_calibration_and_limits() {
        let a = calibrate_arctan(-1.0, 26.0).unwrap();
        let (lo, hi) = a.limits();
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 26.0).abs() < 1e-12);
        assert!(calibrate_arctan(2.0, 1.0).is_err());
        let nl = Nonlinearity::Arctan(a);
        // f is the antiderivative of f'.
        for &x in &[-3.0, -0.2, 0.0, 0.7, 5.0] {
            let h = 1e-5;
            let fd = (nl.f(x + h) - nl.f(x - h)) / (2.0 * h);
            assert!((fd - nl.df(x)).abs() < 1e-6);
        }
        assert_eq!(nl.f(0.0), 0.0);
    }

    #[test]
    fn tridiagonal_closed_form() {
        let t = TridiagonalOperator::with_nodes(2).unwrap();
        let e = t.eigenvalues();
        assert!((e[0] - 0.9119).abs() < 1e-4 && (e[1] - 2.7357).abs() < 1e-4);
    }

    #[test]
    fn pl_zero_counts_as_positive() {
        let nl = Nonlinearity::PiecewiseLinear(PLNonlinearity::new(-1.0, 3.0).unwrap());
        assert_eq!(nl.df(0.0), 3.0);
        assert_eq!(nl.df(-1e-300), -1.0);
    }
}
