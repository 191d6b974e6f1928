//! Maps F: R^n -> R^n, their Jacobians and the relative residue.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::spectral::banded::Factored;
use crate::spectral::SymOperator;

/// Points in the domain or codomain.
pub type State = DVector<f64>;

/// Rejects states with non-finite entries or the wrong length.
pub fn check_state(u: &State, dim: usize) -> Result<()> {
    if u.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: u.len() });
    }
    if !u.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("state"));
    }
    Ok(())
}

/// A map whose Jacobian is constant on each closed orthant. Zero
/// coordinates count as positive.
pub trait PiecewiseLinear: Send + Sync {
    /// Jacobian on the orthant with the given sign pattern (`true` = positive).
    fn piece_matrix(&self, positive: &[bool]) -> DMatrix<f64>;
}

pub trait NonlinearMap: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &State) -> State;

    /// Analytic Jacobian, if the map provides one.
    fn jacobian(&self, _u: &State) -> Option<DMatrix<f64>> {
        None
    }

    /// Sparse analytic Jacobian for large problems.
    fn sparse_jacobian(&self, _u: &State) -> Option<CsrMatrix> {
        None
    }

    /// True when every Jacobian is symmetric.
    fn is_symmetric(&self) -> bool {
        false
    }

    fn piecewise_linear(&self) -> Option<&dyn PiecewiseLinear> {
        None
    }

    fn name(&self) -> String {
        "map".into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JacMode {
    Analytic,
    Fd,
}

/// Cheap, clonable handle to a map plus the Jacobian mode in use.
#[derive(Clone)]
pub struct MapHandle {
    inner: Arc<dyn NonlinearMap>,
    mode: JacMode,
}

impl fmt::Debug for MapHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapHandle").field("name", &self.inner.name()).field("dim", &self.dim()).field("mode", &self.mode).finish()
    }
}

impl MapHandle {
    /// Uses the analytic Jacobian when the map has one.
    pub fn new<M: NonlinearMap + 'static>(map: M) -> Self {
        Self::from_arc(Arc::new(map))
    }

    pub fn from_arc(inner: Arc<dyn NonlinearMap>) -> Self {
        let probe = State::zeros(inner.dim());
        let mode = if inner.jacobian(&probe).is_some() || inner.sparse_jacobian(&probe).is_some() {
            JacMode::Analytic
        } else {
            JacMode::Fd
        };
        Self { inner, mode }
    }

    /// Forces finite-difference Jacobians.
    pub fn with_fd(mut self) -> Self {
        self.mode = JacMode::Fd;
        self
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn jac_mode(&self) -> JacMode {
        self.mode
    }

    pub fn name(&self) -> String {
        self.inner.name()
    }

    pub fn is_symmetric(&self) -> bool {
        self.inner.is_symmetric()
    }

    pub fn piecewise_linear(&self) -> Option<&dyn PiecewiseLinear> {
        self.inner.piecewise_linear()
    }

    pub fn eval(&self, u: &State) -> Result<State> {
        check_state(u, self.dim())?;
        let y = self.inner.eval(u);
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: y.len() });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("map value"));
        }
        Ok(y)
    }

    pub fn jac(&self, u: &State) -> Result<DMatrix<f64>> {
        check_state(u, self.dim())?;
        if self.mode == JacMode::Analytic {
            if let Some(j) = self.inner.jacobian(u) {
                return Ok(j);
            }
            if let Some(j) = self.inner.sparse_jacobian(u) {
                return Ok(j.to_dense());
            }
        }
        fd_jacobian(self, u, default_fd_step(u))
    }

    /// Jacobian in the storage the map prefers; sparse maps stay sparse.
    pub fn jac_operator(&self, u: &State) -> Result<SymOperator> {
        check_state(u, self.dim())?;
        if self.mode == JacMode::Analytic {
            if let Some(j) = self.inner.sparse_jacobian(u) {
                return Ok(SymOperator::Sparse(j));
            }
        }
        self.jac(u).map(SymOperator::Dense)
    }

    /// J v without forming a dense matrix when the map is sparse.
    pub fn jac_vec(&self, u: &State, v: &State) -> Result<State> {
        Ok(self.jac_operator(u)?.mul_vec(v))
    }
}

impl MapHandle {
    /// Solves DF(u) x = rhs.
    pub fn solve_jac(&self, u: &State, rhs: &State) -> Result<State> {
        let f = match self.jac_operator(u)? {
            SymOperator::Dense(m) => Factored::dense(m),
            SymOperator::Sparse(m) => Factored::sparse(&m, 0.0),
        }?;
        let x = f.solve(rhs);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("Jacobian solve"));
        }
        Ok(x)
    }

    /// Morse index of DF(u); `None` when the map is not symmetric.
    pub fn morse_index(&self, u: &State) -> Result<Option<usize>> {
        if !self.is_symmetric() {
            return Ok(None);
        }
        Ok(Some(self.jac_operator(u)?.probe(0)?.morse_index))
    }
}

/// Outcome of [`newton_solve`].
#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub u: State,
    /// Absolute residual ||F(u) - g||.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Newton's method on F(u) = g with backtracking on ||F(u) - g||. Stops
/// when the residual is at most `tol` or stops decreasing.
pub fn newton_solve(map: &MapHandle, u0: &State, g: &State, tol: f64, max_iter: usize) -> Result<NewtonOutcome> {
    check_state(g, map.dim())?;
    let mut u = u0.clone();
    let mut r = map.eval(&u)? - g;
    let mut res = r.norm();
    let mut it = 0;
    while it < max_iter && res > tol {
        let Ok(dx) = map.solve_jac(&u, &r) else { break };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1.0 / 1024.0 {
            let trial = &u - &dx * lambda;
            if let Ok(fr) = map.eval(&trial) {
                let rt = fr - g;
                let nt = rt.norm();
                if nt < res {
                    u = trial;
                    r = rt;
                    res = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        it += 1;
        if !accepted {
            break;
        }
    }
    Ok(NewtonOutcome { converged: res <= tol, u, residual: res, iterations: it })
}

/// Default central-difference step 1e-6 (1 + ||u||_inf).
pub fn default_fd_step(u: &State) -> f64 {
    1e-6 * (1.0 + u.amax())
}

/// Central-difference Jacobian with step `step`.
pub fn fd_jacobian(map: &MapHandle, u: &State, step: f64) -> Result<DMatrix<f64>> {
    let n = map.dim();
    check_state(u, n)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput("finite-difference step must be positive".into()));
    }
    let mut j = DMatrix::zeros(n, n);
    let mut w = u.clone();
    for k in 0..n {
        w[k] = u[k] + step;
        let fp = map.inner.eval(&w);
        w[k] = u[k] - step;
        let fm = map.inner.eval(&w);
        w[k] = u[k];
        let col = (fp - fm) / (2.0 * step);
        if !col.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("finite-difference Jacobian"));
        }
        j.set_column(k, &col);
    }
    Ok(j)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidueReport {
    pub epsilon: f64,
    pub accepted: bool,
}

/// Relative residue ||F(u) - g|| / ||g|| in the Euclidean norm.
pub fn relative_residue(map: &MapHandle, u: &State, g: &State, threshold: f64) -> Result<ResidueReport> {
    check_state(g, map.dim())?;
    let gn = g.norm();
    if gn == 0.0 {
        return Err(Error::ZeroRhs);
    }
    let epsilon = (map.eval(u)? - g).norm() / gn;
    Ok(ResidueReport { epsilon, accepted: epsilon <= threshold })
}

/// Relative residue, or the absolute one when g = 0.
pub fn residue(map: &MapHandle, u: &State, g: &State) -> Result<f64> {
    match relative_residue(map, u, g, f64::INFINITY) {
        Ok(r) => Ok(r.epsilon),
        Err(Error::ZeroRhs) => Ok(map.eval(u)?.norm()),
        Err(e) => Err(e),
    }
}

/// Sign pattern of `u`, zero counted as positive.
pub fn orthant_of(u: &State) -> Vec<bool> {
    u.iter().map(|&x| x >= 0.0).collect()
}

/// F(u) = A u.
#[derive(Clone, Debug)]
pub struct LinearMap {
    pub a: DMatrix<f64>,
}

impl NonlinearMap for LinearMap {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn eval(&self, u: &State) -> State {
        &self.a * u
    }

    fn jacobian(&self, _u: &State) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }

    fn is_symmetric(&self) -> bool {
        (&self.a - self.a.transpose()).amax() <= 1e-14 * self.a.amax().max(1.0)
    }

    fn name(&self) -> String {
        "linear".into()
    }
}

/// Scalar map F(u) = u^2, the model fold.
#[derive(Clone, Copy, Debug, Default)]
pub struct SquareFold;

impl NonlinearMap for SquareFold {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, u: &State) -> State {
        State::from_element(1, u[0] * u[0])
    }

    fn jacobian(&self, u: &State) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 2.0 * u[0]))
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        "square-fold".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NoJac;
    impl NonlinearMap for NoJac {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, u: &State) -> State {
            State::from_vec(vec![u[0].sin() * u[1], u[0] + u[1].powi(3)])
        }
    }

    #[test]
    fn falls_back_to_fd() {
        let m = MapHandle::new(NoJac);
        assert_eq!(m.jac_mode(), JacMode::Fd);
        let u = State::from_vec(vec![0.3, -1.2]);
        let j = m.jac(&u).unwrap();
        assert!((j[(0, 0)] - 0.3f64.cos() * -1.2).abs() < 1e-8);
        assert!((j[(1, 1)] - 3.0 * 1.44).abs() < 1e-8);
    }

    #[test]
    fn residue_requires_nonzero_rhs() {
        let m = MapHandle::new(SquareFold);
        let u = State::from_element(1, 2.0);
        assert!(matches!(relative_residue(&m, &u, &State::zeros(1), 1e-10), Err(Error::ZeroRhs)));
        let r = relative_residue(&m, &u, &State::from_element(1, 4.0), 1e-10).unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert!(r.accepted);
        assert_eq!(residue(&m, &State::zeros(1), &State::zeros(1)).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_states() {
        let m = MapHandle::new(SquareFold);
        assert!(matches!(m.eval(&State::zeros(2)), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.eval(&State::from_element(1, f64::NAN)), Err(Error::NonFinite(_))));
    }
}
