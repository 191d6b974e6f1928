//! Codomain paths gamma(t) and lines in the domain.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{check_state, MapHandle, State};

/// The line c(s) = base + s direction, s in s_range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub base: State,
    pub direction: State,
    pub s_range: (f64, f64),
    #[serde(default)]
    pub description: String,
}

impl LineSpec {
    pub fn new(base: State, direction: State, s_range: (f64, f64)) -> Result<Self> {
        check_state(&base, base.len())?;
        check_state(&direction, base.len())?;
        if direction.norm() == 0.0 {
            return Err(Error::InvalidInput("line direction is zero".into()));
        }
        if !(s_range.0 < s_range.1) || !(s_range.0 <= 0.0 && 0.0 <= s_range.1) {
            return Err(Error::InvalidInput("s_range must be increasing and contain 0".into()));
        }
        Ok(Self { base, direction, s_range, description: String::new() })
    }

    pub fn with_description(mut self, text: impl Into<String>) -> Self {
        self.description = text.into();
        self
    }

    pub fn point(&self, s: f64) -> State {
        &self.base + &self.direction * s
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }
}

type Curve = Arc<dyn Fn(f64) -> State + Send + Sync>;

/// How gamma was built; the piecewise-linear tracer needs to know.
#[derive(Clone, Debug)]
pub enum PathKind {
    /// gamma(t) = a + t b.
    Segment { a: State, b: State },
    /// gamma(s) = F(line(s)).
    LineImage(LineSpec),
    Custom,
}

#[derive(Clone)]
pub struct CodomainPath {
    gamma: Curve,
    gamma_prime: Curve,
    pub t_range: (f64, f64),
    pub kind: PathKind,
}

impl fmt::Debug for CodomainPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CodomainPath").field("t_range", &self.t_range).field("kind", &self.kind).finish()
    }
}

impl CodomainPath {
    pub fn from_fns<G, D>(gamma: G, gamma_prime: D, t_range: (f64, f64)) -> Self
    where
        G: Fn(f64) -> State + Send + Sync + 'static,
        D: Fn(f64) -> State + Send + Sync + 'static,
    {
        Self { gamma: Arc::new(gamma), gamma_prime: Arc::new(gamma_prime), t_range, kind: PathKind::Custom }
    }

    pub fn segment(a: State, b: State, t_range: (f64, f64)) -> Self {
        let (a1, b1, b2) = (a.clone(), b.clone(), b.clone());
        Self {
            gamma: Arc::new(move |t| &a1 + &b1 * t),
            gamma_prime: Arc::new(move |_| b2.clone()),
            t_range,
            kind: PathKind::Segment { a, b },
        }
    }

    /// gamma(s) = F(c(s)) with gamma'(s) = DF(c(s)) c'.
    pub fn line_image(map: &MapHandle, line: &LineSpec) -> Self {
        let (m1, m2) = (map.clone(), map.clone());
        let (l1, l2) = (line.clone(), line.clone());
        let n = line.dim();
        Self {
            gamma: Arc::new(move |s| m1.eval(&l1.point(s)).unwrap_or_else(|_| State::from_element(n, f64::NAN))),
            gamma_prime: Arc::new(move |s| {
                m2.jac_vec(&l2.point(s), &l2.direction).unwrap_or_else(|_| State::from_element(n, f64::NAN))
            }),
            t_range: line.s_range,
            kind: PathKind::LineImage(line.clone()),
        }
    }

    pub fn gamma(&self, t: f64) -> State {
        (self.gamma)(t)
    }

    pub fn gamma_prime(&self, t: f64) -> State {
        (self.gamma_prime)(t)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.t_range.0 <= t && t <= self.t_range.1
    }

    /// Largest relative mismatch between gamma' and a central difference of
    /// gamma over `samples` interior points.
    pub fn derivative_mismatch(&self, samples: usize) -> f64 {
        let (a, b) = self.t_range;
        let h = 1e-6 * (1.0 + a.abs().max(b.abs()));
        (1..=samples)
            .map(|k| {
                let t = a + (b - a) * k as f64 / (samples + 1) as f64;
                let fd = (self.gamma(t + h) - self.gamma(t - h)) / (2.0 * h);
                let an = self.gamma_prime(t);
                (fd - &an).norm() / (1.0 + an.norm())
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_derivative_is_consistent() {
        let p = CodomainPath::segment(State::from_vec(vec![1.0, 0.0]), State::from_vec(vec![0.5, -1.0]), (-1.0, 2.0));
        assert!(p.derivative_mismatch(7) < 1e-8);
        assert!(p.contains(0.0) && !p.contains(3.0));
    }

    #[test]
    fn line_must_contain_origin() {
        let b = State::from_vec(vec![0.0]);
        assert!(LineSpec::new(b.clone(), State::from_vec(vec![1.0]), (0.5, 1.0)).is_err());
        assert!(LineSpec::new(b.clone(), State::from_vec(vec![0.0]), (-1.0, 1.0)).is_err());
        assert!(LineSpec::new(b, State::from_vec(vec![1.0]), (-1.0, 1.0)).is_ok());
    }
}
