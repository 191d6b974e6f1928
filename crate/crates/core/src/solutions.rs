//! Deduplicated, canonically ordered solution sets.

use serde::{Deserialize, Serialize};

use crate::problem::State;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub u: State,
    /// Number of negative Jacobian eigenvalues; `None` for non-symmetric maps.
    pub morse_index: Option<usize>,
    pub residue: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolutionSet {
    pub items: Vec<Solution>,
    /// Two solutions closer than dedupe_rel (1 + ||u||) are the same.
    pub dedupe_rel: f64,
}

fn lex(a: &State, b: &State) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

impl SolutionSet {
    pub fn new(dedupe_rel: f64) -> Self {
        Self { items: Vec::new(), dedupe_rel }
    }

    /// Dedupes `candidates` and sorts the survivors canonically (Morse
    /// index, then lexicographic), so the result does not depend on the
    /// order candidates arrived in.
    pub fn from_candidates(mut candidates: Vec<Solution>, dedupe_rel: f64) -> Self {
        // Among near-duplicates keep the smallest residue.
        candidates.sort_by(|a, b| a.u[0].total_cmp(&b.u[0]).then(a.residue.total_cmp(&b.residue)).then(lex(&a.u, &b.u)));
        let mut kept: Vec<Solution> = Vec::new();
        let max_norm = candidates.iter().map(|c| c.u.norm()).fold(0.0, f64::max);
        let window = dedupe_rel * (1.0 + max_norm);
        for c in candidates {
            let tol = dedupe_rel * (1.0 + c.u.norm());
            let lo = c.u[0] - window;
            let mut dup = None;
            for (k, s) in kept.iter().enumerate().rev() {
                if s.u[0] < lo {
                    break;
                }
                if (&s.u - &c.u).norm() <= tol.max(dedupe_rel * (1.0 + s.u.norm())) {
                    dup = Some(k);
                    break;
                }
            }
            match dup {
                Some(k) if c.residue < kept[k].residue => kept[k] = c,
                Some(_) => {}
                None => {
                    // Keep `kept` sorted by first coordinate.
                    let pos = kept.partition_point(|s| s.u[0] <= c.u[0]);
                    kept.insert(pos, c);
                }
            }
        }
        kept.sort_by(|a, b| a.morse_index.cmp(&b.morse_index).then(lex(&a.u, &b.u)));
        Self { items: kept, dedupe_rel }
    }

    pub fn merge(&self, other: &SolutionSet) -> SolutionSet {
        let mut all = self.items.clone();
        all.extend(other.items.iter().cloned());
        Self::from_candidates(all, self.dedupe_rel.max(other.dedupe_rel))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Index of a stored solution within `tol (1 + ||u||)` of `u`.
    pub fn find(&self, u: &State, tol: f64) -> Option<usize> {
        self.items.iter().position(|s| (&s.u - u).norm() <= tol * (1.0 + u.norm()))
    }

    pub fn contains(&self, u: &State, tol: f64) -> bool {
        self.find(u, tol).is_some()
    }

    /// Counts of solutions per Morse index, indexed by Morse index.
    pub fn morse_histogram(&self) -> Vec<usize> {
        let top = self.items.iter().filter_map(|s| s.morse_index).max();
        let mut h = vec![0; top.map_or(0, |t| t + 1)];
        for s in &self.items {
            if let Some(m) = s.morse_index {
                h[m] += 1;
            }
        }
        h
    }

    pub fn max_residue(&self) -> f64 {
        self.items.iter().map(|s| s.residue).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sol(v: &[f64], m: usize, r: f64) -> Solution {
        Solution { u: State::from_row_slice(v), morse_index: Some(m), residue: r }
    }

    #[test]
    fn dedupe_is_order_independent() {
        let a = vec![sol(&[1.0, 2.0], 1, 1e-14), sol(&[1.0 + 1e-9, 2.0], 1, 1e-15), sol(&[-3.0, 0.5], 0, 0.0)];
        let mut b = a.clone();
        b.reverse();
        let sa = SolutionSet::from_candidates(a, 1e-6);
        let sb = SolutionSet::from_candidates(b, 1e-6);
        assert_eq!(sa.len(), 2);
        assert_eq!(sa.items[0].u, sb.items[0].u);
        assert_eq!(sa.items[1].u, sb.items[1].u);
        assert_eq!(sa.items[1].residue, 1e-15);
        assert_eq!(sa.morse_histogram(), vec![1, 1]);
    }
}
