//! Semilinear Dirichlet problems on finite-difference grids and ingested
//! operators, vertical spectrum scans, and the six-solution experiment.
//!
//! With a lumped mass M the problem M^-1 K u - f(u) = g is solved in the
//! scaled unknown v = M^(1/2) u, where the Jacobian S - diag f'(u) with
//! S = M^(-1/2) K M^(-1/2) is symmetric. Without a mass, v = u.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bifurcation::{build_diagram, mode_direction, BifurcationDiagram, DiagramConfig};
use crate::continuation::LineSpec;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::problem::{newton_solve, MapHandle, NonlinearMap, State};
use crate::semilinear::{LinearPart, Nonlinearity, SemilinearMap};
use crate::solutions::{Solution, SolutionSet};
use crate::sparse::CsrMatrix;
use crate::spectral::{stabilize_sign, SymOperator};

mod export;
mod mm;

pub use export::{heatmap_svg, write_fields_csv, write_scan_csv};
pub use mm::{read_matrix_market, write_matrix_market};

/// Interior nodes of a rectangular lattice; nodes outside the mask and
/// outside the lattice carry the Dirichlet value 0. With `ny == 1` the
/// domain is one-dimensional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    /// Coordinates of lattice node (i, j) are origin + ((i+1) h, (j+1) h).
    pub origin: [f64; 2],
    /// Row-major, `true` for interior nodes.
    pub mask: Vec<bool>,
}

impl GridDomain {
    pub fn from_predicate(nx: usize, ny: usize, spacing: f64, origin: [f64; 2], inside: impl Fn(f64, f64) -> bool) -> Result<Self> {
        if nx == 0 || ny == 0 || !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidInput(format!("bad grid {nx}x{ny}, spacing {spacing}")));
        }
        let mut g = Self { nx, ny, spacing, origin, mask: vec![false; nx * ny] };
        for j in 0..ny {
            for i in 0..nx {
                let [x, y] = g.node_xy(i, j);
                g.mask[j * nx + i] = inside(x, y);
            }
        }
        g.validate()?;
        Ok(g)
    }

    pub fn rectangle(nx: usize, ny: usize, spacing: f64) -> Result<Self> {
        Self::from_predicate(nx, ny, spacing, [0.0, 0.0], |_, _| true)
    }

    /// (0,1)^2 with n interior nodes per side.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::rectangle(n, n, 1.0 / (n as f64 + 1.0))
    }

    /// 1-D grid of n interior nodes.
    pub fn strip(n: usize, spacing: f64) -> Result<Self> {
        Self::rectangle(n, 1, spacing)
    }

    /// {|x| < 1, |x - (-0.3, -0.3)| > 0.2} on an n x n lattice over [-1, 1]^2.
    pub fn annulus(n: usize) -> Result<Self> {
        let h = 2.0 / (n as f64 + 1.0);
        Self::from_predicate(n, n, h, [-1.0, -1.0], |x, y| x.hypot(y) < 1.0 && (x + 0.3).hypot(y + 0.3) > 0.2)
    }

    pub fn node_xy(&self, i: usize, j: usize) -> [f64; 2] {
        let y = if self.ny == 1 { 0.0 } else { self.origin[1] + (j as f64 + 1.0) * self.spacing };
        [self.origin[0] + (i as f64 + 1.0) * self.spacing, y]
    }

    pub fn is_one_dimensional(&self) -> bool {
        self.ny == 1
    }

    /// Lattice coordinates of the unknowns, in unknown order.
    pub fn dofs(&self) -> Vec<(usize, usize)> {
        (0..self.ny).flat_map(|j| (0..self.nx).map(move |i| (i, j))).filter(|&(i, j)| self.mask[j * self.nx + i]).collect()
    }

    /// Unknown index of each lattice node, `None` off the mask.
    fn numbering(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.nx * self.ny];
        for (k, (i, j)) in self.dofs().into_iter().enumerate() {
            out[j * self.nx + i] = Some(k);
        }
        out
    }

    pub fn n_interior(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    fn neighbours(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let mut n = Vec::with_capacity(4);
        if i > 0 {
            n.push((i - 1, j));
        }
        if i + 1 < self.nx {
            n.push((i + 1, j));
        }
        if j > 0 {
            n.push((i, j - 1));
        }
        if j + 1 < self.ny {
            n.push((i, j + 1));
        }
        n
    }

    /// Number of 4-connected components of the mask.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.mask.len()];
        let mut count = 0;
        for start in 0..self.mask.len() {
            if !self.mask[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(c) = queue.pop_front() {
                for (a, b) in self.neighbours(c % self.nx, c / self.nx) {
                    let k = b * self.nx + a;
                    if self.mask[k] && !seen[k] {
                        seen[k] = true;
                        queue.push_back(k);
                    }
                }
            }
        }
        count
    }

    pub fn validate(&self) -> Result<()> {
        if self.mask.len() != self.nx * self.ny {
            return Err(Error::DimensionMismatch { expected: self.nx * self.ny, got: self.mask.len() });
        }
        if self.n_interior() == 0 {
            return Err(Error::InvalidInput("grid has no interior node".into()));
        }
        let c = self.components();
        if c != 1 {
            return Err(Error::DisconnectedDomain { components: c });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Fd5Point,
    Ingested,
}

/// Symmetric stiffness K with an optional lumped (diagonal) mass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseOperator {
    pub stiffness: CsrMatrix,
    pub mass: Option<DVector<f64>>,
    pub provenance: Provenance,
}

/// Eigenpairs of K phi = lambda M phi with physical eigenvectors scaled
/// to sup-norm 1; the ground state is positive.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Modes {
    pub values: Vec<f64>,
    pub vectors: Vec<State>,
}

impl SparseOperator {
    pub fn new(stiffness: CsrMatrix, mass: Option<DVector<f64>>, provenance: Provenance) -> Result<Self> {
        let n = stiffness.nrows();
        if stiffness.ncols() != n || n == 0 {
            return Err(Error::BadFormat(format!("operator must be square and non-empty, got {}x{}", n, stiffness.ncols())));
        }
        let asym = stiffness.asymmetry();
        if asym > 1e-12 * stiffness.max_abs().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        if let Some(m) = &mass {
            if m.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: m.len() });
            }
            if !m.iter().all(|&v| v > 0.0 && v.is_finite()) {
                return Err(Error::BadFormat("mass entries must be positive".into()));
            }
        }
        Ok(Self { stiffness, mass, provenance })
    }

    pub fn dim(&self) -> usize {
        self.stiffness.nrows()
    }

    /// u = w . v with w = M^(-1/2) (ones without a mass).
    pub fn weights(&self) -> DVector<f64> {
        match &self.mass {
            Some(m) => m.map(|v| 1.0 / v.sqrt()),
            None => DVector::from_element(self.dim(), 1.0),
        }
    }

    /// S = M^(-1/2) K M^(-1/2).
    pub fn symmetric_form(&self) -> CsrMatrix {
        match &self.mass {
            Some(_) => {
                let w = self.weights();
                self.stiffness.scale_rows_cols(&w, &w)
            }
            None => self.stiffness.clone(),
        }
    }

    pub fn modes(&self, m: usize) -> Result<Modes> {
        let pairs = SymOperator::Sparse(self.symmetric_form()).lowest(m)?;
        let w = self.weights();
        let mut vectors = Vec::with_capacity(pairs.vectors.len());
        for (k, psi) in pairs.vectors.iter().enumerate() {
            let mut phi = psi.component_mul(&w);
            if k == 0 {
                if phi.sum() < 0.0 {
                    phi.neg_mut();
                }
            } else {
                stabilize_sign(&mut phi);
            }
            let s = phi.amax();
            vectors.push(phi / s);
        }
        Ok(Modes { values: pairs.values, vectors })
    }
}

/// Standard 5-point (3-point when one-dimensional) Dirichlet Laplacian.
pub fn build_fd_laplacian(grid: &GridDomain) -> Result<SparseOperator> {
    grid.validate()?;
    let num = grid.numbering();
    let h2 = grid.spacing * grid.spacing;
    let diag = if grid.is_one_dimensional() { 2.0 } else { 4.0 } / h2;
    let mut trip = Vec::new();
    for (k, (i, j)) in grid.dofs().into_iter().enumerate() {
        trip.push((k, k, diag));
        for (a, b) in grid.neighbours(i, j) {
            if let Some(l) = num[b * grid.nx + a] {
                trip.push((k, l, -1.0 / h2));
            }
        }
    }
    SparseOperator::new(CsrMatrix::from_triplets(num.iter().flatten().count(), num.iter().flatten().count(), &trip)?, None, Provenance::Fd5Point)
}

/// Reads a symmetric stiffness matrix and an optional diagonal mass, both
/// in Matrix Market coordinate format.
pub fn ingest_operator(stiffness: &Path, mass: Option<&Path>) -> Result<SparseOperator> {
    let k = read_matrix_market(stiffness)?;
    let m = match mass {
        Some(p) => {
            let m = read_matrix_market(p)?;
            if m.triplets().iter().any(|&(i, j, v)| i != j && v != 0.0) {
                return Err(Error::BadFormat("mass matrix must be diagonal (lumped)".into()));
            }
            Some(m.diagonal())
        }
        None => None,
    };
    SparseOperator::new(k, m, Provenance::Ingested)
}

/// F(v) = S v - f(w . v) / w: the lumped-mass problem in scaled unknowns.
#[derive(Clone, Debug)]
struct ScaledSemilinear {
    s: CsrMatrix,
    w: DVector<f64>,
    nl: Nonlinearity,
}

impl NonlinearMap for ScaledSemilinear {
    fn dim(&self) -> usize {
        self.s.nrows()
    }

    fn eval(&self, v: &State) -> State {
        let mut out = self.s.mul_vec(v);
        for i in 0..v.len() {
            out[i] -= self.nl.f(self.w[i] * v[i]) / self.w[i];
        }
        out
    }

    fn sparse_jacobian(&self, v: &State) -> Option<CsrMatrix> {
        let d = DVector::from_fn(v.len(), |i, _| -self.nl.df(self.w[i] * v[i]));
        Some(self.s.add_diagonal(&d))
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        "semilinear-lumped".into()
    }
}

/// A semilinear problem K u - M f(u) = M g on a sparse operator.
#[derive(Clone, Debug)]
pub struct EllipticProblem {
    pub op: SparseOperator,
    pub nl: Nonlinearity,
    map: MapHandle,
    w: DVector<f64>,
}

impl EllipticProblem {
    pub fn new(op: SparseOperator, nl: Nonlinearity) -> Self {
        let w = op.weights();
        let map = match op.mass {
            None => MapHandle::new(SemilinearMap::new(LinearPart::Sparse(op.stiffness.clone()), nl)),
            Some(_) => MapHandle::new(ScaledSemilinear { s: op.symmetric_form(), w: w.clone(), nl }),
        };
        Self { op, nl, map, w }
    }

    /// The map in scaled unknowns.
    pub fn map(&self) -> &MapHandle {
        &self.map
    }

    pub fn to_physical(&self, v: &State) -> State {
        v.component_mul(&self.w)
    }

    pub fn to_scaled(&self, u: &State) -> State {
        u.component_div(&self.w)
    }

    /// Right-hand side in scaled unknowns for a nodal load g.
    pub fn scaled_load(&self, g: &State) -> State {
        g.component_div(&self.w)
    }

    /// Lowest m eigenvalues of DF at the physical state u.
    pub fn jacobian_spectrum(&self, u: &State, m: usize) -> Result<Vec<f64>> {
        Ok(self.map.jac_operator(&self.to_scaled(u))?.lowest(m)?.values)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanSample {
    pub t: f64,
    /// Lowest m eigenvalues of DF(base + t phi_1), ascending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanCrossing {
    /// 1-based eigenvalue branch.
    pub branch: usize,
    pub t: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerticalScan {
    pub base: State,
    pub direction: State,
    pub samples: Vec<ScanSample>,
    pub crossings: Vec<ScanCrossing>,
    /// Zeros per branch.
    pub crossing_counts: Vec<usize>,
    /// Every branch decreases strictly between consecutive samples.
    pub strictly_decreasing: bool,
    /// Every branch is constant in t (linear f).
    pub flat: bool,
    /// A flat branch sits at zero, so its crossings are not isolated.
    pub degenerate: bool,
}

impl VerticalScan {
    pub fn total_crossings(&self) -> usize {
        self.crossing_counts.iter().sum()
    }
}

/// Samples the lowest m eigenvalues of DF along base + t phi_1 and
/// localizes their zeros by bisection. Samples run in parallel.
pub fn vertical_scan(problem: &EllipticProblem, base: &State, t_range: (f64, f64), m: usize, samples: usize, exec: Exec) -> Result<VerticalScan> {
    let n = problem.op.dim();
    if base.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: base.len() });
    }
    if !(t_range.0 < t_range.1) || samples < 2 || m == 0 {
        return Err(Error::InvalidInput("vertical scan needs t0 < t1, samples >= 2 and m >= 1".into()));
    }
    let m = m.min(n);
    let phi = problem.op.modes(1)?.vectors.remove(0);
    let ts: Vec<f64> = (0..samples).map(|k| t_range.0 + (t_range.1 - t_range.0) * k as f64 / (samples - 1) as f64).collect();
    let spectra = exec.map(&ts, |&t| problem.jacobian_spectrum(&(base + &phi * t), m));
    let mut out = Vec::with_capacity(samples);
    for (t, s) in ts.iter().zip(spectra) {
        out.push(ScanSample { t: *t, eigenvalues: s? });
    }
    let scale = out.iter().flat_map(|s| s.eigenvalues.iter()).fold(1.0f64, |a, v| a.max(v.abs()));
    let mut crossings = Vec::new();
    let mut counts = vec![0; m];
    let mut decreasing = true;
    let mut flat = true;
    let mut degenerate = false;
    for i in 0..m {
        let vals: Vec<f64> = out.iter().map(|s| s.eigenvalues[i]).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi - lo > 1e-12 * scale {
            flat = false;
        } else if lo.abs() <= 1e-9 * scale {
            degenerate = true;
        }
        for k in 1..samples {
            if !(vals[k] < vals[k - 1]) {
                decreasing = false;
            }
            if (vals[k - 1] > 0.0) != (vals[k] > 0.0) {
                let (mut a, mut b) = (ts[k - 1], ts[k]);
                let pos_a = vals[k - 1] > 0.0;
                for _ in 0..200 {
                    if (b - a).abs() <= 1e-12 * (1.0 + a.abs()) {
                        break;
                    }
                    let mid = 0.5 * (a + b);
                    let v = problem.jacobian_spectrum(&(base + &phi * mid), i + 1)?[i];
                    if (v > 0.0) == pos_a {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                crossings.push(ScanCrossing { branch: i + 1, t: 0.5 * (a + b) });
                counts[i] += 1;
            }
        }
    }
    if flat {
        decreasing = false;
    }
    Ok(VerticalScan {
        base: base.clone(),
        direction: phi,
        samples: out,
        crossings,
        crossing_counts: counts,
        strictly_decreasing: decreasing,
        flat,
        degenerate,
    })
}

/// Which Lazer-McKenna-type linearized seed starts the load homotopy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedBranch {
    /// t phi_1 / (ell_minus - lambda_1), where f' is near ell_minus. Lines
    /// through it tend to meet the mirror branches only on one side of s = 0.
    Negative,
    /// t phi_1 / (ell_plus - lambda_1).
    #[default]
    Positive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SoliminiConfig {
    /// g = -t_load phi_1 with phi_1 scaled to sup-norm 1.
    pub t_load: f64,
    /// Line direction as coefficients of phi_1, phi_2, ...
    pub line_coeffs: Vec<f64>,
    pub s_range: (f64, f64),
    pub seed: SeedBranch,
    pub diagram: DiagramConfig,
    pub scan_samples: usize,
    /// Half-width of the vertical scan around the first solution.
    pub scan_half_width: f64,
}

impl Default for SoliminiConfig {
    fn default() -> Self {
        let mut diagram = DiagramConfig::default();
        diagram.step.max_step = 25.0;
        diagram.step.initial_step = 1.0;
        // 1e-4 of the line length.
        diagram.step.min_step = 0.2;
        diagram.scan_samples = 400;
        Self {
            t_load: 1000.0,
            line_coeffs: vec![0.8, -0.1, -0.1],
            s_range: (-1000.0, 1000.0),
            seed: SeedBranch::Positive,
            diagram,
            scan_samples: 200,
            scan_half_width: 1000.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoliminiOutcome {
    /// Physical solutions with Morse indices and relative residues.
    pub solutions: SolutionSet,
    pub first_solution: State,
    pub load: State,
    pub eigenvalues: Vec<f64>,
    /// Operator eigenvalues strictly between ell_minus and ell_plus.
    pub enclosed: usize,
    pub homotopy_steps: usize,
    pub diagram: BifurcationDiagram,
    pub scan: VerticalScan,
}

/// Solves F(u) = theta g + (1 - theta) F(u_0) for theta from 0 to 1.
fn load_homotopy(map: &MapHandle, u0: &State, g: &State) -> Result<(State, usize)> {
    let g0 = map.eval(u0)?;
    let tol = 1e-12 * (1.0 + g.norm());
    let mut u = u0.clone();
    let mut theta: f64 = 0.0;
    let mut dtheta: f64 = 0.25;
    let mut steps = 0;
    while theta < 1.0 {
        let next = (theta + dtheta).min(1.0);
        let rhs = g * next + &g0 * (1.0 - next);
        let out = newton_solve(map, &u, &rhs, tol, 30)?;
        steps += 1;
        if out.converged {
            u = out.u;
            theta = next;
            dtheta = (dtheta * 1.5).min(0.5);
        } else {
            dtheta *= 0.5;
            if dtheta < 1e-6 {
                return Err(Error::NoInitialSolution(format!("load homotopy stalled at theta = {theta:.6}")));
            }
        }
        if steps > 10_000 {
            return Err(Error::NoInitialSolution("load homotopy step budget exhausted".into()));
        }
    }
    Ok((u, steps))
}

/// g = -t phi_1; a first solution by load homotopy from a linearized seed;
/// the diagram of the perturbed phi_1 line through it; harvested
/// solutions; and the vertical scan through the first solution.
pub fn run_solimini_experiment(problem: &EllipticProblem, cfg: &SoliminiConfig) -> Result<SoliminiOutcome> {
    let n_modes = cfg.line_coeffs.len().max(1);
    let (ell_minus, ell_plus) = problem.nl.limits();
    let probe_modes = (n_modes + 2).max(8).min(problem.op.dim());
    let modes = problem.op.modes(probe_modes)?;
    let lambda1 = modes.values[0];
    if !(ell_minus < lambda1) {
        return Err(Error::EigenvalueStraddle { ell_minus, ell_plus, lambda1 });
    }
    let enclosed = modes.values.iter().filter(|&&l| ell_minus < l && l < ell_plus).count();
    let phi1 = modes.vectors[0].clone();
    let g = &phi1 * -cfg.t_load;
    let c = match cfg.seed {
        SeedBranch::Negative => cfg.t_load / (ell_minus - lambda1),
        SeedBranch::Positive => {
            if ell_plus == lambda1 {
                return Err(Error::NoInitialSolution("ell_plus equals lambda_1".into()));
            }
            cfg.t_load / (ell_plus - lambda1)
        }
    };
    let map = problem.map();
    let g_s = problem.scaled_load(&g);
    let seed = problem.to_scaled(&(&phi1 * c));
    let (v0, homotopy_steps) = load_homotopy(map, &seed, &g_s)?;
    let dir_phys = mode_direction(&modes.vectors[..n_modes.min(modes.vectors.len())], &cfg.line_coeffs[..n_modes.min(modes.vectors.len())])?;
    let line = LineSpec::new(v0.clone(), problem.to_scaled(&dir_phys), cfg.s_range)?
        .with_description(format!("first solution + s ({:?}) . phi", cfg.line_coeffs));
    let diagram = build_diagram(map, &line, &g_s, &cfg.diagram, cfg.diagram.depth_limit)?;
    let items = diagram
        .solutions
        .items
        .iter()
        .map(|s| Solution { u: problem.to_physical(&s.u), morse_index: s.morse_index, residue: s.residue })
        .collect();
    let solutions = SolutionSet { items, dedupe_rel: diagram.solutions.dedupe_rel };
    let u0 = problem.to_physical(&v0);
    let m = (enclosed + 1).min(problem.op.dim());
    let scan = vertical_scan(problem, &u0, (-cfg.scan_half_width, cfg.scan_half_width), m, cfg.scan_samples.max(2), cfg.diagram.exec)?;
    Ok(SoliminiOutcome {
        solutions,
        first_solution: u0,
        load: g,
        eigenvalues: modes.values,
        enclosed,
        homotopy_steps,
        diagram,
        scan,
    })
}

#[cfg(test)]
mod tests;
