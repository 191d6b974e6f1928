//! Experiment configuration files (TOML). Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use foldtrace::bifurcation::DiagramConfig;
use foldtrace::elliptic::SoliminiConfig;
use foldtrace::planar::{CurveConfig, FlowerConfig, PlanarKind, ProbeConfig};
use foldtrace::Exec;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Random seed for sampling; `--seed` overrides it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
    pub census: Option<CensusSection>,
    pub bifurcate: Option<BifurcateSection>,
    pub planar: Option<PlanarSection>,
    pub scan: Option<ScanSection>,
    pub solimini: Option<SoliminiSection>,
    pub ingest: Option<IngestSection>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    1
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// A slope given as a number, as a combination sum c_i lambda_i of
/// operator eigenvalues (`[[c, i], ...]`, 1-based), or as a point between
/// lambda_k and lambda_{k+1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Slope {
    Value(f64),
    Combination(Vec<(f64, usize)>),
    Between { between: usize, fraction: f64 },
}

impl Slope {
    /// Largest eigenvalue index the slope refers to.
    pub fn max_index(&self) -> usize {
        match self {
            Slope::Value(_) => 0,
            Slope::Combination(t) => t.iter().map(|x| x.1).max().unwrap_or(0),
            Slope::Between { between, .. } => between + 1,
        }
    }

    pub fn resolve(&self, lambda: &[f64]) -> CliResult<f64> {
        let get = |i: usize| {
            if i == 0 || i > lambda.len() {
                Err(CliError::Config(format!("eigenvalue index {i} out of range 1..={}", lambda.len())))
            } else {
                Ok(lambda[i - 1])
            }
        };
        match self {
            Slope::Value(v) => Ok(*v),
            Slope::Combination(terms) => {
                if terms.is_empty() {
                    return Err(CliError::Config("empty eigenvalue combination".into()));
                }
                terms.iter().try_fold(0.0, |acc, (c, i)| Ok(acc + c * get(*i)?))
            }
            Slope::Between { between, fraction } => {
                if !(0.0 < *fraction && *fraction < 1.0) {
                    return Err(CliError::Config(format!("fraction {fraction} must lie in (0, 1)")));
                }
                let lo = get(*between)?;
                let hi = get(between + 1)?;
                Ok(lo + fraction * (hi - lo))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusSection {
    pub n: usize,
    /// Rows k of the slope ladder to run.
    #[serde(default)]
    pub ladder: Vec<usize>,
    #[serde(default)]
    pub runs: Vec<CensusRun>,
    /// g = -load sin(I_h).
    #[serde(default = "one")]
    pub load: f64,
    /// Write a per-row CSV of solutions for ladder rows.
    #[serde(default = "yes")]
    pub ladder_csv: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusRun {
    pub label: String,
    pub ell_minus: Slope,
    pub ell_plus: Slope,
    #[serde(default = "yes")]
    pub csv: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Discretized -u'' - f(u) with piecewise-linear f on n interior nodes.
    PlSturm { n: usize, ell_minus: Slope, ell_plus: Slope, #[serde(default = "one")] load: f64 },
    Planar { map: PlanarKind, #[serde(default)] g: [f64; 2] },
    /// F(u) = A u with g = A b, b = `solution`.
    Linear { matrix: Vec<Vec<f64>>, solution: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    Point(Vec<f64>),
    /// Positive or negative Lazer-McKenna solution (pl_sturm only).
    LazerMckenna(LmBranch),
    /// First sign-consistent orthant among random draws.
    Sampled(SampleSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmBranch {
    Positive,
    Negative,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub draws: usize,
    /// Added to the experiment seed.
    #[serde(default)]
    pub seed_offset: u64,
    /// Skip seeds already harvested by earlier lines.
    #[serde(default)]
    pub skip_known: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionSpec {
    Vector(Vec<f64>),
    /// Coefficients of the operator modes 1, 2, ... (pl_sturm only).
    Modes(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub base: BaseSpec,
    /// Newton-polish the base onto F(u) = g before tracing.
    #[serde(default)]
    pub polish: bool,
    pub direction: DirectionSpec,
    pub s_range: (f64, f64),
}

/// Lines through every solution found by the primary lines.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub directions: Vec<DirectionSpec>,
    pub s_range: (f64, f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BifurcateSection {
    pub problem: ProblemSpec,
    pub lines: Vec<LineConfig>,
    pub campaign: Option<CampaignConfig>,
    #[serde(default)]
    pub diagram: DiagramConfig,
    /// Compare against the exhaustive orthant census (pl_sturm only).
    #[serde(default)]
    pub census_check: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarSection {
    pub map: PlanarKind,
    /// Half-width of the square domain box.
    pub half_width: f64,
    /// Points whose preimages are counted; the first one's preimages are
    /// written as zeros.csv.
    pub targets: Vec<[f64; 2]>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub curves: CurveConfig,
    #[serde(default)]
    pub flower: Option<FlowerSection>,
    #[serde(default)]
    pub probes: Option<ProbeSection>,
}

fn default_grid() -> usize {
    64
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowerSection {
    #[serde(default)]
    pub config: FlowerConfig,
    /// Raster resolution and minimum tile size (cells) for the tile count.
    pub raster: usize,
    pub min_cells: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default)]
    pub config: ProbeConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// Finite-difference annulus with n x n bounding grid.
    Annulus { n: usize },
    UnitSquare { n: usize },
    /// Matrix Market stiffness and optional lumped mass.
    File { stiffness: PathBuf, mass: Option<PathBuf> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub operator: OperatorSpec,
    pub ell_minus: Slope,
    pub ell_plus: Slope,
    /// Branches tracked; default k + 1.
    pub eigenvalues: Option<usize>,
    pub t_range: (f64, f64),
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoliminiSection {
    pub operator: OperatorSpec,
    pub ell_minus: Slope,
    pub ell_plus: Slope,
    #[serde(default)]
    pub run: SoliminiConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub stiffness: PathBuf,
    pub mass: Option<PathBuf>,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Expected lowest eigenvalues, checked to `tolerance`.
    #[serde(default)]
    pub expect: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
}

fn default_modes() -> usize {
    4
}

fn default_tol() -> f64 {
    1e-2
}

impl ExperimentConfig {
    pub fn from_str(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, &dir)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// SHA-256 of the effective configuration (after overrides).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks the section needed by `command` is present and sane.
    pub fn validate(&self, command: &str) -> CliResult<()> {
        let missing = || CliError::Config(format!("config has no [{command}] section"));
        match command {
            "census" => {
                let c = self.census.as_ref().ok_or_else(missing)?;
                if c.n == 0 || c.n > foldtrace::sturm::MAX_CENSUS_DIM {
                    return Err(CliError::Config(format!("census n must be in 1..={}", foldtrace::sturm::MAX_CENSUS_DIM)));
                }
                if c.ladder.is_empty() && c.runs.is_empty() {
                    return Err(CliError::Config("census needs ladder rows or runs".into()));
                }
                if let Some(k) = c.ladder.iter().find(|&&k| k == 0 || k > c.n) {
                    return Err(CliError::Config(format!("ladder row {k} outside 1..={}", c.n)));
                }
                if !(c.load > 0.0) {
                    return Err(CliError::Config("load must be positive".into()));
                }
            }
            "bifurcate" => {
                let b = self.bifurcate.as_ref().ok_or_else(missing)?;
                if b.lines.is_empty() {
                    return Err(CliError::Config("bifurcate needs at least one line".into()));
                }
                if b.census_check && !matches!(b.problem, ProblemSpec::PlSturm { .. }) {
                    return Err(CliError::Config("census_check needs a pl_sturm problem".into()));
                }
                b.diagram.step.validate()?;
            }
            "planar" => {
                let p = self.planar.as_ref().ok_or_else(missing)?;
                if !(p.half_width > 0.0) || p.targets.is_empty() || p.grid < 2 {
                    return Err(CliError::Config("planar needs half_width > 0, a target and grid >= 2".into()));
                }
            }
            "scan" => {
                let s = self.scan.as_ref().ok_or_else(missing)?;
                if s.samples < 2 || !(s.t_range.0 < s.t_range.1) {
                    return Err(CliError::Config("scan needs samples >= 2 and an increasing t_range".into()));
                }
            }
            "solimini" => {
                let s = self.solimini.as_ref().ok_or_else(missing)?;
                s.run.diagram.step.validate()?;
            }
            "ingest-check" => {
                self.ingest.as_ref().ok_or_else(missing)?;
            }
            other => return Err(CliError::Config(format!("unknown command {other}"))),
        }
        Ok(())
    }
}
