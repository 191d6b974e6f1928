//! One function per subcommand. Each reads its config section, runs the
//! library, and records outputs and counters.

use nalgebra::DMatrix;
use serde_json::json;

use foldtrace::bifurcation::export::{diagram_svg, write_campaign_csv, write_diagram_json, write_solutions_csv, Projection};
use foldtrace::bifurcation::{build_diagram, lines_from, mode_direction, multi_line_campaign, sample_orthant_seeds};
use foldtrace::continuation::LineSpec;
use foldtrace::elliptic::{
    build_fd_laplacian, heatmap_svg, ingest_operator, run_solimini_experiment, vertical_scan, write_fields_csv, write_scan_csv, EllipticProblem,
    GridDomain, SparseOperator, VerticalScan,
};
use foldtrace::planar::{
    compute_flower, count_domain_tiles, count_preimages, domain_svg, find_critical_curves, image_curves, image_svg, ray_probes, verify_tile_parity,
    write_zeros_csv, Flower, PlanarMap, PlaneBox,
};
use foldtrace::problem::{newton_solve, LinearMap};
use foldtrace::semilinear::{calibrate_arctan, LinearPart, Nonlinearity, PLNonlinearity, SemilinearMap, TridiagonalOperator};
use foldtrace::solutions::SolutionSet;
use foldtrace::sturm::{census_markdown, enumerate_pl_solutions, lazer_mckenna_seeds, slope_ladder, write_census_csv, CensusRow};
use foldtrace::svg::SvgPlot;
use foldtrace::{Error, MapHandle, State};

use crate::config::{BaseSpec, DirectionSpec, ExperimentConfig, LmBranch, OperatorSpec, ProblemSpec, Slope};
use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;

/// Tolerance for set comparisons against the census.
const CENSUS_TOL: f64 = 1e-8;

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

pub fn census(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let c = cfg.census.as_ref().expect("validated");
    let t = TridiagonalOperator::with_nodes(c.n)?;
    let lam = t.eigenvalues();
    let op = LinearPart::Tridiagonal(t.clone());
    let g = -t.mode(1) * c.load;
    let ladder = slope_ladder(&t);
    let mut jobs = Vec::new();
    for &k in &c.ladder {
        let (_, lm, lp) = ladder[k - 1];
        jobs.push((k.to_string(), lm, lp, c.ladder_csv));
    }
    for r in &c.runs {
        jobs.push((r.label.clone(), r.ell_minus.resolve(&lam)?, r.ell_plus.resolve(&lam)?, r.csv));
    }
    let mut rows = Vec::new();
    let mut counts = serde_json::Map::new();
    for (label, lm, lp, csv) in jobs {
        let nl = PLNonlinearity::new(lm, lp)?;
        let census = enumerate_pl_solutions(&op, &nl, &g, cfg.exec)?;
        if csv {
            write_census_csv(&census, &rec.file(&format!("census_{}.csv", slug(&label))))?;
        }
        if census.nongeneric_hits > 0 || census.singular > 0 {
            rec.note(format!("row {label}: {} singular orthants, {} solutions on a coordinate hyperplane", census.singular, census.nongeneric_hits));
        }
        counts.insert(label.clone(), json!(census.solutions.len()));
        rows.push(CensusRow { label, ell_minus: lm, ell_plus: lp, count: census.solutions.len(), singular: census.singular, nongeneric: census.nongeneric_hits });
    }
    rec.write("census.md", &census_markdown(&rows))?;
    rec.write_json("census.json", &rows)?;
    rec.set("n", c.n);
    rec.set("counts", serde_json::Value::Object(counts));
    Ok(())
}

/// A problem ready for diagrams: the map, g, and what line recipes need.
struct Prepared {
    map: MapHandle,
    g: State,
    /// Unnormalized modes sin(k I_h), k = 1..n (pl_sturm).
    modes: Vec<State>,
    pl: Option<(LinearPart, PLNonlinearity, f64)>,
    projection: Projection,
}

fn prepare(p: &ProblemSpec) -> CliResult<Prepared> {
    match p {
        ProblemSpec::PlSturm { n, ell_minus, ell_plus, load } => {
            let t = TridiagonalOperator::with_nodes(*n)?;
            let lam = t.eigenvalues();
            let nl = PLNonlinearity::new(ell_minus.resolve(&lam)?, ell_plus.resolve(&lam)?)?;
            let op = LinearPart::Tridiagonal(t.clone());
            let map = MapHandle::new(SemilinearMap::new(op.clone(), Nonlinearity::PiecewiseLinear(nl)));
            let modes: Vec<State> = (1..=*n).map(|k| t.mode(k)).collect();
            let projection = Projection::ModeVsParameter { mode: modes[0].normalize() };
            Ok(Prepared { map, g: -t.mode(1) * *load, modes, pl: Some((op, nl, *load)), projection })
        }
        ProblemSpec::Planar { map, g } => Ok(Prepared {
            map: PlanarMap::new(map.clone()).handle(),
            g: State::from_vec(g.to_vec()),
            modes: Vec::new(),
            pl: None,
            projection: Projection::Coordinates { i: 0, j: 1 },
        }),
        ProblemSpec::Linear { matrix, solution } => {
            let n = matrix.len();
            if n == 0 || matrix.iter().any(|r| r.len() != n) || solution.len() != n {
                return Err(CliError::Config("linear problem needs a square matrix and a matching solution".into()));
            }
            let a = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
            let g = &a * State::from_vec(solution.clone());
            Ok(Prepared {
                map: MapHandle::new(LinearMap { a }),
                g,
                modes: Vec::new(),
                pl: None,
                projection: Projection::Coordinates { i: 0, j: if n > 1 { 1 } else { 0 } },
            })
        }
    }
}

fn direction(p: &Prepared, d: &DirectionSpec) -> CliResult<State> {
    match d {
        DirectionSpec::Vector(v) => Ok(State::from_vec(v.clone())),
        DirectionSpec::Modes(c) => {
            if p.modes.is_empty() {
                return Err(CliError::Config("mode directions need a pl_sturm problem".into()));
            }
            if c.len() > p.modes.len() {
                return Err(CliError::Config(format!("{} mode coefficients for {} modes", c.len(), p.modes.len())));
            }
            Ok(mode_direction(&p.modes[..c.len()], c)?)
        }
    }
}

fn base(p: &Prepared, b: &BaseSpec, seed: u64, known: &SolutionSet) -> CliResult<State> {
    let need_pl = || CliError::Config("this base needs a pl_sturm problem".into());
    match b {
        BaseSpec::Point(v) => Ok(State::from_vec(v.clone())),
        BaseSpec::LazerMckenna(branch) => {
            let (op, nl, load) = p.pl.as_ref().ok_or_else(need_pl)?;
            let lm = lazer_mckenna_seeds(op, nl, *load)?;
            Ok(match branch {
                LmBranch::Positive => lm.positive,
                LmBranch::Negative => lm.negative,
            })
        }
        BaseSpec::Sampled(s) => {
            let (op, nl, _) = p.pl.as_ref().ok_or_else(need_pl)?;
            let sample = sample_orthant_seeds(op, nl, &p.g, s.draws, seed.wrapping_add(s.seed_offset), !s.skip_known)?;
            sample
                .seeds
                .into_iter()
                .find(|u| !s.skip_known || !known.contains(u, CENSUS_TOL))
                .ok_or_else(|| Error::NoInitialSolution(format!("no new sign-consistent orthant in {} draws", sample.draws)).into())
        }
    }
}

pub fn bifurcate(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let b = cfg.bifurcate.as_ref().expect("validated");
    let p = prepare(&b.problem)?;
    let mut dcfg = b.diagram.clone();
    dcfg.exec = cfg.exec;
    let mut set = SolutionSet::new(dcfg.dedupe_rel);
    let mut harvests = Vec::new();
    for (k, l) in b.lines.iter().enumerate() {
        let mut u0 = base(&p, &l.base, cfg.seed, &set)?;
        if l.polish {
            let out = newton_solve(&p.map, &u0, &p.g, 1e-13 * (1.0 + p.g.norm()), 50)?;
            if !out.converged {
                return Err(Error::NoInitialSolution(format!("line {k}: base polish stalled at residual {:.3e}", out.residual)).into());
            }
            u0 = out.u;
        }
        let line = LineSpec::new(u0, direction(&p, &l.direction)?, l.s_range)?.with_description(format!("line {k}"));
        let d = build_diagram(&p.map, &line, &p.g, &dcfg, dcfg.depth_limit)?;
        write_diagram_json(&d, &rec.file(&format!("diagram_{k}.json")))?;
        rec.write(&format!("diagram_{k}.svg"), &diagram_svg(&d, &p.projection, &format!("{}: line {k}", cfg.name)))?;
        if d.unresolved > 0 {
            rec.note(format!("line {k}: {} crossings off the root could not be seeded", d.unresolved));
        }
        harvests.push(json!({"line": k, "harvested": d.solutions.len(), "branches": d.branches.len(), "folds": d.folds.len()}));
        set = set.merge(&d.solutions);
    }
    rec.set("primary_solutions", set.len());
    rec.set("lines", harvests);
    let primary = set.clone();
    if let Some(c) = &b.campaign {
        let dirs = c.directions.iter().map(|d| direction(&p, d)).collect::<CliResult<Vec<_>>>()?;
        let seeds: Vec<State> = primary.items.iter().map(|s| s.u.clone()).collect();
        let lines = lines_from(&seeds, &dirs, c.s_range)?;
        let camp = multi_line_campaign(&p.map, &lines, &seeds, &p.g, &dcfg)?;
        write_campaign_csv(&camp, &rec.file("campaign.csv"))?;
        rec.set("campaign_lines", lines.len());
        set = set.merge(&camp.solutions);
    }
    write_solutions_csv(&set, &rec.file("solutions.csv"))?;
    rec.set("solutions", set.len());
    rec.set("morse_histogram", set.morse_histogram());
    rec.set("max_residue", set.max_residue());
    if b.census_check {
        let (op, nl, _) = p.pl.as_ref().expect("validated");
        let census = enumerate_pl_solutions(op, nl, &p.g, cfg.exec)?;
        let recovered = |s: &SolutionSet| census.solutions.items.iter().filter(|c| s.contains(&c.u, CENSUS_TOL)).count();
        let stray = set.items.iter().filter(|s| !census.solutions.contains(&s.u, CENSUS_TOL)).count();
        rec.set("census_solutions", census.solutions.len());
        rec.set("census_histogram", census.solutions.morse_histogram());
        rec.set("census_recovered", recovered(&set));
        rec.set("primary_census_recovered", recovered(&primary));
        rec.set("not_in_census", stray);
    }
    Ok(())
}

pub fn planar(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let s = cfg.planar.as_ref().expect("validated");
    let map = PlanarMap::new(s.map.clone());
    let bx = PlaneBox::square(s.half_width);
    let counts: Vec<_> = s.targets.iter().map(|y| count_preimages(&map, *y, &bx, s.grid, cfg.exec)).collect();
    rec.set("target_counts", counts.iter().map(|c| c.count()).collect::<Vec<_>>());
    rec.set("suspect_undercount", counts.iter().any(|c| c.suspect_undercount));
    let zeros = counts[0].roots.clone();
    write_zeros_csv(&map, &zeros, &rec.file("zeros.csv"))?;
    let curves = find_critical_curves(&map, &bx, &s.curves);
    rec.set("critical_curves", curves.len());
    rec.set("cusps", curves.iter().map(|c| c.cusps.len()).sum::<usize>());
    let mut flower = Flower::default();
    let mut title = format!("{}: critical set", cfg.name);
    if let Some(f) = &s.flower {
        flower = compute_flower(&map, &curves, &bx, &f.config, s.curves.step, cfg.exec);
        let mut lines: Vec<Vec<[f64; 2]>> = curves.iter().map(|c| c.points()).collect();
        lines.extend(flower.components.iter().cloned());
        let tiles = count_domain_tiles(&lines, &bx, f.raster, f.min_cells);
        rec.set("domain_tiles", tiles);
        rec.set("flower_budget_exceeded", flower.budget_exceeded);
        title = format!("{}: {tiles} domain tiles", cfg.name);
    }
    rec.write("domain.svg", &domain_svg(&title, &curves, &flower, &zeros, &bx))?;
    if let Some(pr) = &s.probes {
        let image = image_curves(&map, &curves);
        let report = ray_probes(&map, &image, pr.center, &bx, &pr.config, cfg.exec);
        let verdict = verify_tile_parity(&report);
        rec.set("tile_counts", report.counts());
        rec.set("parity_passed", verdict.passed);
        rec.set("fold_crossings", verdict.fold_crossings);
        for n in &verdict.notes {
            rec.note(n.clone());
        }
        rec.write("image.svg", &image_svg(&format!("{}: image tiles", cfg.name), &image, &report))?;
        rec.write_json("tiles.json", &json!({"report": report, "verdict": verdict}))?;
    }
    Ok(())
}

struct Built {
    op: SparseOperator,
    grid: Option<GridDomain>,
}

fn build_operator(cfg: &ExperimentConfig, spec: &OperatorSpec) -> CliResult<Built> {
    Ok(match spec {
        OperatorSpec::Annulus { n } => {
            let g = GridDomain::annulus(*n)?;
            Built { op: build_fd_laplacian(&g)?, grid: Some(g) }
        }
        OperatorSpec::UnitSquare { n } => {
            let g = GridDomain::unit_square(*n)?;
            Built { op: build_fd_laplacian(&g)?, grid: Some(g) }
        }
        OperatorSpec::File { stiffness, mass } => {
            let m = mass.as_ref().map(|p| cfg.resolve(p));
            Built { op: ingest_operator(&cfg.resolve(stiffness), m.as_deref())?, grid: None }
        }
    })
}

/// Eigenvalues of the operator, enough to resolve the slopes and to count
/// how many lie below ell_plus.
fn slopes_and_spectrum(op: &SparseOperator, lm: &Slope, lp: &Slope) -> CliResult<(f64, f64, Vec<f64>)> {
    let dim = op.dim();
    let mut m = (lm.max_index().max(lp.max_index()) + 2).clamp(4, dim);
    loop {
        let lam = op.modes(m)?.values;
        let (a, b) = (lm.resolve(&lam)?, lp.resolve(&lam)?);
        if !(a < b) {
            return Err(CliError::Config(format!("ell_minus {a} must be below ell_plus {b}")));
        }
        if lam.last().is_some_and(|&l| l > b) || m == dim {
            return Ok((a, b, lam));
        }
        m = (2 * m).min(dim);
    }
}

fn scan_svg(scan: &VerticalScan, title: &str) -> String {
    let mut plot = SvgPlot::new(title).labels("t", "eigenvalues of DF");
    let m = scan.samples.first().map_or(0, |s| s.eigenvalues.len());
    for i in 0..m {
        plot.polyline(scan.samples.iter().map(|s| (s.t, s.eigenvalues[i])).collect(), "#1f5fbf", false);
    }
    if let (Some(a), Some(b)) = (scan.samples.first(), scan.samples.last()) {
        plot.polyline(vec![(a.t, 0.0), (b.t, 0.0)], "black", true);
    }
    for c in &scan.crossings {
        plot.marker(c.t, 0.0, "#c0392b", None);
    }
    plot.render()
}

pub fn scan(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let s = cfg.scan.as_ref().expect("validated");
    let built = build_operator(cfg, &s.operator)?;
    let (lm, lp, lam) = slopes_and_spectrum(&built.op, &s.ell_minus, &s.ell_plus)?;
    let enclosed = lam.iter().filter(|&&l| lm < l && l < lp).count();
    let m = s.eigenvalues.unwrap_or(enclosed + 1).min(built.op.dim());
    let dim = built.op.dim();
    let problem = EllipticProblem::new(built.op, Nonlinearity::Arctan(calibrate_arctan(lm, lp)?));
    let scan = vertical_scan(&problem, &State::zeros(dim), s.t_range, m, s.samples, cfg.exec)?;
    write_scan_csv(&scan, &rec.file("scan.csv"))?;
    rec.write("scan.svg", &scan_svg(&scan, &format!("{}: eigenvalues along a vertical line", cfg.name)))?;
    rec.write_json("crossings.json", &scan.crossings)?;
    rec.set("dofs", dim);
    rec.set("ell_minus", lm);
    rec.set("ell_plus", lp);
    rec.set("enclosed", enclosed);
    rec.set("branches", m);
    rec.set("crossings", scan.total_crossings());
    rec.set("crossing_counts", scan.crossing_counts.clone());
    rec.set("strictly_decreasing", scan.strictly_decreasing);
    rec.set("flat", scan.flat);
    rec.set("degenerate", scan.degenerate);
    Ok(())
}

pub fn solimini(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let s = cfg.solimini.as_ref().expect("validated");
    let built = build_operator(cfg, &s.operator)?;
    let (lm, lp, _) = slopes_and_spectrum(&built.op, &s.ell_minus, &s.ell_plus)?;
    let dim = built.op.dim();
    let provenance = built.op.provenance;
    let problem = EllipticProblem::new(built.op, Nonlinearity::Arctan(calibrate_arctan(lm, lp)?));
    let mut run = s.run.clone();
    run.diagram.exec = cfg.exec;
    let out = run_solimini_experiment(&problem, &run)?;
    write_solutions_csv(&out.solutions, &rec.file("solutions.csv"))?;
    write_fields_csv(built.grid.as_ref(), &out.solutions, &rec.file("fields.csv"))?;
    write_scan_csv(&out.scan, &rec.file("scan.csv"))?;
    rec.write("scan.svg", &scan_svg(&out.scan, &format!("{}: eigenvalues through the first solution", cfg.name)))?;
    write_diagram_json(&out.diagram, &rec.file("diagram.json"))?;
    if let Some(g) = &built.grid {
        for (k, sol) in out.solutions.items.iter().enumerate() {
            let m = sol.morse_index.map_or("?".to_string(), |m| m.to_string());
            rec.write(&format!("solution_{k}.svg"), &heatmap_svg(g, &sol.u, &format!("solution {k}, Morse index {m}")))?;
        }
        rec.note("finite-difference operator: the solution count is a best-effort result, not a certified count");
    }
    rec.set("dofs", dim);
    rec.set("provenance", serde_json::to_value(provenance).expect("serializable"));
    rec.set("eigenvalues", out.eigenvalues.clone());
    rec.set("ell_minus", lm);
    rec.set("ell_plus", lp);
    rec.set("enclosed", out.enclosed);
    rec.set("homotopy_steps", out.homotopy_steps);
    rec.set("solutions", out.solutions.len());
    rec.set("morse_histogram", out.solutions.morse_histogram());
    rec.set("max_residue", out.solutions.max_residue());
    rec.set("branches", out.diagram.branches.len());
    rec.set("branch_points", out.diagram.branch_points.len());
    rec.set("scan_crossings", out.scan.total_crossings());
    Ok(())
}

pub fn ingest_check(cfg: &ExperimentConfig, rec: &mut Recorder) -> CliResult<()> {
    let s = cfg.ingest.as_ref().expect("validated");
    let mass = s.mass.as_ref().map(|p| cfg.resolve(p));
    let op = ingest_operator(&cfg.resolve(&s.stiffness), mass.as_deref())?;
    let m = s.modes.max(s.expect.len()).min(op.dim());
    let modes = op.modes(m)?;
    let positive = modes.vectors[0].iter().all(|&v| v > 0.0);
    rec.set("dim", op.dim());
    rec.set("nnz", op.stiffness.nnz());
    rec.set("has_mass", op.mass.is_some());
    rec.set("eigenvalues", modes.values.clone());
    rec.set("ground_state_positive", positive);
    let worst = s.expect.iter().zip(&modes.values).map(|(e, l)| (e - l).abs()).fold(0.0, f64::max);
    let matches = s.expect.len() <= modes.values.len() && worst <= s.tolerance;
    if !s.expect.is_empty() {
        rec.set("max_eigenvalue_error", worst);
        rec.set("matches", matches);
    }
    rec.write_json("ingest.json", &json!({"eigenvalues": modes.values, "ground_state_positive": positive, "max_eigenvalue_error": worst}))?;
    if !s.expect.is_empty() && !matches {
        return Err(CliError::Check(format!("eigenvalues {:?} differ from {:?} by {worst:.3e} > {}", modes.values, s.expect, s.tolerance)));
    }
    Ok(())
}
