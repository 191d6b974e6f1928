use std::path::{Path, PathBuf};
use std::process::Command;

use foldtrace::elliptic::ingest_operator;
use foldtrace_cli::fixtures::matched_annulus_operator;
use foldtrace_cli::{execute, RunArgs, RunManifest};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_foldtrace"))
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "name = \"bad\"\nbogus = 1\n").unwrap();
    let out = bin().args(["census", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[Config]"));
}

#[test]
fn missing_section_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["scan", "--config"]).arg(configs().join("table1.toml")).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn straddle_violation_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("straddle.toml");
    // ell_minus above lambda_1 leaves no Lazer-McKenna seed.
    std::fs::write(
        &cfg,
        "name = \"straddle\"\n[bifurcate]\nproblem = { kind = \"pl_sturm\", n = 5, ell_minus = 2.0, ell_plus = 8.0 }\n\
         [[bifurcate.lines]]\nbase = { lazer_mckenna = \"positive\" }\ndirection = { modes = [1.0] }\ns_range = [-1.0, 1.0]\n",
    )
    .unwrap();
    let out = bin().args(["bifurcate", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[EigenvalueStraddle]"));
}

#[test]
fn singular_problem_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("singular.toml");
    std::fs::write(
        &cfg,
        "name = \"singular\"\n[bifurcate]\nproblem = { kind = \"linear\", matrix = [[1.0, 1.0], [1.0, 1.0]], solution = [1.0, 0.0] }\n\
         [[bifurcate.lines]]\nbase = { point = [3.0, 0.5] }\npolish = true\ndirection = { vector = [1.0, 0.3] }\ns_range = [-5.0, 5.0]\n",
    )
    .unwrap();
    let out = bin().args(["bifurcate", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[NoInitialSolution]"));
}

#[test]
fn binary_runs_a_bundled_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["bifurcate", "--config"]).arg(configs().join("bifurcate_linear.toml")).arg("--out").arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("solutions = 1"));
}

#[test]
fn manifest_lists_every_emitted_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = execute("bifurcate", &RunArgs::new(configs().join("bifurcate_sturm_k4.toml"), dir.path())).unwrap();
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    on_disk.sort();
    let mut listed = m.files.clone();
    listed.sort();
    assert_eq!(on_disk, listed);
    let read = RunManifest::read(dir.path()).unwrap();
    assert_eq!(read.config_hash, m.config_hash);
    assert_eq!(read.counter("solutions"), m.counter("solutions"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for threads in [1, 2] {
        let out = dir.path().join(format!("t{threads}"));
        let mut args = RunArgs::new(configs().join("bifurcate_sturm_k4.toml"), &out);
        args.threads = Some(threads);
        let m = execute("bifurcate", &args).unwrap();
        assert_eq!(m.threads, Some(threads));
        runs.push((m, out));
    }
    let (a, da) = &runs[0];
    let (b, db) = &runs[1];
    assert_eq!(a.counters, b.counters);
    assert_eq!(a.config_hash, b.config_hash);
    for f in ["solutions.csv", "diagram_0.json"] {
        let x = std::fs::read(da.join(f)).unwrap();
        let y = std::fs::read(db.join(f)).unwrap();
        assert!(x == y, "{f} differs between thread counts");
    }
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = RunArgs::new(configs().join("bifurcate_linear.toml"), dir.path());
    args.seed = Some(99);
    let m = execute("bifurcate", &args).unwrap();
    assert_eq!(m.seed, 99);
}

#[test]
fn bundled_operator_matches_its_generator() {
    let targets = [9.0988, 16.3218, 22.9346, 30.4949];
    let fresh = matched_annulus_operator(10, &targets, 32.0).unwrap().to_dense();
    let bundled = ingest_operator(&configs().join("data/annulus_matched.mtx"), None).unwrap().stiffness.to_dense();
    assert_eq!(fresh.shape(), bundled.shape());
    assert!((&fresh - &bundled).amax() <= 1e-12 * fresh.amax());
}

#[test]
fn every_bundled_config_parses_and_validates() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let cfg = foldtrace_cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let command = if cfg.census.is_some() {
            "census"
        } else if cfg.bifurcate.is_some() {
            "bifurcate"
        } else if cfg.planar.is_some() {
            "planar"
        } else if cfg.scan.is_some() {
            "scan"
        } else if cfg.solimini.is_some() {
            "solimini"
        } else {
            "ingest-check"
        };
        cfg.validate(command).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
