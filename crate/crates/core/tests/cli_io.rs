use std::path::Path;
use std::process::Command;

use rfclust::basis::BasisSpec;
use rfclust::cli;
use rfclust::io::{load_dataset, read_coefficients_csv, RunResult};
use rfclust::RfcError;

fn run(args: &[&str]) -> Vec<std::path::PathBuf> {
    let mut argv = vec!["rfc"];
    argv.extend(args);
    cli::run(argv).unwrap()
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

fn write_nox_like(path: &Path) {
    let mut text = String::from("t");
    for h in 0..24 {
        text.push_str(&format!(",{h}"));
    }
    text.push_str(",label\n");
    for day in 0..115 {
        let working = day % 3 != 0;
        text.push_str(&format!("2005-{:02}-{:02}", 2 + day / 28, 1 + day % 28));
        for h in 0..24 {
            let wiggle = ((day * 7 + h * 13) % 17) as f64 - 8.0;
            let peak = if working { 90.0 * (-((h as f64 - 8.0) / 2.5f64).powi(2)).exp() } else { 15.0 };
            text.push_str(&format!(",{}", 70.0 + peak + wiggle));
        }
        text.push_str(if working { ",working\n" } else { ",nonworking\n" });
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn simulate_round_trips_through_grid_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let files = run(&["simulate", "--scenario", "scenario2", "--contamination", "cont-ii", "--seed", "7", "--out", out]);
    assert_eq!(files.len(), 3);
    let basis = BasisSpec::fourier(21, 0.0, 1.0).unwrap();
    let ds = load_dataset(&dir.path().join("curves.csv"), &basis).unwrap();
    assert_eq!(ds.curves.len(), 222);
    assert_eq!(ds.labels.as_ref().unwrap().iter().filter(|l| l.is_none()).count(), 22);

    let (ids, coef) = read_coefficients_csv(std::fs::File::open(dir.path().join("coefficients.csv")).unwrap()).unwrap();
    assert_eq!(ids, ds.ids);
    let scale = coef.amax().max(1.0);
    let err = (ds.curves.gamma() - &coef).amax();
    assert!(err <= 1e-12 * scale, "round trip error {err}");
}

#[test]
fn every_output_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut files = run(&["simulate", "--seed", "3", "--out", out]);
    files.extend(run(&["fit", "--dims", "2,3", "--nstart", "4", "--seed", "3", "--out", out]));
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        if f.extension().is_some_and(|e| e == "json") {
            let r = RunResult::from_json(&text).unwrap();
            assert_eq!(r.seed, 3);
            assert_eq!(r.config_hash.len(), 64);
            assert_eq!(RunResult::from_json(&r.to_json().unwrap()).unwrap(), r);
        } else {
            assert!(text.starts_with("# config_hash="), "{}", f.display());
            assert!(text.lines().next().unwrap().ends_with("seed=3"));
        }
    }
}

#[test]
fn ragged_input_names_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "t,0,0.5,1\na,1,2,3\nb,1,2\n").unwrap();
    let basis = BasisSpec::fourier(3, 0.0, 1.0).unwrap();
    match load_dataset(&path, &basis) {
        Err(RfcError::Parse { row, msg }) => {
            assert_eq!(row, 3);
            assert!(msg.contains("fields"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn select_single_candidate_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run(&["select", "--dims", "2,3", "--nstart", "4", "--contamination", "cont-i", "--out", out]);
    let lines = data_lines(&dir.path().join("bic_table.csv"));
    assert_eq!(lines[0], "q_1,q_2,loglik,kappa,bic,ccr");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2,3,"));
    assert!(lines[1].contains(",148,"));
}

#[test]
fn bench_emits_sixty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run(&[
        "bench", "--scenario", "scenario2", "--contamination", "cont-ii", "--dims", "2,3", "--nstart", "2",
        "--iter-max", "5", "--replicates", "10", "--out", out,
    ]);
    let lines = data_lines(&dir.path().join("ccr_bench.csv"));
    assert_eq!(lines.len(), 61);
    assert_eq!(lines[0], "scenario,contamination,replicate,alpha,d1,d2,q_1,q_2,ccr");
    for l in &lines[1..] {
        let ccr: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.5..=1.0).contains(&ccr));
    }
}

#[test]
fn nox_shaped_input_trims_twelve_days() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("nox.csv");
    write_nox_like(&input);
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let input_s = input.to_str().unwrap();
    run(&["nox", "--input", input_s, "--dims", "2,2", "--nstart", "5", "--alphas", "0.1", "--levels", "1", "--out", out_s]);
    let table = data_lines(&out.join("nox_summary.csv"));
    assert_eq!(table.len(), 2);
    let outliers = data_lines(&out.join("nox_outliers.csv"));
    assert_eq!(outliers.len(), 13);

    // plain fit on the same file with an explicit B-spline basis
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"basis": {"kind": "bspline", "p": 15, "order": 3, "domain": [0, 23]}}"#).unwrap();
    let cfg_s = cfg.to_str().unwrap();
    run(&["fit", "--config", cfg_s, "--input", input_s, "--dims", "2,2", "--nstart", "5", "--alpha", "0.1", "--out", out_s]);
    let r = RunResult::from_json(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(r.trimmed_ids.len(), 12);
    assert_eq!(r.labels.len(), 115);
    assert!(r.ccr.is_some());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_rfc");
    let ok = Command::new(bin).args(["simulate", "--out"]).arg(dir.path()).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("curves.csv"));
    let bad = Command::new(bin).args(["fit", "--dims", "2,3", "--alpha", "0.7", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("alpha"));
    let unknown = Command::new(bin).arg("frobnicate").output().unwrap();
    assert!(!unknown.status.success());
}
