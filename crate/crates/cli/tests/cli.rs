use cyqlone_cli::{run, sweep, BenchConfig, Source, SolverKind, SweepGrid};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cyqlone"))
}

fn json_rows(out: &[u8]) -> Vec<serde_json::Value> {
    serde_json::from_slice(out).expect("record array")
}

#[test]
fn cold_mass_spring_run_converges() {
    let out = bin().args(["run", "--masses", "2", "--horizon", "8", "--cold", "--format", "json"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = json_rows(&out.stdout);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["status"], "converged");
    assert_eq!(rows[0]["config.masses"], 2);
    assert_eq!(rows[0]["config.warm"], false);
}

#[test]
fn dense_oracle_matches_qp_solver() {
    let base = BenchConfig { masses: 2, horizon: 8, instances: 3, ..Default::default() };
    let qp = run(&base).unwrap();
    let dense = run(&BenchConfig { solver: SolverKind::DenseOracle, ..base }).unwrap();
    for (a, b) in qp.iter().zip(&dense) {
        assert!(a.converged() && b.converged());
        assert!((a.objective - b.objective).abs() <= 1e-6 * b.objective.abs().max(1.0), "{} vs {}", a.objective, b.objective);
    }
}

#[test]
fn repetitions_are_identical() {
    let cfg = BenchConfig { masses: 4, horizon: 16, partitions: 4, repetitions: 3, ..Default::default() };
    let recs = run(&cfg).unwrap();
    assert_eq!(recs.len(), 3);
    for r in &recs[1..] {
        assert_eq!(r.objective.to_bits(), recs[0].objective.to_bits());
        assert_eq!((r.outer, r.inner), (recs[0].outer, recs[0].inner));
    }
}

#[test]
fn phase_times_fit_in_total() {
    for solver in [SolverKind::CyqloneLinear, SolverKind::Cyqpalm] {
        for r in run(&BenchConfig { solver, masses: 4, horizon: 16, partitions: 2, ..Default::default() }).unwrap() {
            assert!(r.t_riccati + r.t_schur + r.t_cr + r.t_tail <= r.t_total);
        }
    }
}

#[test]
fn sweep_row_count_and_flop_columns() {
    let base = BenchConfig { solver: SolverKind::CyqloneLinear, instances: 2, ..Default::default() };
    let grid = SweepGrid { masses: vec![2, 4], horizons: vec![8, 10], partitions: vec![4], vlens: vec![1] };
    let recs = sweep(&base, &grid).unwrap();
    assert_eq!(recs.len(), 2 * 2 * 2);
    for r in &recs {
        let model = cyqlone::flops_critical_path(r.nx, r.nu, r.horizon, r.partitions);
        match model {
            Ok(m) => assert_eq!(r.f_speedup, Some(m.serial / m.total)),
            Err(_) => assert_eq!(r.f_speedup, None),
        }
        assert!(r.converged());
    }
    // N = 10 is not a multiple of P = 4: the model columns stay empty
    assert!(recs.iter().any(|r| r.horizon == 10 && r.f_total.is_none()));
}

#[test]
fn sweep_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let st = bin()
        .args(["sweep", "--masses", "2,4", "--horizon", "8", "--partitions", "1,2", "--solver", "cyqlone-linear", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(st.success());
    let mut rd = csv::Reader::from_path(&path).unwrap();
    assert!(rd.headers().unwrap().iter().any(|h| h == "time.per_iteration"));
    assert_eq!(rd.records().count(), 4);
}

#[test]
fn single_grid_is_one_record() {
    let recs = sweep(&BenchConfig::default(), &SweepGrid { masses: vec![2], horizons: vec![8], partitions: vec![1], vlens: vec![1] }).unwrap();
    assert_eq!(recs.len(), 1);
}

#[test]
fn warm_runs_converge() {
    let recs = run(&BenchConfig { warm: true, masses: 4, horizon: 16, instances: 3, ..Default::default() }).unwrap();
    assert!(recs.iter().all(|r| r.converged() && r.warm));
}

#[test]
fn check_exit_codes() {
    let ok = bin().args(["check", "--masses", "2", "--horizon", "8", "--tol", "1e-6"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let tight = bin().args(["check", "--masses", "2", "--horizon", "8", "--tol", "1e-16"]).output().unwrap();
    assert_eq!(tight.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("p.json");
    let gen = bin().args(["generate", "--masses", "2", "--horizon", "8", "--out"]).arg(&good).status().unwrap();
    assert!(gen.success());
    let from_file = bin().args(["check", "--tol", "1e-6", "--problem"]).arg(&good).output().unwrap();
    assert_eq!(from_file.status.code(), Some(0));

    let text = std::fs::read_to_string(&good).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, &text[..text.len() / 2]).unwrap();
    let corrupted = bin().args(["check", "--problem"]).arg(&bad).output().unwrap();
    assert_eq!(corrupted.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&corrupted.stderr).contains("cannot read problem"));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [&["run", "--partitions", "3"][..], &["run", "--vlen", "3"], &["run", "--bogus"], &["run", "--masses", "2,4"]] {
        let out = bin().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn json_problem_round_trips_through_generate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    assert!(bin().args(["generate", "--masses", "4", "--horizon", "8", "--out"]).arg(&path).status().unwrap().success());
    let from_file = run(&BenchConfig { source: Source::Json(path.display().to_string()), ..Default::default() }).unwrap();
    let direct = run(&BenchConfig { masses: 4, horizon: 8, ..Default::default() }).unwrap();
    assert_eq!(from_file[0].objective, direct[0].objective);
}

#[test]
fn random_source_runs() {
    let recs = run(&BenchConfig { source: Source::Random, masses: 2, horizon: 8, instances: 2, ..Default::default() }).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r.converged() && r.nx == 4 && r.nu == 2));
}
