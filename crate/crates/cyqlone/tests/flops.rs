use cyqlone::{factor, flops_critical_path, CyqloneOptions};
use ocp_model::{random_eq_ocp, RandomDims};

#[test]
fn hand_evaluated_terms() {
    let m = flops_critical_path(2, 1, 4, 1).unwrap();
    // nux = 3, N/P = 4
    assert!((m.riccati - 123.0).abs() < 1e-12);
    assert!((m.schur - 56.0 / 3.0).abs() < 1e-12);
    assert!((m.cr - 4.0 / 3.0).abs() < 1e-12);
    assert!((m.serial - 238.0 / 3.0).abs() < 1e-12);
    assert!((m.total - (123.0 + 56.0 / 3.0 + 4.0 / 3.0)).abs() < 1e-12);
    assert!((m.speedup - m.serial / m.total).abs() < 1e-15);

    // nx = 4, nu = 2, N = 8, P = 4: N/P = 2
    let m = flops_critical_path(4, 2, 8, 4).unwrap();
    let ric = 2.0 * (216.0 / 6.0 + 4.0 * 4.0 / 2.0 + 16.0 * 2.0) + (1.5 * 6.0 * 16.0 + 0.5 * 36.0 * 4.0) + 32.0;
    assert!((m.riccati - ric).abs() < 1e-12);
    assert!((m.schur - (4.0 / 3.0 * 64.0 + 2.0 * 0.5 * 2.0 * 16.0)).abs() < 1e-12);
    assert!((m.cr - (64.0 / 6.0 + 2.0 * 5.0 / 3.0 * 64.0)).abs() < 1e-12);
}

#[test]
fn one_stage_per_column_drops_the_coupled_terms() {
    let m = flops_critical_path(3, 2, 8, 8).unwrap();
    let (x, u) = (3.0_f64, 2.0_f64);
    let ux = x + u;
    assert!((m.riccati - (ux.powi(3) / 6.0 + x * u * u / 2.0 + x * x * u + x.powi(3) / 2.0)).abs() < 1e-12);
}

#[test]
fn invalid_partitions_are_rejected() {
    assert!(flops_critical_path(2, 1, 6, 4).is_err());
    assert!(flops_critical_path(2, 1, 6, 3).is_err());
    assert!(flops_critical_path(2, 1, 6, 0).is_err());
}

#[test]
fn instrumented_count_near_model() {
    for (nx, nu, n, p) in [(16, 8, 64, 4), (16, 8, 64, 1), (16, 8, 64, 8), (32, 16, 64, 4)] {
        let prob = random_eq_ocp(RandomDims { nx, nu, n }, 1, 10.0);
        let f = factor(&prob, CyqloneOptions::with_partitions(p)).unwrap();
        let model = flops_critical_path(nx, nu, n, p).unwrap();
        let ratio = f.critical_path_flops() as f64 / model.total;
        assert!((0.95..1.05).contains(&ratio), "nx={nx} nu={nu} N={n} P={p}: ratio {ratio}");
    }
}
