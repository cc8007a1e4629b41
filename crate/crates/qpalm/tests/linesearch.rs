use qpalm::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random `η, β, α, δ` with `ψ'(0) < 0`; some entries get an infinite `α` to
/// mimic one-sided bounds.
fn random_terms(rng: &mut ChaCha8Rng, m: usize) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let eta = rng.gen_range(0.1..2.0);
    let slope = -rng.gen_range(0.1..2.0);
    let alpha: Vec<f64> = (0..m)
        .map(|_| if rng.gen_bool(0.05) { f64::INFINITY } else { rng.gen_range(-1.0..1.0) })
        .collect();
    let delta: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let beta = slope - psi_prime_naive(eta, 0.0, &alpha, &delta, 0.0);
    (eta, beta, alpha, delta)
}

fn minimize(data: &LineSearchData, workers: usize) -> f64 {
    data.solve(workers).unwrap().tau
}

#[test]
fn no_breakpoints_is_linear() {
    let d = LineSearchData { eta: 2.0, beta: -3.0, records: vec![] };
    for t in [0.0, 0.5, 1.0, 4.0] {
        assert_eq!(d.psi_prime_at(t), 2.0 * t - 3.0);
    }
}

#[test]
fn unconstrained_quadratic_takes_the_full_step() {
    let d = LineSearchData { eta: 2.0, beta: -2.0, records: vec![] };
    let r = d.solve(1).unwrap();
    assert!((r.tau - 1.0).abs() < 1e-15);
}

#[test]
fn single_breakpoint_example() {
    let d = LineSearchData { eta: 1.0, beta: -1.0, records: vec![Breakpoint { t: 0.5, w: 1.0 }] };
    assert!(d.psi_prime_at(0.75).abs() < 1e-15);
    let tau = d.solve(1).unwrap().tau;
    assert!((tau - 0.75).abs() < 1e-12);
    // fine grid scan of ψ'
    let grid_root = (0..=100_000)
        .map(|i| i as f64 * 2e-5)
        .min_by(|a, b| d.psi_prime_at(*a).abs().total_cmp(&d.psi_prime_at(*b).abs()))
        .unwrap();
    assert!((grid_root - tau).abs() <= 2e-5);
}

#[test]
fn rebased_derivative_matches_naive_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (eta, beta, alpha, delta) = random_terms(&mut rng, 200);
        let d = LineSearchData::from_alpha_delta(eta, beta, &alpha, &delta);
        assert!(d.records.iter().all(|r| r.t.is_finite() && r.t > 0.0));
        let mut inc = IncrementalPsi::new(&d);
        for _ in 0..100 {
            let t = rng.gen_range(0.0..5.0);
            let naive = psi_prime_naive(eta, beta, &alpha, &delta, t);
            let scale = d.scale(t);
            assert!((d.psi_prime_at(t) - naive).abs() <= 1e-12 * scale, "t = {t}");
            assert!((inc.at(t) - naive).abs() <= 1e-12 * scale, "incremental, t = {t}");
        }
    }
}

#[test]
fn incremental_moves_touch_only_nearby_breakpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (eta, beta, alpha, delta) = random_terms(&mut rng, 2000);
    let d = LineSearchData::from_alpha_delta(eta, beta, &alpha, &delta);
    let mut inc = IncrementalPsi::new(&d);
    inc.at(1.0);
    let before = inc.touched;
    let v = inc.at(1.001);
    let moved = inc.touched - before;
    let between = d.records.iter().filter(|r| r.t >= 1.0 && r.t < 1.001).count();
    assert_eq!(moved, between);
    assert!((v - d.psi_prime_at(1.001)).abs() <= 1e-12 * d.scale(1.001));
}

#[test]
fn derivative_is_nondecreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (eta, beta, alpha, delta) = random_terms(&mut rng, 500);
    let d = LineSearchData::from_alpha_delta(eta, beta, &alpha, &delta);
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=10_000 {
        let v = d.psi_prime_at(i as f64 * 1e-3);
        assert!(v >= prev - 1e-12 * d.scale(i as f64 * 1e-3));
        prev = v;
    }
}

#[test]
fn partition_matches_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut recs: Vec<Breakpoint> = (0..1000)
        .map(|_| Breakpoint { t: (rng.gen_range(0.0..10.0_f64) * 4.0).round() / 4.0, w: rng.gen_range(-1.0..1.0) })
        .collect();
    let pivot = recs[17].t;
    let mut sorted: Vec<f64> = recs.iter().map(|r| r.t).collect();
    sorted.sort_by(f64::total_cmp);
    let s = partition_breakpoints(&mut recs, pivot);
    assert_eq!(s.n_less, sorted.iter().filter(|&&t| t < pivot).count());
    assert_eq!(s.n_equal, sorted.iter().filter(|&&t| t == pivot).count());
    assert!(recs[..s.n_less].iter().all(|r| r.t < pivot));
    assert!(recs[s.n_less..s.n_less + s.n_equal].iter().all(|r| r.t == pivot));
    assert!(recs[s.n_less + s.n_equal..].iter().all(|r| r.t > pivot));
    let less_w: f64 = recs[..s.n_less].iter().map(|r| r.w).sum();
    assert!((s.less_w - less_w).abs() < 1e-12);
    // partitioning again is stable
    let again = partition_breakpoints(&mut recs, pivot);
    assert_eq!((again.n_less, again.n_equal), (s.n_less, s.n_equal));
    let empty = partition_breakpoints(&mut [], 1.0);
    assert_eq!(empty, PartitionSums::default());
}

#[test]
fn root_is_exact_for_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in [0, 1, 10, 63, 64, 511, 512, 3000, 10_000] {
        let (eta, beta, alpha, delta) = random_terms(&mut rng, m);
        let d = LineSearchData::from_alpha_delta(eta, beta, &alpha, &delta);
        for workers in [1, 4] {
            let tau = minimize(&d, workers);
            assert!(tau > 0.0);
            let naive = psi_prime_naive(eta, beta, &alpha, &delta, tau);
            // the root sits at a kink or where the derivative vanishes
            let lo = psi_prime_naive(eta, beta, &alpha, &delta, tau * (1.0 - 1e-12));
            let hi = psi_prime_naive(eta, beta, &alpha, &delta, tau * (1.0 + 1e-12));
            let tol = 1e-12 * eta.abs().max(1.0) * d.scale(tau);
            assert!(naive.abs() <= tol || (lo <= tol && hi >= -tol), "m = {m}, workers = {workers}: ψ'(τ) = {naive}");
        }
        assert_eq!(minimize(&d, 1), minimize(&d, 4));
    }
}

#[test]
fn root_matches_grid_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..3 {
        let (eta, beta, alpha, delta) = random_terms(&mut rng, 100);
        let d = LineSearchData::from_alpha_delta(eta, beta, &alpha, &delta);
        let tau = minimize(&d, 1);
        let tmax = 2.0 * d.records.iter().map(|r| r.t).fold(tau, f64::max);
        let n = 1_000_000;
        let h = tmax / n as f64;
        let best = (0..=n)
            .map(|i| i as f64 * h)
            .min_by(|a, b| psi_naive(eta, beta, &alpha, &delta, *a).total_cmp(&psi_naive(eta, beta, &alpha, &delta, *b)))
            .unwrap();
        assert!((best - tau).abs() <= h, "grid {best} vs {tau}");
        let at = psi_naive(eta, beta, &alpha, &delta, tau);
        for i in (0..=n).step_by(10) {
            assert!(at <= psi_naive(eta, beta, &alpha, &delta, i as f64 * h) + 1e-12);
        }
    }
}

#[test]
fn rejects_ascent_and_flat_curvature() {
    let up = LineSearchData { eta: 1.0, beta: 0.5, records: vec![] };
    assert!(matches!(up.solve(1), Err(QpalmError::NotDescent { .. })));
    let flat = LineSearchData { eta: 0.0, beta: -1.0, records: vec![] };
    assert!(matches!(flat.solve(1), Err(QpalmError::NotConvex { .. })));
}

#[test]
fn first_pivot_below_one_finds_full_steps_quickly() {
    // every breakpoint lies beyond the full step, so the first partition
    // settles the bracket
    let recs: Vec<Breakpoint> = (0..4096).map(|i| Breakpoint { t: 0.5 + i as f64 * 1e-3, w: 1e-6 }).collect();
    let d = LineSearchData { eta: 1.0, beta: -0.25, records: recs };
    let r = d.solve(2).unwrap();
    assert!((r.tau - 0.25).abs() < 1e-15);
}
