use cyqlone::CyqloneOptions;
use ocp_model::*;
use qpalm::*;

fn mass_spring(m: usize, n: usize, idx: u64) -> OCPProblem {
    let cfg = MassSpringConfig::new(m, n, 7);
    mass_spring_with_state(&cfg, sample_x_init(&cfg, idx)).unwrap()
}

fn unbounded(mut p: OCPProblem) -> OCPProblem {
    for s in &mut p.stages {
        s.bl.fill(f64::NEG_INFINITY);
        s.bu.fill(f64::INFINITY);
    }
    p.terminal.bl.fill(f64::NEG_INFINITY);
    p.terminal.bu.fill(f64::INFINITY);
    p
}

/// Box constrained double integrator driven from rest at `x = 2` to the origin.
fn double_integrator(n: usize) -> OCPProblem {
    let h = 0.5;
    let stage = QpStage {
        a: Matrix::from_row_slice(2, 2, &[1.0, h, 0.0, 1.0]),
        b: Matrix::from_column_slice(2, 1, &[0.5 * h * h, h]),
        f: Vector::zeros(2),
        r: Matrix::from_element(1, 1, 0.1),
        s: Matrix::zeros(1, 2),
        q: Matrix::identity(2, 2),
        r_lin: Vector::zeros(1),
        q_lin: Vector::zeros(2),
        c: Matrix::from_row_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
        d: Matrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]),
        bl: Vector::from_vec(vec![-1.0, f64::NEG_INFINITY, -0.6]),
        bu: Vector::from_vec(vec![1.0, f64::INFINITY, 0.6]),
    };
    OCPProblem {
        nx: 2,
        nu: 1,
        stages: vec![stage; n],
        terminal: Terminal {
            q: Matrix::identity(2, 2) * 10.0,
            q_lin: Vector::zeros(2),
            c: Matrix::identity(2, 2),
            bl: Vector::from_vec(vec![-0.5, -0.5]),
            bu: Vector::from_vec(vec![0.5, 0.5]),
        },
        x_init: Vector::from_vec(vec![2.0, 0.0]),
        e: None,
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn solve(p: &OCPProblem, s: &QPALMSettings) -> QpalmReport {
    alm_outer_loop(p, s, None).unwrap()
}

#[test]
fn unconstrained_inner_problem_takes_one_newton_step() {
    let p = unbounded(random_ocp(RandomDims { nx: 3, nu: 2, n: 8 }, 1, 10.0));
    let settings = QPALMSettings::default();
    let mut state = ALMState::cold(&p, &settings);
    let mut newton = NewtonSolver::new();
    let mut stats = SolveStats::default();
    let r = inner_newton_loop(&mut state, &p, &settings, 1e-9, &mut newton, &mut stats).unwrap();
    assert_eq!(r.iterations, 1);
    assert!(r.stationarity <= 1e-9);
    // a second call starts at the optimum
    let again = inner_newton_loop(&mut state, &p, &settings, 1e-9, &mut newton, &mut stats).unwrap();
    assert_eq!(again.iterations, 0);
}

#[test]
fn mass_spring_inner_problem_converges_fast() {
    let p = mass_spring(2, 8, 1);
    let mut finals = Vec::new();
    for linear in [LinearSolver::Cyqlone, LinearSolver::Dense] {
        let settings = QPALMSettings { linear, ..Default::default() };
        let mut state = ALMState::cold(&p, &settings);
        let mut stats = SolveStats::default();
        let r = inner_newton_loop(&mut state, &p, &settings, 1e-10, &mut NewtonSolver::new(), &mut stats).unwrap();
        assert!(r.stationarity <= 1e-10 && r.iterations <= 20, "{r:?}");
        finals.push(state.u);
    }
    for (a, b) in finals[0].iter().zip(&finals[1]) {
        assert!((a - b).amax() <= 1e-8);
    }
}

#[test]
fn inactive_bounds_need_one_outer_iteration() {
    let p = unbounded(mass_spring(2, 8, 0));
    let settings = QPALMSettings { eps_primal: 1e-6, eps_dual: 1e-6, ..Default::default() };
    let rep = solve(&p, &settings);
    assert_eq!(rep.solution.status, SolveStatus::Converged);
    assert_eq!(rep.stats.outer_iterations, 1);
    let eq = p.eq_part().unwrap();
    let exact = riccati_oracle(&eq, &eq.rhs()).unwrap();
    for (a, b) in rep.solution.u.iter().zip(&exact.u) {
        assert!((a - b).amax() <= 1e-6);
    }
}

#[test]
fn double_integrator_matches_the_dense_oracle() {
    let p = double_integrator(8);
    let rep = solve(&p, &QPALMSettings::default());
    let oracle = dense_qp_oracle(&p).unwrap();
    assert_eq!(rep.solution.status, SolveStatus::Converged);
    assert!(rep.solution.residual.max() <= 1e-6, "{:?}", rep.solution.residual);
    assert!(oracle.solution.residual.max() <= 1e-8, "{:?}", oracle.solution.residual);
    let obj = p.objective(&rep.solution.u, &rep.solution.x);
    assert!(relative(obj, oracle.objective) <= 1e-6);
    // the bounds matter for this instance
    let free = solve(&unbounded(p.clone()), &QPALMSettings::default());
    assert!(p.objective(&free.solution.u, &free.solution.x) < obj - 1e-3);
}

#[test]
fn converged_runs_meet_the_tolerances() {
    let settings = QPALMSettings::default();
    for idx in 0..3 {
        let p = random_ocp(RandomDims { nx: 4, nu: 2, n: 8 }, idx, 10.0);
        let rep = solve(&p, &settings);
        assert_eq!(rep.solution.status, SolveStatus::Converged);
        let r = rep.solution.residual;
        assert!(r.primal <= settings.eps_primal && r.dual <= settings.eps_dual && r.complementarity <= settings.eps_dual, "{r:?}");
        let oracle = dense_qp_oracle(&p).unwrap();
        assert!(relative(p.objective(&rep.solution.u, &rep.solution.x), oracle.objective) <= 1e-6);
    }
}

#[test]
fn mass_spring_warm_starts_are_no_slower() {
    let cfg = MassSpringConfig::new(2, 16, 7);
    let settings = QPALMSettings::default();
    for idx in 0..10 {
        let p = mass_spring_with_state(&cfg, sample_x_init(&cfg, idx)).unwrap();
        let first = solve(&p, &settings);
        assert_eq!(first.solution.status, SolveStatus::Converged, "instance {idx}");
        let s0 = &p.stages[0];
        let next = &s0.a * &p.x_init + &s0.b * &first.solution.u[0] + &s0.f;
        let p2 = mass_spring_with_state(&cfg, next).unwrap();
        let cold = solve(&p2, &settings);
        let warm = alm_outer_loop(&p2, &settings, Some(&shift_solution(&first.solution))).unwrap();
        assert_eq!(warm.solution.status, SolveStatus::Converged);
        assert!(warm.solution.inner_iterations <= cold.solution.inner_iterations, "instance {idx}: warm {} cold {}", warm.solution.inner_iterations, cold.solution.inner_iterations);
    }
}

#[test]
fn updates_and_refactorizations_agree() {
    let cyq = CyqloneOptions { partitions: 4, ..Default::default() };
    let mut updates = 0;
    for (m, n, idx) in [(2, 16, 3), (4, 16, 1), (4, 8, 5), (6, 16, 2)] {
        let p = mass_spring(m, n, idx);
        let on = solve(&p, &QPALMSettings { cyqlone: cyq, ..Default::default() });
        let off = solve(&p, &QPALMSettings { use_updates: false, cyqlone: cyq, ..Default::default() });
        updates += on.stats.updates;
        assert_eq!(off.stats.updates, 0);
        assert_eq!(on.solution.status, SolveStatus::Converged);
        assert_eq!(off.solution.status, SolveStatus::Converged);
        for (a, b) in on.solution.u.iter().zip(&off.solution.u) {
            assert!((a - b).amax() <= 1e-8);
        }
    }
    assert!(updates > 0);
}

#[test]
fn same_iterates_from_first_inner_problems() {
    let p = mass_spring(4, 16, 2);
    let cyq = CyqloneOptions { partitions: 4, ..Default::default() };
    let run = |use_updates: bool| {
        let settings = QPALMSettings { use_updates, cyqlone: cyq, ..Default::default() };
        let mut state = ALMState::cold(&p, &settings);
        let mut newton = NewtonSolver::new();
        let mut stats = SolveStats::default();
        let mut tol = 1e-2;
        let mut trace = Vec::new();
        for _ in 0..3 {
            inner_newton_loop(&mut state, &p, &settings, tol, &mut newton, &mut stats).unwrap();
            trace.push(state.u.clone());
            tol *= 0.1;
        }
        trace
    };
    for (a, b) in run(true).iter().zip(&run(false)) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).amax() <= 1e-6);
        }
    }
}

#[test]
fn e_matrices_are_eliminated() {
    let base = random_ocp(RandomDims { nx: 3, nu: 2, n: 6 }, 11, 10.0);
    let mut p = base.clone();
    let e: Vec<Matrix> = (0..=6).map(|j| Matrix::identity(3, 3) * 2.0 + Matrix::from_fn(3, 3, |r, c| 0.1 * ((r + 2 * c + j) % 3) as f64)).collect();
    // `E_{j+1} x⁺ = E_{j+1}(A x + B u + f)` has the same solution
    for (j, s) in p.stages.iter_mut().enumerate() {
        s.a = &e[j + 1] * &s.a;
        s.b = &e[j + 1] * &s.b;
        s.f = &e[j + 1] * &s.f;
    }
    p.x_init = &e[0] * &base.x_init;
    p.e = Some(e);
    let a = solve(&base, &QPALMSettings::default());
    let b = solve(&p, &QPALMSettings::default());
    assert_eq!(b.solution.status, SolveStatus::Converged);
    assert!(b.solution.residual.max() <= 1e-7, "{:?}", b.solution.residual);
    for (x, y) in a.solution.x.iter().zip(&b.solution.x) {
        assert!((x - y).amax() <= 1e-7);
    }
}

#[test]
fn fixed_worker_count_is_deterministic() {
    let p = mass_spring(4, 16, 5);
    let settings = QPALMSettings { cyqlone: CyqloneOptions { partitions: 4, workers: 3, ..Default::default() }, ..Default::default() };
    let a = solve(&p, &settings);
    let b = solve(&p, &settings);
    assert_eq!(a.solution.u, b.solution.u);
    assert_eq!(a.solution.y, b.solution.y);
    assert_eq!(a.stats.inner_iterations, b.stats.inner_iterations);
}

#[test]
fn shifted_solution_keeps_shapes() {
    let p = mass_spring(2, 8, 0);
    let rep = solve(&p, &QPALMSettings::default());
    let s = shift_solution(&rep.solution);
    assert_eq!(s.u.len(), 8);
    assert_eq!(s.x.len(), 9);
    assert_eq!(s.y.len(), 9);
    assert_eq!(s.u[0], rep.solution.u[1]);
    assert_eq!(s.u[7], rep.solution.u[7]);
    assert_eq!(s.y[8], rep.solution.y[8]);
}

#[test]
fn rejects_bad_input() {
    let p = mass_spring(2, 8, 0);
    let bad = QPALMSettings { sigma_growth: 1.0, ..Default::default() };
    assert!(matches!(alm_outer_loop(&p, &bad, None), Err(QpalmError::Settings(_))));
    let other = solve(&mass_spring(2, 16, 0), &QPALMSettings::default());
    assert!(matches!(alm_outer_loop(&p, &QPALMSettings::default(), Some(&other.solution)), Err(QpalmError::WarmStart)));
}

#[test]
fn iteration_limit_is_reported() {
    let p = mass_spring(4, 16, 1);
    let rep = solve(&p, &QPALMSettings { max_outer: 2, ..Default::default() });
    assert_eq!(rep.solution.status, SolveStatus::MaxIterations);
    assert_eq!(rep.stats.outer_iterations, 2);
}
