use batla::Mat;
use blocktri::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M = Mat<f64>;

fn rand_mat(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> M {
    Mat::from_fn(n, n, |_, _| scale * rng.gen_range(-1.0..1.0))
}

fn rand_spd_system(rng: &mut ChaCha8Rng, nb: usize, n: usize, circular: bool, coupling: f64) -> BlockTridiag<f64> {
    let diag = (0..nb)
        .map(|_| {
            let a = rand_mat(rng, n, 1.0);
            let mut d = a.matmul(&a.transpose());
            for i in 0..n {
                d[(i, i)] += 3.0 * n as f64 * coupling.max(0.1);
            }
            d
        })
        .collect();
    let ns = if circular { nb } else { nb - 1 };
    let sub = (0..ns).map(|_| rand_mat(rng, n, coupling)).collect();
    BlockTridiag::new(diag, sub, circular).unwrap()
}

fn rand_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Gaussian elimination with partial pivoting on the assembled matrix.
fn dense_solve(a: &M, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut a = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[(i, k)].abs().total_cmp(&a[(j, k)].abs())).unwrap();
        for c in 0..n {
            let t = a[(k, c)];
            a[(k, c)] = a[(p, c)];
            a[(p, c)] = t;
        }
        x.swap(k, p);
        for i in k + 1..n {
            let f = a[(i, k)] / a[(k, k)];
            for c in k..n {
                a[(i, c)] -= f * a[(k, c)];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for c in k + 1..n {
            s -= a[(k, c)] * x[c];
        }
        x[k] = s / a[(k, k)];
    }
    x
}

fn dense_chol(a: &M) -> M {
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        l[(j, j)] = d.sqrt();
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / l[(j, j)];
        }
    }
    l
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn residual(m: &BlockTridiag<f64>, x: &[f64], b: &[f64]) -> f64 {
    let mx = m.matvec(x);
    let r: f64 = mx.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    r / b.iter().map(|q| q * q).sum::<f64>().sqrt()
}

fn scalar(v: &[f64]) -> Vec<M> {
    v.iter().map(|&x| Mat::from_row_major(1, 1, &[x])).collect()
}

#[test]
fn serial_examples() {
    let m = BlockTridiag::new(scalar(&[4.0]), vec![], false).unwrap();
    assert_eq!(chol_factor_serial(&m).unwrap().diag[0][(0, 0)], 2.0);
    let m = BlockTridiag::new(scalar(&[2.0, 2.0]), scalar(&[1.0]), false).unwrap();
    let f = chol_factor_serial(&m).unwrap();
    assert!((f.diag[0][(0, 0)] - 2f64.sqrt()).abs() < 1e-15);
    assert!((f.diag[1][(0, 0)] - 1.5f64.sqrt()).abs() < 1e-15);
    assert!((f.sub[0][(0, 0)] - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn serial_reconstructs_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = rand_spd_system(&mut rng, 8, 3, false, 1.0);
    let l = chol_factor_serial(&m).unwrap().to_dense();
    let a = m.to_dense();
    assert!(l.matmul(&l.transpose()).max_abs_diff(&a) / a.max_abs() <= 1e-12);
}

#[test]
fn cr_examples() {
    let m = BlockTridiag::new(scalar(&[2.0, 2.0]), scalar(&[1.0]), false).unwrap();
    let (x, _) = cr_factor_solve(&m, &[3.0, 3.0], CrOptions::default()).unwrap();
    assert!(max_rel(&x, &[1.0, 1.0]) < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let id = BlockTridiag::new(vec![Mat::identity(3); 8], vec![Mat::zeros(3, 3); 7], false).unwrap();
    let b = rand_vec(&mut rng, 24);
    assert_eq!(cr_factor_solve(&id, &b, CrOptions::default()).unwrap().0, b);
    let m = rand_spd_system(&mut rng, 16, 4, false, 1.0);
    let b = rand_vec(&mut rng, 64);
    let (x, f) = cr_factor_solve(&m, &b, CrOptions::default()).unwrap();
    let xs = chol_factor_serial(&m).unwrap().solve(&b).unwrap();
    assert!(max_rel(&x, &xs) <= 1e-10);
    assert!(residual(&m, &x, &b) <= 1e-10);
    // resolve
    let b2 = rand_vec(&mut rng, 64);
    assert_eq!(cr_resolve(&f, &b2).unwrap(), cr_factor_solve(&m, &b2, CrOptions::default()).unwrap().0);
    assert!(cr_resolve(&f, &vec![0.0; 64]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn all_solvers_agree_with_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for nb in [2, 4, 8, 16, 32] {
        for n in [1, 2, 3, 5] {
            let m = rand_spd_system(&mut rng, nb, n, false, 1.0);
            let b = rand_vec(&mut rng, nb * n);
            let xd = dense_solve(&m.to_dense(), &b);
            let xc = cr_factor_solve(&m, &b, CrOptions::default()).unwrap().0;
            let xp = pcr_solve(&m, &b).unwrap().0;
            let xs = chol_factor_serial(&m).unwrap().solve(&b).unwrap();
            for x in [&xc, &xp, &xs] {
                assert!(max_rel(x, &xd) <= 1e-9, "N={nb} n={n}");
            }
            for tail in [TailKind::Pcr, TailKind::Pcg] {
                for vlen in [2, 4, 8] {
                    let x = cr_factor_solve(&m, &b, CrOptions { tail, vlen, workers: 1 }).unwrap().0;
                    assert!(max_rel(&x, &xd) <= 1e-9, "tail {tail:?} vlen {vlen} N={nb} n={n}");
                }
            }
        }
    }
}

#[test]
fn circular_coupling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for nb in [1, 2, 4, 8, 16] {
        let m = rand_spd_system(&mut rng, nb, 3, true, 0.5);
        let b = rand_vec(&mut rng, nb * 3);
        let xd = dense_solve(&m.to_dense(), &b);
        let x = cr_factor_solve(&m, &b, CrOptions::default()).unwrap().0;
        assert!(max_rel(&x, &xd) <= 1e-10, "N={nb}");
    }
    let m = rand_spd_system(&mut rng, 4, 2, true, 0.5);
    assert!(matches!(pcr_solve(&m, &[0.0; 8]), Err(BlockTriError::Circular(_))));
    assert!(matches!(chol_factor_serial(&m), Err(BlockTriError::Circular(_))));
}

#[test]
fn cr_is_a_permuted_cholesky() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for nb in [2, 4, 8, 16] {
        let n = 3;
        let m = rand_spd_system(&mut rng, nb, n, false, 1.0);
        let f = cr_factor(&m, CrOptions::default()).unwrap();
        let order = f.elimination_order();
        let a = m.to_dense();
        let pa = Mat::from_fn(nb * n, nb * n, |r, c| a[(order[r / n] * n + r % n, order[c / n] * n + c % n)]);
        let l = dense_chol(&pa);
        let lc = f.permuted_dense_factor().unwrap();
        assert!(l.max_abs_diff(&lc) / l.max_abs() <= 1e-12, "N={nb}");
    }
    assert_eq!(nu2(0, 8), 3);
    assert_eq!(nu2(1, 8), 0);
    assert_eq!(nu2(4, 8), 2);
}

#[test]
fn one_fill_in_per_interior_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let nb = 16;
    let m = rand_spd_system(&mut rng, nb, 2, false, 1.0);
    let f = cr_factor(&m, CrOptions::default()).unwrap();
    for (li, lev) in f.levels.iter().enumerate() {
        let r = lev.m.len();
        let next_k: &Vec<M> = if li + 1 < f.levels.len() { &f.levels[li + 1].k } else { &f.tail_k };
        let nonzero = next_k.iter().filter(|k| k.max_abs() > 0.0).count();
        // odd rows with a successor: r/2 - 1 of them
        assert_eq!(nonzero, r / 2 - 1);
    }
}

#[test]
fn pcr_processes_every_block_each_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = rand_spd_system(&mut rng, 8, 2, false, 1.0);
    let f = pcr_factor(&m).unwrap();
    assert_eq!(f.factorizations, vec![8, 8, 8, 8]);
    let one = BlockTridiag::new(vec![Mat::from_row_major(1, 1, &[4.0])], vec![], false).unwrap();
    assert_eq!(pcr_solve(&one, &[2.0]).unwrap().0, vec![0.5]);
    let id = BlockTridiag::new(vec![Mat::identity(2); 4], vec![Mat::zeros(2, 2); 3], false).unwrap();
    assert_eq!(pcr_solve(&id, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap().0, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let m4 = rand_spd_system(&mut rng, 4, 2, false, 1.0);
    let b = rand_vec(&mut rng, 8);
    let xc = cr_factor_solve(&m4, &b, CrOptions::default()).unwrap().0;
    assert!(max_rel(&pcr_solve(&m4, &b).unwrap().0, &xc) <= 1e-11);
}

fn dense_inverse(a: &M) -> M {
    let n = a.rows();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            dense_solve(a, &e)
        })
        .collect();
    Mat::from_fn(n, n, |r, c| cols[c][r])
}

fn precond_matrix(p: &Precond<f64>, dim: usize) -> M {
    let cols: Vec<Vec<f64>> = (0..dim)
        .map(|j| p.apply(&(0..dim).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>()))
        .collect();
    Mat::from_fn(dim, dim, |r, c| cols[c][r])
}

#[test]
fn stair_preconditioner() {
    let m = BlockTridiag::new(scalar(&[2.0, 2.0]), scalar(&[1.0]), false).unwrap();
    let p = stair_precond_build(&m).unwrap();
    // D^{-1} (I - K D^{-1}) with D = 2I, K = [[0,1],[1,0]]
    let want = Mat::from_row_major(2, 2, &[0.5, -0.25, -0.25, 0.5]);
    assert!(precond_matrix(&p, 2).max_abs_diff(&want) < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let bd = rand_spd_system(&mut rng, 4, 3, false, 0.0);
    let inv = dense_inverse(&bd.to_dense());
    assert!(precond_matrix(&stair_precond_build(&bd).unwrap(), 12).max_abs_diff(&inv) < 1e-13);
    assert!(precond_matrix(&jacobi_precond_build(&bd).unwrap(), 12).max_abs_diff(&inv) < 1e-13);

    let m = rand_spd_system(&mut rng, 4, 3, false, 0.3);
    let a = m.to_dense();
    let d = Mat::from_fn(12, 12, |r, c| if r / 3 == c / 3 { a[(r, c)] } else { 0.0 });
    let k = Mat::from_fn(12, 12, |r, c| if r / 3 != c / 3 { a[(r, c)] } else { 0.0 });
    let di = dense_inverse(&d);
    let formula = Mat::from_fn(12, 12, |r, c| di[(r, c)] - di.matmul(&k).matmul(&di)[(r, c)]);
    assert!(precond_matrix(&stair_precond_build(&m).unwrap(), 12).max_abs_diff(&formula) <= 1e-13);
    assert!(precond_matrix(&jacobi_precond_build(&m).unwrap(), 12).max_abs_diff(&di) <= 1e-13);
}

#[test]
fn conjugate_gradients() {
    let id = BlockTridiag::new(vec![Mat::identity(2); 4], vec![Mat::zeros(2, 2); 3], false).unwrap();
    let b: Vec<f64> = (0..8).map(|i| i as f64).collect();
    let r = pcg_solve(&id, &b, &jacobi_precond_build(&id).unwrap(), 1e-12, 10).unwrap();
    assert_eq!(r.iterations, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let bd = rand_spd_system(&mut rng, 4, 3, false, 0.0);
    let b = rand_vec(&mut rng, 12);
    let r = pcg_solve(&bd, &b, &jacobi_precond_build(&bd).unwrap(), 1e-12, 10).unwrap();
    assert_eq!(r.iterations, 1);
    let m = rand_spd_system(&mut rng, 4, 4, false, 0.3);
    let b = rand_vec(&mut rng, 16);
    let r = pcg_solve(&m, &b, &stair_precond_build(&m).unwrap(), 1e-10, 100).unwrap();
    assert!(r.converged && residual(&m, &r.x, &b) <= 1e-10);
    assert!(r.iterations > 1);
}

#[test]
fn worker_count_does_not_change_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = rand_spd_system(&mut rng, 32, 4, false, 1.0);
    let b = rand_vec(&mut rng, 128);
    let base = cr_factor_solve(&m, &b, CrOptions::default()).unwrap().0;
    for workers in [2, 3, 4, 8] {
        let x = cr_factor_solve(&m, &b, CrOptions { workers, ..CrOptions::default() }).unwrap().0;
        assert_eq!(x, base);
    }
}

#[test]
fn errors() {
    let m = BlockTridiag::new(scalar(&[1.0, 1.0, 1.0]), scalar(&[0.0, 0.0]), false).unwrap();
    assert_eq!(cr_factor(&m, CrOptions::default()).unwrap_err(), BlockTriError::NotPowerOfTwo(3));
    let m = BlockTridiag::new(scalar(&[1.0, 1.0, -1.0, 1.0]), scalar(&[0.0, 0.0, 0.0]), false).unwrap();
    assert_eq!(cr_factor(&m, CrOptions::default()).unwrap_err(), BlockTriError::Pivot { level: 1, index: 2 });
    let m = BlockTridiag::new(scalar(&[1.0, -1.0]), scalar(&[0.0]), false).unwrap();
    assert_eq!(cr_factor(&m, CrOptions::default()).unwrap_err(), BlockTriError::Pivot { level: 0, index: 1 });
    assert_eq!(chol_factor_serial(&m).unwrap_err(), BlockTriError::Pivot { level: 0, index: 1 });
}
