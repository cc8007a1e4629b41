use batla::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M = Mat<f64>;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> M {
    Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn rand_spd(rng: &mut ChaCha8Rng, n: usize) -> M {
    let a = rand_mat(rng, n, n);
    let mut s = a.matmul(&a.transpose());
    for i in 0..n {
        s[(i, i)] += n as f64;
    }
    s
}

fn rand_lower(rng: &mut ChaCha8Rng, n: usize) -> M {
    Mat::from_fn(n, n, |r, c| {
        if r == c {
            rng.gen_range(1.0..2.0)
        } else if r > c {
            rng.gen_range(-0.5..0.5)
        } else {
            // garbage in the unreferenced triangle
            1e3
        }
    })
}

fn rel(a: &M, b: &M) -> f64 {
    a.max_abs_diff(b) / b.max_abs().max(1.0)
}

fn close(a: &M, b: &M, tol: f64) {
    let e = rel(a, b);
    assert!(e <= tol, "relative error {e:e} > {tol:e}\n{a:?}\n{b:?}");
}

fn m(r: usize, c: usize, d: &[f64]) -> M {
    Mat::from_row_major(r, c, d)
}

#[test]
fn potrf_examples() {
    let (l, _) = potrf_batch(&pack(&[m(1, 1, &[4.0])], 1).unwrap(), false).unwrap();
    assert_eq!(l.matrix(0), m(1, 1, &[2.0]));
    let (l, _) = potrf_batch(&pack(&[m(2, 2, &[4.0, 2.0, 2.0, 5.0])], 4).unwrap(), false).unwrap();
    assert_eq!(l.matrix(0), m(2, 2, &[2.0, 0.0, 1.0, 2.0]));
    let (l, d) = potrf_batch(&pack(&[m(1, 1, &[-1.0])], 2).unwrap(), true).unwrap();
    assert_eq!(l.matrix(0), m(1, 1, &[1.0]));
    assert_eq!(d.unwrap()[0], vec![-1]);
}

#[test]
fn potrf_reports_failing_element() {
    let mats = vec![Mat::identity(2), Mat::identity(2), m(2, 2, &[1.0, 2.0, 2.0, 1.0])];
    let err = potrf_batch(&pack(&mats, 2).unwrap(), false).unwrap_err();
    assert_eq!(err, BatlaError::Pivot { batch_index: 2, pivot: 1 });
}

#[test]
fn potrf_pivot_floor() {
    let a = m(2, 2, &[1.0, 0.0, 0.0, 1e-15]);
    assert!(potrf_batch(&pack(&[a], 1).unwrap(), false).is_err());
    let b = m(2, 2, &[1.0, 0.0, 0.0, 1e-13]);
    assert!(potrf_batch(&pack(&[b], 1).unwrap(), false).is_ok());
}

#[test]
fn signed_potrf_reconstructs_indefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..8 {
        let a = rand_mat(&mut rng, n, n);
        let d: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut h = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    h[(i, j)] += a[(i, k)] * d[k] * a[(j, k)];
                }
            }
        }
        let (l, sig) = potrf_batch(&pack_kind(&[h.clone()], 2, Kind::SymLower).unwrap(), true).unwrap();
        let l = l.matrix(0);
        let s = &sig.unwrap()[0];
        let mut back = Mat::zeros(n, n);
        for i in 0..n {
            assert!(l[(i, i)] > 0.0);
            for j in 0..n {
                for k in 0..n {
                    back[(i, j)] += l[(i, k)] * s[k] as f64 * l[(j, k)];
                }
            }
        }
        close(&back, &h, 1e-10);
    }
}

#[test]
fn trsm_examples() {
    let id = pack(&[Mat::<f64>::identity(2)], 1).unwrap();
    assert_eq!(trsm_batch(TrsmMode::RightLowerTrans, &id, &id).unwrap().matrix(0), Mat::identity(2));
    let b = pack(&[m(2, 2, &[2.0, 0.0, 0.0, 2.0])], 1).unwrap();
    let l = pack_kind(&[m(2, 2, &[2.0, 0.0, 1.0, 1.0])], 1, Kind::Lower).unwrap();
    let x = trsm_batch(TrsmMode::RightLowerTrans, &l, &b).unwrap().matrix(0);
    assert_eq!(x, m(2, 2, &[1.0, -1.0, 0.0, 2.0]));
    let z = pack_kind(&[m(2, 2, &[1.0, 0.0, 0.0, 0.0])], 1, Kind::Lower).unwrap();
    assert_eq!(
        trsm_batch(TrsmMode::LeftLower, &z, &b).unwrap_err(),
        BatlaError::ZeroDiagonal { batch_index: 0, index: 1 }
    );
}

#[test]
fn syrk_gemm_trmm_trtri_trsyrk_examples() {
    let c = pack_kind(&[Mat::identity(2)], 1, Kind::SymLower).unwrap();
    let a = pack(&[m(2, 1, &[1.0, 1.0])], 1).unwrap();
    let s = syrk_batch(&c, &a, 1.0, false).unwrap();
    assert_eq!(s.matrix(0), m(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    let zero = pack(&[Mat::zeros(2, 2)], 1).unwrap();
    assert_eq!(syrk_batch(&c, &zero, 1.0, true).unwrap().matrix(0), Mat::identity(2));
    let id = pack(&[Mat::identity(2)], 1).unwrap();
    assert_eq!(syrk_batch(&zero, &id, 1.0, false).unwrap().matrix(0), Mat::identity(2));

    assert_eq!(gemm_batch(&zero, &id, false, &id, false, 1.0).unwrap().matrix(0), Mat::identity(2));
    assert_eq!(gemm_batch(&id, &id, false, &id, true, -1.0).unwrap().matrix(0), Mat::zeros(2, 2));

    let l = pack_kind(&[m(2, 2, &[1.0, 0.0, 2.0, 1.0])], 1, Kind::Lower).unwrap();
    assert_eq!(trmm_batch(&id, &l, Side::Right, Tri::Lower, false).unwrap().matrix(0), m(2, 2, &[1.0, 0.0, 2.0, 1.0]));
    assert_eq!(trmm_batch(&a, &id, Side::Left, Tri::Lower, false).unwrap().matrix(0), a.matrix(0));

    let d = pack_kind(&[m(2, 2, &[2.0, 0.0, 0.0, 4.0])], 1, Kind::Lower).unwrap();
    assert_eq!(trtri_batch(&d).unwrap().matrix(0), m(2, 2, &[0.5, 0.0, 0.0, 0.25]));
    assert_eq!(trtri_batch(&id).unwrap().matrix(0), Mat::identity(2));

    let u = pack_kind(&[m(2, 2, &[1.0, 1.0, 0.0, 1.0])], 1, Kind::Upper).unwrap();
    assert_eq!(trsyrk_batch(&u).unwrap().matrix(0), m(2, 2, &[2.0, 1.0, 1.0, 1.0]));
}

#[test]
fn hyh_examples() {
    let f = pack_kind(&[m(1, 1, &[5f64.sqrt()])], 1, Kind::Lower).unwrap();
    let g = pack(&[m(1, 1, &[1.0])], 1).unwrap();
    let (ft, gt, _) = hyh_transform_batch(&f, &g, None, &[-1.0]).unwrap();
    assert!((ft.get(0, 0, 0) - 2.0).abs() < 1e-15);
    assert_eq!(gt.get(0, 0, 0), 0.0);
    let f = pack_kind(&[m(1, 1, &[2.0])], 1, Kind::Lower).unwrap();
    let g = pack(&[m(1, 1, &[3.0])], 1).unwrap();
    let (ft, _, _) = hyh_transform_batch(&f, &g, None, &[1.0]).unwrap();
    assert!((ft.get(0, 0, 0) - 13f64.sqrt()).abs() < 1e-15);
    // downdate past zero breaks down
    let g = pack(&[m(1, 1, &[3.0])], 1).unwrap();
    assert_eq!(
        hyh_transform_batch(&f, &g, None, &[-1.0]).unwrap_err(),
        BatlaError::Breakdown { batch_index: 0, column: 0 }
    );
}

#[test]
fn hyh_refuses_cancelling_downdates() {
    // 1 - 0.9999² keeps 2e-4 of the squared pivot, above ε^(1/3) ≈ 6e-6
    let f = pack_kind(&[m(1, 1, &[1.0])], 1, Kind::Lower).unwrap();
    let g = pack(&[m(1, 1, &[0.9999])], 1).unwrap();
    assert!(hyh_transform_batch(&f, &g, None, &[-1.0]).is_ok());
    assert!(downdate_min_ratio::<f64>() > 1e-6 && downdate_min_ratio::<f64>() < 1e-5);
    let g = pack(&[m(1, 1, &[0.9999999])], 1).unwrap();
    assert!(hyh_transform_batch(&f, &g, None, &[-1.0]).is_err());
    // updates are never refused
    let g = pack(&[m(1, 1, &[1e8])], 1).unwrap();
    assert!(hyh_transform_batch(&f, &g, None, &[1.0]).is_ok());
}

#[test]
fn hyh_zero_update_is_exact_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let l0 = potrf_batch(&pack(&[rand_spd(&mut rng, 5), rand_spd(&mut rng, 5)], 2).unwrap(), false).unwrap().0;
    let g = pack(&[Mat::zeros(5, 3), Mat::zeros(5, 3)], 2).unwrap();
    let (l1, g1, _) = hyh_transform_batch(&l0, &g, None, &[1.0, -1.0, 1.0]).unwrap();
    assert_eq!(l1.raw(), l0.raw());
    assert_eq!(g1, g);
}

fn naive_lower_solve(l: &M, b: &M) -> M {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

#[test]
fn kernels_match_naive_references() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..120 {
        let n = 1 + trial % 16;
        let k = rng.gen_range(1..7);
        let v = [1, 2, 4, 8][trial % 4];
        let nb = 1 + rng.gen_range(0..9);
        let spd: Vec<M> = (0..nb).map(|_| rand_spd(&mut rng, n)).collect();
        let low: Vec<M> = (0..nb).map(|_| rand_lower(&mut rng, n)).collect();
        let low_true: Vec<M> = low.iter().map(|l| l.canonical(Kind::Lower)).collect();
        let gen: Vec<M> = (0..nb).map(|_| rand_mat(&mut rng, k, n)).collect();
        let tall: Vec<M> = (0..nb).map(|_| rand_mat(&mut rng, n, k)).collect();
        let cgen: Vec<M> = (0..nb).map(|_| rand_mat(&mut rng, k, k)).collect();
        let lb = pack_kind(&low, v, Kind::Lower).unwrap();

        // potrf
        let (lp, _) = potrf_batch(&pack_kind(&spd, v, Kind::SymLower).unwrap(), false).unwrap();
        for j in 0..nb {
            let l = lp.matrix(j);
            close(&l.matmul(&l.transpose()), &spd[j], 1e-12);
        }
        // trsm, all modes
        let xs = trsm_batch(TrsmMode::RightLowerTrans, &lb, &pack(&gen, v).unwrap()).unwrap();
        let xl = trsm_batch(TrsmMode::LeftLower, &lb, &pack(&tall, v).unwrap()).unwrap();
        let xlt = trsm_batch(TrsmMode::LeftLowerTrans, &lb, &pack(&tall, v).unwrap()).unwrap();
        let xr = trsm_batch(TrsmMode::RightLower, &lb, &pack(&gen, v).unwrap()).unwrap();
        for j in 0..nb {
            let l = &low_true[j];
            close(&xs.matrix(j).matmul(&l.transpose()), &gen[j], 1e-12);
            close(&xl.matrix(j), &naive_lower_solve(l, &tall[j]), 1e-12);
            close(&l.transpose().matmul(&xlt.matrix(j)), &tall[j], 1e-12);
            close(&xr.matrix(j).matmul(l), &gen[j], 1e-12);
        }
        // syrk and fused syrk + potrf
        let cs: Vec<M> = spd.clone();
        let s = syrk_batch(&pack_kind(&cs, v, Kind::SymLower).unwrap(), &pack(&tall, v).unwrap(), 1.0, false).unwrap();
        let sf = syrk_batch(&pack_kind(&cs, v, Kind::SymLower).unwrap(), &pack(&tall, v).unwrap(), 1.0, true).unwrap();
        for j in 0..nb {
            let mut want = cs[j].clone();
            let aat = tall[j].matmul(&tall[j].transpose());
            for r in 0..n {
                for c in 0..n {
                    want[(r, c)] += aat[(r, c)];
                }
            }
            close(&s.matrix(j), &want, 1e-12);
            let l = sf.matrix(j);
            close(&l.matmul(&l.transpose()), &want, 1e-12);
        }
        // gemm with every transpose combination
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let a: Vec<M> = gen.iter().map(|g| if ta { g.transpose() } else { g.clone() }).collect();
            let b: Vec<M> = tall.iter().map(|t| if tb { t.transpose() } else { t.clone() }).collect();
            let r = gemm_batch(&pack(&cgen, v).unwrap(), &pack(&a, v).unwrap(), ta, &pack(&b, v).unwrap(), tb, -1.0)
                .unwrap();
            for j in 0..nb {
                let p = gen[j].matmul(&tall[j]);
                let want = Mat::from_fn(k, k, |r, c| cgen[j][(r, c)] - p[(r, c)]);
                close(&r.matrix(j), &want, 1e-12);
            }
        }
        // trmm against gemm with the explicit triangle
        let up: Vec<M> = low.iter().map(|l| l.transpose()).collect();
        let ub = pack_kind(&up, v, Kind::Upper).unwrap();
        let gb = pack(&gen, v).unwrap();
        let tb = pack(&tall, v).unwrap();
        let r1 = trmm_batch(&gb, &lb, Side::Right, Tri::Lower, false).unwrap();
        let r2 = trmm_batch(&gb, &ub, Side::Right, Tri::Upper, true).unwrap();
        let r3 = trmm_batch(&tb, &lb, Side::Left, Tri::Lower, true).unwrap();
        let r4 = trmm_batch(&tb, &ub, Side::Left, Tri::Upper, false).unwrap();
        for j in 0..nb {
            let l = &low_true[j];
            close(&r1.matrix(j), &gen[j].matmul(l), 1e-12);
            close(&r2.matrix(j), &gen[j].matmul(l), 1e-12);
            close(&r3.matrix(j), &l.transpose().matmul(&tall[j]), 1e-12);
            close(&r4.matrix(j), &l.transpose().matmul(&tall[j]), 1e-12);
        }
        // trtri and trsyrk
        let inv = trtri_batch(&lb).unwrap();
        let ts = trsyrk_batch(&ub).unwrap();
        for j in 0..nb {
            close(&low_true[j].matmul(&inv.matrix(j)), &Mat::identity(n), 1e-12);
            let u = low_true[j].transpose();
            close(&ts.matrix(j), &u.matmul(&u.transpose()), 1e-12);
        }
    }
}

#[test]
fn hyh_reconstructs_metric_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..60 {
        let n = 1 + trial % 9;
        let m = 1 + trial % 4;
        let v = [1, 2, 4, 8][trial % 4];
        let nb = 1 + trial % 7;
        let spd: Vec<M> = (0..nb).map(|_| rand_spd(&mut rng, n)).collect();
        let (l, _) = potrf_batch(&pack_kind(&spd, v, Kind::SymLower).unwrap(), false).unwrap();
        let gs: Vec<M> = (0..nb).map(|_| Mat::from_fn(n, m, |_, _| 0.3 * rng.gen_range(-1.0..1.0))).collect();
        let signs: Vec<f64> = (0..m).map(|q| if q % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (lt, gt, _) = hyh_transform_batch(&l, &pack(&gs, v).unwrap(), None, &signs).unwrap();
        for j in 0..nb {
            let mut want = spd[j].clone();
            for q in 0..m {
                for r in 0..n {
                    for c in 0..n {
                        want[(r, c)] += signs[q] * gs[j][(r, q)] * gs[j][(c, q)];
                    }
                }
            }
            let f = lt.matrix(j);
            close(&f.matmul(&f.transpose()), &want, 1e-10);
            assert!(gt.matrix(j).max_abs() == 0.0);
        }
    }
}

#[test]
fn hyh_trailing_rows_and_replay() {
    // pivot block with trailing rows in one call equals pivot-only call plus replay
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (n, t, m) = (4, 3, 2);
    let big = rand_spd(&mut rng, n + t);
    let mut lfull = big.clone();
    kernels::potrf(lfull.as_mut(), None).unwrap();
    let lfull = lfull.canonical(Kind::Lower);
    let g = Mat::from_fn(n + t, m, |_, _| 0.2 * rng.gen_range(-1.0..1.0));
    let s = [1.0, -1.0];

    let mut l1 = Mat::from_fn(n + t, n, |r, c| lfull[(r, c)]);
    let mut g1 = g.clone();
    hyh_transform(l1.as_mut(), g1.as_mut(), None, &s).unwrap();

    let mut lp = Mat::from_fn(n, n, |r, c| lfull[(r, c)]);
    let mut gp = Mat::from_fn(n, m, |r, c| g[(r, c)]);
    let h = hyh_transform(lp.as_mut(), gp.as_mut(), None, &s).unwrap();
    let mut lt = Mat::from_fn(t, n, |r, c| lfull[(n + r, c)]);
    let mut gtr = Mat::from_fn(t, m, |r, c| g[(n + r, c)]);
    hyh_apply(&h, lt.as_mut(), gtr.as_mut());
    for r in 0..t {
        for c in 0..n {
            assert_eq!(l1[(n + r, c)], lt[(r, c)]);
        }
        for c in 0..m {
            assert_eq!(g1[(n + r, c)], gtr[(r, c)]);
        }
    }
    // the updated [L; trailing] still reproduces the Schur-consistent identity on the first n columns
    let mut want = Mat::zeros(n + t, n + t);
    for r in 0..n + t {
        for c in 0..n + t {
            let mut x = 0.0;
            for k in 0..n {
                x += lfull[(r, k)] * lfull[(c, k)];
            }
            for q in 0..m {
                x += s[q] * g[(r, q)] * g[(c, q)];
            }
            want[(r, c)] = x;
        }
    }
    let mut got = Mat::zeros(n + t, n + t);
    for r in 0..n + t {
        for c in 0..n + t {
            let mut x = 0.0;
            for k in 0..n {
                x += l1[(r, k)] * l1[(c, k)];
            }
            for q in 0..m {
                x += s[q] * g1[(r, q)] * g1[(c, q)];
            }
            got[(r, c)] = x;
        }
    }
    close(&got, &want, 1e-12);
}

#[test]
fn results_do_not_depend_on_vlen() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 7;
    let spd: Vec<M> = (0..9).map(|_| rand_spd(&mut rng, n)).collect();
    let g: Vec<M> = (0..9).map(|_| rand_mat(&mut rng, 3, n)).collect();
    let mut outs = Vec::new();
    for v in [1, 2, 4, 8] {
        let (l, _) = potrf_batch(&pack_kind(&spd, v, Kind::SymLower).unwrap(), false).unwrap();
        let x = trsm_batch(TrsmMode::RightLowerTrans, &l, &pack(&g, v).unwrap()).unwrap();
        outs.push((unpack(&l), unpack(&x)));
    }
    for o in &outs[1..] {
        assert_eq!(o, &outs[0]);
    }
}

#[test]
fn flop_counts_are_analytic() {
    flops::reset();
    let mut a = Mat::<f64>::identity(6);
    kernels::potrf(a.as_mut(), None).unwrap();
    // sum_k k (n - k) for n = 6
    assert_eq!(flops::get(), (0..6).map(|k| k * (6 - k)).sum::<usize>() as u64);
    let ((), n) = flops::measure(|| {
        let mut c = Mat::<f64>::zeros(4, 5);
        let a = Mat::<f64>::zeros(4, 3);
        let b = Mat::<f64>::zeros(3, 5);
        kernels::gemm(c.as_mut(), a.as_ref(), false, b.as_ref(), false, 1.0);
    });
    assert_eq!(n, 60);
}

#[test]
fn round_robin_visits_every_item_once() {
    let mut xs: Vec<usize> = vec![0; 37];
    par::for_each_round_robin(&mut xs, 4, |i, x| *x += i + 1);
    assert!(xs.iter().enumerate().all(|(i, &x)| x == i + 1));
}
