use batla::*;
use proptest::prelude::*;

#[test]
fn single_scalar_pads_with_zeros() {
    let b = pack(&[Mat::from_row_major(1, 1, &[7.0])], 4).unwrap();
    assert_eq!(b.raw(), &[7.0, 0.0, 0.0, 0.0]);
}

#[test]
fn identities_round_trip() {
    let ids = vec![Mat::<f64>::identity(2); 4];
    assert_eq!(unpack(&pack(&ids, 4).unwrap()), ids);
}

#[test]
fn offset_formula() {
    // (j mod v) + v r + v m c + v m n floor(j / v)
    assert_eq!(compact_offset(1, 0, 5, 3, 3, 4), 1 + 4 + 36);
    let mut b = BatchMatrix::<f64>::new(3, 3, 6, 4, Kind::General).unwrap();
    b.set(5, 1, 0, 9.0);
    assert_eq!(b.raw()[41], 9.0);
    assert_eq!(b.raw().len(), 4 * 9 * 2);
}

#[test]
fn empty_and_zero_batches() {
    let e = BatchMatrix::<f64>::new(2, 3, 0, 4, Kind::General).unwrap();
    assert!(unpack(&e).is_empty());
    let z = vec![Mat::<f64>::zeros(2, 3); 3];
    assert_eq!(unpack(&pack(&z, 2).unwrap()), z);
}

#[test]
fn pack_rejects_mixed_shapes() {
    let r = pack(&[Mat::<f64>::zeros(2, 2), Mat::zeros(2, 3)], 2);
    assert!(matches!(r, Err(BatlaError::ShapeMismatch(_))));
}

#[test]
fn triangular_padding_is_identity() {
    let b = BatchMatrix::<f64>::new(3, 3, 5, 4, Kind::Lower).unwrap();
    for j in 5..8 {
        for i in 0..3 {
            assert_eq!(b.raw()[b.offset(i, i, j)], 1.0);
        }
    }
    // potrf over the padded group succeeds
    let (l, _) = potrf_batch(&BatchMatrix::<f64>::identity(3, 5, 4, Kind::SymLower).unwrap(), false).unwrap();
    assert_eq!(l.matrix(4), Mat::identity(3));
}

#[test]
fn lane_rotation() {
    let a = Mat::from_row_major(1, 1, &[1.0]);
    let b = Mat::from_row_major(1, 1, &[2.0]);
    let x = pack(&[a.clone(), b.clone()], 2).unwrap();
    assert_eq!(unpack(&lane_rotate(&x, 0)), vec![a.clone(), b.clone()]);
    assert_eq!(unpack(&lane_rotate(&x, 1)), vec![b, a]);
    let mats: Vec<_> = (0..8).map(|i| Mat::from_fn(2, 2, |r, c| (i * 4 + r * 2 + c) as f64)).collect();
    let y = pack(&mats, 4).unwrap();
    assert_eq!(lane_rotate(&lane_rotate(&y, 1), -1), y);
    let z = lane_rotate(&y, 3);
    assert_eq!(z.stored(3), mats[0]);
    assert_eq!(z.stored(4 + 2), mats[4 + 3]);
}

proptest! {
    #[test]
    fn pack_unpack_is_bit_exact(
        rows in 1usize..6, cols in 1usize..6, batch in 1usize..10, vexp in 0u32..4,
        seed in any::<u64>(),
    ) {
        let v = 1usize << vexp;
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from_bits((s >> 2) | 0x3ff0_0000_0000_0000) - 1.5
        };
        let mats: Vec<Mat<f64>> = (0..batch).map(|_| Mat::from_fn(rows, cols, |_, _| next())).collect();
        let b = pack(&mats, v).unwrap();
        prop_assert_eq!(b.raw().len(), v * rows * cols * batch.div_ceil(v));
        let back = unpack(&b);
        for (x, y) in mats.iter().zip(&back) {
            let same = x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits());
            prop_assert!(same);
        }
        prop_assert_eq!(pack(&back, v).unwrap(), b);
    }
}
