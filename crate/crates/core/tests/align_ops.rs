mod common;

use ciaf::align::{build_motion_tensor, warp};
use ciaf::{FeatureTensor, MotionField};
use common::{rand_tensor, rng};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn warp_matches_scalar_bilinear_reference() {
    for seed in 0..100 {
        let mut r = rng(seed);
        let (c, h, w) = (r.random_range(1..4), r.random_range(1..10), r.random_range(1..10));
        let src = rand_tensor(&mut r, c, h, w, -1.0, 1.0);
        let motion = rand_tensor(&mut r, 2, h, w, -3.0, 3.0);
        let got = warp(&src, &motion).unwrap();
        let want = ciaf_oracle::warp(src.data(), c, h, w, motion.data());
        for (a, b) in got.data().iter().zip(&want) {
            assert!((*a as f64 - b).abs() <= 1e-6, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn integer_motion_is_a_clamped_gather() {
    for seed in 0..20 {
        let mut r = rng(1000 + seed);
        let (h, w) = (7, 9);
        let src = rand_tensor(&mut r, 3, h, w, -1.0, 1.0);
        let ints: Vec<i32> = (0..2 * h * w).map(|_| r.random_range(-12..12)).collect();
        let motion = FeatureTensor::new(2, h, w, ints.iter().map(|&v| v as f32).collect()).unwrap();
        let got = warp(&src, &motion).unwrap();
        assert_eq!(got.data(), &ciaf_oracle::gather_warp(src.data(), 3, h, w, &ints)[..]);
    }
}

#[test]
fn codec_motion_drives_warp() {
    // whole-frame motion of one pixel down: each pixel reads the row below
    let src = FeatureTensor::from_fn(1, 4, 3, |_, y, x| (y * 3 + x) as f32);
    let m = build_motion_tensor(&MotionField::uniform(4, 3, [4, 0]));
    let out = warp(&src, &m).unwrap();
    assert_eq!(
        out.data(),
        &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 9.0, 10.0, 11.0]
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn warp_is_linear(seed in any::<u64>(), a in -3.0f32..3.0, b in -3.0f32..3.0) {
        let mut r = rng(seed);
        let x = rand_tensor(&mut r, 2, 6, 6, -1.0, 1.0);
        let y = rand_tensor(&mut r, 2, 6, 6, -1.0, 1.0);
        let m = rand_tensor(&mut r, 2, 6, 6, -4.0, 4.0);
        let lhs = warp(&x.map(|v| a * v).add(&y.map(|v| b * v)).unwrap(), &m).unwrap();
        let rhs = warp(&x, &m).unwrap().map(|v| a * v).add(&warp(&y, &m).unwrap().map(|v| b * v)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-6 * (1.0 + a.abs() + b.abs()) * 4.0);
    }

    #[test]
    fn warp_stays_within_channel_range(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = rand_tensor(&mut r, 3, 5, 8, -10.0, 10.0);
        let m = rand_tensor(&mut r, 2, 5, 8, -6.0, 6.0);
        let out = warp(&x, &m).unwrap();
        for c in 0..3 {
            let lo = x.plane(c).iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = x.plane(c).iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let slack = 1e-5 * (hi.abs() + lo.abs());
            prop_assert!(out.plane(c).iter().all(|&v| v >= lo - slack && v <= hi + slack));
        }
    }

    #[test]
    fn zero_motion_identity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = rand_tensor(&mut r, 3, 4, 7, -5.0, 5.0);
        prop_assert_eq!(warp(&x, &FeatureTensor::zeros(2, 4, 7)).unwrap(), x);
    }
}
