mod common;

use ciaf::model::KERNEL;
use ciaf::{
    init_random_weights, load_weights, save_weights, FeatureTensor, FrameType, ModelConfig, MotionField, ResidualMap,
    SidecarFrame, StepOutput, Variant, VsrModel,
};
use common::{rand_tensor, random_sequence, rng};
use proptest::prelude::*;

fn small(variant: Variant) -> ModelConfig {
    ModelConfig {
        num_resblocks: 3,
        channels: 16,
        ..ModelConfig::new(variant)
    }
}

fn run(model: &VsrModel, seq: &[(FeatureTensor, SidecarFrame)]) -> Vec<StepOutput> {
    let (_, h, w) = seq[0].0.dims();
    let mut state = model.init_state(h, w);
    let mut outs = Vec::new();
    for (frame, codec) in seq {
        let out = model.step(frame, codec, &state).unwrap();
        state = out.state.clone();
        outs.push(out);
    }
    outs
}

fn models(cfg: ModelConfig, seed: u64, variants: &[Variant]) -> Vec<VsrModel> {
    let bundle = init_random_weights(&cfg, seed);
    variants
        .iter()
        .map(|&v| VsrModel::new(cfg.with_variant(v), &bundle).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sparse_with_full_masks_equals_aligned(seed in any::<u64>(), len in 1usize..=10) {
        let m = models(small(Variant::MvAligned), seed, &[Variant::MvAligned, Variant::MvResidualSparse]);
        let mut r = rng(seed);
        let seq = random_sequence(&mut r, len, 6, 7, 1.0);
        let (a, s) = (run(&m[0], &seq), run(&m[1], &seq));
        for (x, y) in a.iter().zip(&s) {
            prop_assert!(x.hr_frame.max_abs_diff(&y.hr_frame) <= 1e-5);
            prop_assert_eq!(y.report.sparse_rate, 0.0);
            prop_assert_eq!(x.report.body_macs, y.report.body_macs);
        }
    }

    #[test]
    fn aligned_with_zero_motion_equals_baseline(seed in any::<u64>()) {
        let m = models(small(Variant::Baseline), seed, &[Variant::Baseline, Variant::MvAligned]);
        let mut r = rng(seed);
        let mut seq = random_sequence(&mut r, 4, 5, 6, 0.5);
        for (_, c) in &mut seq {
            c.motion = MotionField::zeros(5, 6);
        }
        let (b, a) = (run(&m[0], &seq), run(&m[1], &seq));
        for (x, y) in b.iter().zip(&a) {
            prop_assert_eq!(&x.hr_frame, &y.hr_frame);
            prop_assert_eq!(&x.state.hidden, &y.state.hidden);
        }
    }

    #[test]
    fn body_macs_follow_sparse_rate(seed in any::<u64>(), density in 0.0f64..1.0) {
        let m = models(small(Variant::MvResidualSparse), seed, &[Variant::MvResidualSparse]);
        let mut r = rng(seed);
        let seq = random_sequence(&mut r, 4, 6, 6, density);
        for out in run(&m[0], &seq) {
            let rep = &out.report;
            // body = dense * (1 - sparse_rate), in integers
            prop_assert_eq!(rep.body_macs * rep.pixels, rep.body_macs_dense * rep.active_pixels);
            prop_assert!(rep.body_macs_executed >= rep.body_macs);
            prop_assert_eq!(rep.total_macs - rep.body_macs, rep.total_macs_dense - rep.body_macs_dense);
            prop_assert!(out.hr_frame.is_finite());
        }
    }
}

#[test]
fn runs_are_bitwise_deterministic() {
    let cfg = small(Variant::MvResidualSparse);
    let mut r = rng(5);
    let seq = random_sequence(&mut r, 5, 8, 8, 0.4);
    let a = run(&models(cfg, 3, &[cfg.variant])[0], &seq);
    let b = run(&models(cfg, 3, &[cfg.variant])[0], &seq);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.hr_frame, y.hr_frame);
        assert_eq!(x.report, y.report);
    }
}

#[test]
fn repeated_frame_replays_previous_output() {
    let cfg = small(Variant::MvResidualSparse);
    let model = &models(cfg, 4, &[cfg.variant])[0];
    let mut r = rng(6);
    let frame = rand_tensor(&mut r, 3, 8, 8, 0.0, 1.0);
    let p = SidecarFrame {
        frame_type: FrameType::P,
        motion: MotionField::zeros(8, 8),
        residual: ResidualMap::zeros(8, 8),
    };
    let mut seq = vec![(frame.clone(), SidecarFrame::intra(8, 8))];
    seq.extend(std::iter::repeat_n((frame, p), 4));
    let outs = run(model, &seq);
    for w in outs.windows(2) {
        assert!(w[1].hr_frame.max_abs_diff(&w[0].hr_frame) <= 1e-5);
    }
    assert!(outs[1..].iter().all(|o| o.report.body_macs == 0));
}

#[test]
fn shifted_frame_with_matching_motion_skips_body() {
    // full-size model on a 3-frame 16x16 sequence; frame 2 is frame 1 moved
    // one pixel right, so every pixel references x - 1 in the previous frame
    let cfg = ModelConfig::new(Variant::MvResidualSparse);
    let model = &models(cfg, 21, &[cfg.variant])[0];
    let mut r = rng(22);
    let f0 = rand_tensor(&mut r, 3, 16, 16, 0.0, 1.0);
    let f1 = rand_tensor(&mut r, 3, 16, 16, 0.0, 1.0);
    let f2 = FeatureTensor::from_fn(3, 16, 16, |c, y, x| f1.get(c, y, x.saturating_sub(1)));
    let p1 = SidecarFrame {
        frame_type: FrameType::P,
        motion: MotionField::uniform(16, 16, [0, 2]),
        residual: ResidualMap::new(16, 16, (0..256).map(|i| (i % 3) as i16).collect()).unwrap(),
    };
    let p2 = SidecarFrame {
        frame_type: FrameType::P,
        motion: MotionField::uniform(16, 16, [0, -4]),
        residual: ResidualMap::zeros(16, 16),
    };
    let outs = run(model, &[(f0, SidecarFrame::intra(16, 16)), (f1, p1), (f2, p2)]);
    assert_eq!(outs[2].report.body_macs, 0);
    assert_eq!(outs[2].report.sparse_rate, 1.0);
    let dense = outs[2].report.body_macs_dense;
    assert_eq!(dense, (2 * 7 * KERNEL * KERNEL * 128 * 128 * 256) as u64);
    // i % 3 != 0 leaves 170 of 256 pixels active
    assert_eq!(outs[1].report.body_macs * 256, dense * 170);
}

#[test]
fn init_variance_follows_fan_in() {
    let cfg = ModelConfig::new(Variant::MvAligned);
    let bundle = init_random_weights(&cfg, 11);
    let check = |name: &str, gain: f64| {
        let t = bundle.get(name).unwrap();
        let fan_in: usize = t.shape[1..].iter().product();
        let n = t.data.len() as f64;
        let mean = t.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = t.data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let want = gain / fan_in as f64;
        assert!((var / want - 1.0).abs() < 0.2, "{name}: var {var}, expected {want}");
    };
    for name in ["head.weight", "body.0.conv1.weight", "body.6.conv1.weight", "up.weight"] {
        check(name, 2.0);
    }
    check("tail.weight", 1.0);
    check("body.3.conv2.weight", 2.0 * 0.01);
    assert!(bundle.get("head.bias").unwrap().data.iter().all(|&v| v == 0.0));
}

#[test]
fn full_size_bundle_round_trips() {
    let cfg = ModelConfig::new(Variant::MvResidualSparse);
    let bundle = init_random_weights(&cfg, 1);
    let bytes = save_weights(&bundle).unwrap();
    assert_eq!(load_weights(&bytes).unwrap(), bundle);
}
