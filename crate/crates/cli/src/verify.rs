//! Oracle-equivalence suites. The exit status is the number of failed suites.

use anyhow::Result;
use ciaf::align::warp;
use ciaf::sparse::{resblock, sparse_resblock, AnnealSchedule};
use ciaf::tensor::conv2d;
use ciaf::{init_random_weights, ConvWeights, FeatureTensor, ModelConfig, Variant};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SuiteResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn tensor(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> FeatureTensor {
    FeatureTensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
}

fn conv_suite(rng: &mut impl Rng) -> Result<SuiteResult> {
    let mut worst = 0f32;
    for _ in 0..20 {
        let (cin, cout, h, w) = (
            rng.random_range(1..8),
            rng.random_range(1..8),
            rng.random_range(1..10),
            rng.random_range(1..10),
        );
        let k = [1, 3, 5][rng.random_range(0..3)];
        let x = tensor(rng, cin, h, w);
        let wt: Vec<f32> = (0..cout * cin * k * k).map(|_| rng.random_range(-0.5..0.5)).collect();
        let b: Vec<f32> = (0..cout).map(|_| rng.random_range(-0.5..0.5)).collect();
        let cw = ConvWeights::new(cout, cin, k, wt, b)?;
        let got = conv2d(&x, &cw, k / 2)?;
        let want = ciaf_oracle::conv2d(x.data(), cin, h, w, cw.weight(), cw.bias(), cout, k, k / 2);
        worst = got
            .data()
            .iter()
            .zip(&want)
            .fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    Ok(SuiteResult {
        name: "dense conv vs loop oracle",
        pass: worst <= 1e-5,
        detail: format!("20 cases, max |diff| {worst:.2e}"),
    })
}

fn sparse_suite(rng: &mut ChaCha8Rng, seed: u64, inject_fault: bool) -> Result<SuiteResult> {
    let cfg = ModelConfig {
        num_resblocks: 1,
        channels: 16,
        ..ModelConfig::new(Variant::MvResidualSparse)
    };
    let clean = init_random_weights(&cfg, seed);
    let mut used = clean.clone();
    if inject_fault {
        // one corrupted weight in the copy handed to the sparse path
        if let Some(t) = used.get_mut("body.0.conv1.weight") {
            t.data[0] += 1.0;
        }
    }
    let conv = |b: &ciaf::WeightBundle, name: &str| -> Result<ConvWeights> {
        let w = b.get(&format!("{name}.weight"))?;
        let bias = b.get(&format!("{name}.bias"))?;
        Ok(ConvWeights::new(
            w.shape[0],
            w.shape[1],
            w.shape[2],
            w.data.clone(),
            bias.data.clone(),
        )?)
    };
    let (w1, w2) = (conv(&clean, "body.0.conv1")?, conv(&clean, "body.0.conv2")?);
    let (u1, u2) = (conv(&used, "body.0.conv1")?, conv(&used, "body.0.conv2")?);
    let mut worst = 0f32;
    for rate in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (h, w) = (12, 10);
        let x = tensor(rng, 16, h, w);
        let cache = tensor(rng, 16, h, w);
        let mut order: Vec<usize> = (0..h * w).collect();
        order.shuffle(rng);
        let keep = ((1.0 - rate) * (h * w) as f64).round() as usize;
        let mut bits = vec![false; h * w];
        order[..keep].iter().for_each(|&i| bits[i] = true);
        let mask = ciaf::SpatialMask::from_active(h, w, bits);
        let dense = resblock(&x, &w1, &w2)?;
        let got = sparse_resblock(&x, &u1, &u2, &mask, &cache)?;
        for i in 0..h * w {
            let src = if mask.is_active(i) { &dense } else { &cache };
            for c in 0..16 {
                worst = worst.max((got.plane(c)[i] - src.plane(c)[i]).abs());
            }
        }
    }
    Ok(SuiteResult {
        name: "sparse resblock vs dense blend",
        pass: worst <= 1e-5,
        detail: format!(
            "rates 0..1, max |diff| {worst:.2e}{}",
            if inject_fault { " (fault injected)" } else { "" }
        ),
    })
}

fn warp_suite(rng: &mut impl Rng) -> Result<SuiteResult> {
    let mut worst = 0f64;
    for _ in 0..20 {
        let (c, h, w) = (rng.random_range(1..4), rng.random_range(1..10), rng.random_range(1..10));
        let src = tensor(rng, c, h, w);
        let motion = FeatureTensor::from_fn(2, h, w, |_, _, _| rng.random_range(-3.0..3.0));
        let got = warp(&src, &motion)?;
        let want = ciaf_oracle::warp(src.data(), c, h, w, motion.data());
        worst = got
            .data()
            .iter()
            .zip(&want)
            .fold(worst, |m, (a, b)| m.max((*a as f64 - b).abs()));
    }
    Ok(SuiteResult {
        name: "bilinear warp vs scalar oracle",
        pass: worst <= 1e-6,
        detail: format!("20 cases, max |diff| {worst:.2e}"),
    })
}

fn schedule_suite() -> SuiteResult {
    let s = AnnealSchedule::default();
    let bad = (0..=100u32)
        .filter(|&t| {
            s.lambda_at(t).to_bits() != ciaf_oracle::lambda(t as f64, s.t_epoch, s.lambda0).to_bits()
                || s.tau_at(t).to_bits() != ciaf_oracle::tau(t as f64, s.t_temp).to_bits()
        })
        .count();
    SuiteResult {
        name: "anneal schedule tables",
        pass: bad == 0,
        detail: format!("t = 0..=100, {bad} mismatches"),
    }
}

pub fn run(seed: u64, inject_fault: bool) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        conv_suite(&mut rng)?,
        sparse_suite(&mut rng, seed, inject_fault)?,
        warp_suite(&mut rng)?,
        schedule_suite(),
    ])
}
