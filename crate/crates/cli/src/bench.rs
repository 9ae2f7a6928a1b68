//! Dense vs sparse body timing over synthetic tile masks.

use std::io::Write;
use std::time::Instant;

use anyhow::Result;
use ciaf::sparse::{count_flops, resblock, sparse_resblock, ConvShape, SpatialMask};
use ciaf::{init_random_weights, ConvWeights, FeatureTensor, ModelConfig, Variant, VsrModel, WeightBundle};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub struct BenchArgs {
    pub rates: Vec<f64>,
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub blocks: usize,
    pub channels: usize,
    pub tile: usize,
    pub seed: u64,
}

#[derive(Serialize)]
struct Row {
    size: usize,
    rate: f64,
    repeat: usize,
    seed: u64,
    active_pixels: usize,
    pixels: usize,
    measured_rate: f64,
    body_macs_dense: u64,
    body_macs_sparse: u64,
    body_macs_formula: u64,
    body_macs_executed: u64,
    total_macs_dense: u64,
    total_macs_sparse: u64,
    dense_ms: f64,
    sparse_ms: f64,
}

pub struct BenchOutcome {
    pub rows: usize,
    pub formula_mismatches: usize,
}

/// Mask built from `tile x tile` squares, `round((1 - rate) * tiles)` of them active.
pub fn tile_mask(rng: &mut impl Rng, h: usize, w: usize, tile: usize, rate: f64) -> SpatialMask {
    let (th, tw) = (h.div_ceil(tile), w.div_ceil(tile));
    let tiles = th * tw;
    let keep = ((1.0 - rate) * tiles as f64).round() as usize;
    let mut order: Vec<usize> = (0..tiles).collect();
    order.shuffle(rng);
    let mut on = vec![false; tiles];
    for &i in &order[..keep] {
        on[i] = true;
    }
    SpatialMask::from_active(h, w, (0..h * w).map(|i| on[(i / w / tile) * tw + (i % w) / tile]))
}

fn body_convs(bundle: &WeightBundle, blocks: usize) -> Result<Vec<(ConvWeights, ConvWeights)>> {
    let conv = |name: &str| -> Result<ConvWeights> {
        let w = bundle.get(&format!("{name}.weight"))?;
        let b = bundle.get(&format!("{name}.bias"))?;
        Ok(ConvWeights::new(
            w.shape[0],
            w.shape[1],
            w.shape[2],
            w.data.clone(),
            b.data.clone(),
        )?)
    };
    (0..blocks)
        .map(|i| Ok((conv(&format!("body.{i}.conv1"))?, conv(&format!("body.{i}.conv2"))?)))
        .collect()
}

pub fn run(args: &BenchArgs, out: impl Write) -> Result<BenchOutcome> {
    let cfg = ModelConfig {
        num_resblocks: args.blocks,
        channels: args.channels,
        ..ModelConfig::new(Variant::MvResidualSparse)
    };
    cfg.validate()?;
    let bundle = init_random_weights(&cfg, args.seed);
    let model = VsrModel::new(cfg, &bundle)?;
    let body = body_convs(&bundle, args.blocks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut csv = csv::Writer::from_writer(out);
    let (mut rows, mut mismatches) = (0, 0);
    let c = args.channels;

    for &size in &args.sizes {
        let x = FeatureTensor::from_fn(c, size, size, |_, _, _| rng.random_range(-1.0..1.0));
        let cache = FeatureTensor::from_fn(c, size, size, |_, _, _| rng.random_range(-1.0..1.0));
        let pixels = size * size;
        let non_body = model.non_body_macs(size, size);
        for &rate in &args.rates {
            for repeat in 0..args.repeats {
                let mask = tile_mask(&mut rng, size, size, args.tile, rate);
                let active = mask.active_count();

                let t = Instant::now();
                let mut d = x.clone();
                for (w1, w2) in &body {
                    d = resblock(&d, w1, w2)?;
                }
                let dense_ms = t.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(&d);

                let t = Instant::now();
                let mut s = x.clone();
                for (w1, w2) in &body {
                    s = sparse_resblock(&s, w1, w2, &mask, &cache)?;
                }
                let sparse_ms = t.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(&s);

                let count = |m: Option<&SpatialMask>| -> u64 {
                    body.iter()
                        .map(|(w1, w2)| {
                            count_flops(ConvShape::of(w1), size, size, m)
                                + count_flops(ConvShape::of(w2), size, size, m)
                        })
                        .sum()
                };
                let (dense_macs, sparse_macs) = (count(None), count(Some(&mask)));
                let formula = 2 * args.blocks as u64 * ciaf_oracle::conv_macs(3, c as u64, c as u64, active as u64);
                let support = ciaf::sparse::resblock_support(&mask, &body[0].1).len() as u64;
                let per_px = ciaf_oracle::conv_macs(3, c as u64, c as u64, 1);
                let executed = if active == 0 {
                    0
                } else {
                    args.blocks as u64 * per_px * (support + active as u64)
                };
                mismatches += usize::from(sparse_macs != formula);
                csv.serialize(Row {
                    size,
                    rate,
                    repeat,
                    seed: args.seed,
                    active_pixels: active,
                    pixels,
                    measured_rate: 1.0 - active as f64 / pixels as f64,
                    body_macs_dense: dense_macs,
                    body_macs_sparse: sparse_macs,
                    body_macs_formula: formula,
                    body_macs_executed: executed,
                    total_macs_dense: non_body + dense_macs,
                    total_macs_sparse: non_body + sparse_macs,
                    dense_ms,
                    sparse_ms,
                })?;
                rows += 1;
            }
        }
    }
    csv.flush()?;
    Ok(BenchOutcome {
        rows,
        formula_mismatches: mismatches,
    })
}
