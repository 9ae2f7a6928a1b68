#![allow(dead_code)]

use ciaf::sparse::SpatialMask;
use ciaf::{ConvWeights, FeatureTensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut impl Rng, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> FeatureTensor {
    FeatureTensor::from_fn(c, h, w, |_, _, _| rng.random_range(lo..hi))
}

/// Weights and biases uniform in `[-scale, scale)`.
pub fn rand_conv(rng: &mut impl Rng, cout: usize, cin: usize, k: usize, scale: f32) -> ConvWeights {
    let w = (0..cout * cin * k * k)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    let b = (0..cout).map(|_| rng.random_range(-scale..scale)).collect();
    ConvWeights::new(cout, cin, k, w, b).unwrap()
}

/// Hard mask with exactly `round((1 - rate) * H * W)` active pixels.
pub fn rand_mask(rng: &mut impl Rng, h: usize, w: usize, rate: f64) -> SpatialMask {
    let n = h * w;
    let active = ((1.0 - rate) * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut bits = vec![false; n];
    for &i in &order[..active] {
        bits[i] = true;
    }
    SpatialMask::from_active(h, w, bits)
}

/// Hard mask made of whole `block x block` tiles, `round((1 - rate) * tiles)` of them active.
pub fn rand_block_mask(rng: &mut impl Rng, h: usize, w: usize, block: usize, rate: f64) -> SpatialMask {
    let (bh, bw) = (h / block, w / block);
    let tiles = rand_mask(rng, bh, bw, rate);
    SpatialMask::from_active(
        h,
        w,
        (0..h * w).map(|i| {
            let (y, x) = (i / w, i % w);
            tiles.is_active((y / block).min(bh - 1) * bw + (x / block).min(bw - 1))
        }),
    )
}

/// Dense result where the mask is active, `other` elsewhere.
pub fn blend(mask: &SpatialMask, active: &FeatureTensor, other: &FeatureTensor) -> FeatureTensor {
    let (c, h, w) = active.dims();
    FeatureTensor::from_fn(c, h, w, |ch, y, x| {
        if mask.is_active(y * w + x) {
            active.get(ch, y, x)
        } else {
            other.get(ch, y, x)
        }
    })
}

use ciaf::{FrameType, MotionField, ResidualMap, SidecarFrame};

/// Random RGB frames with random quarter-pel motion and residuals drawn so that
/// roughly `density` of P-frame pixels are non-zero.
pub fn random_sequence(
    r: &mut impl Rng,
    frames: usize,
    h: usize,
    w: usize,
    density: f64,
) -> Vec<(FeatureTensor, SidecarFrame)> {
    (0..frames)
        .map(|t| {
            let frame = rand_tensor(r, 3, h, w, 0.0, 1.0);
            let codec = if t == 0 {
                SidecarFrame::intra(h, w)
            } else {
                let mv = (0..h * w)
                    .map(|_| [r.random_range(-8..=8), r.random_range(-8..=8)])
                    .collect();
                let res = (0..h * w)
                    .map(|_| {
                        if r.random_bool(density) {
                            r.random_range(1..20)
                        } else {
                            0
                        }
                    })
                    .collect();
                SidecarFrame {
                    frame_type: FrameType::P,
                    motion: MotionField::new(h, w, mv).unwrap(),
                    residual: ResidualMap::new(h, w, res).unwrap(),
                }
            };
            (frame, codec)
        })
        .collect()
}
