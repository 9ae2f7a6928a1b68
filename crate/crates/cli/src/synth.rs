//! Synthetic clips: ground-truth HR frames, box-downsampled LR frames and a
//! matching sidecar whose residuals are measured on the 8-bit LR luma.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ciaf::align::warp;
use ciaf::sidecar::mv_to_pixels;
use ciaf::{serialize_sidecar, FeatureTensor, FrameType, MotionField, ResidualMap, SidecarFrame, SidecarStream};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frames::{quantize, write_rgb};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Motion {
    /// One frame repeated.
    Static,
    /// Content moves one LR pixel to the right per frame.
    Pan,
    /// Independent frames.
    Noise,
}

pub struct SynthArgs<'a> {
    pub out_dir: &'a Path,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub scale: usize,
    pub motion: Motion,
    pub seed: u64,
}

struct Texture {
    waves: Vec<[f64; 4]>,
}

impl Texture {
    fn new(rng: &mut impl Rng) -> Self {
        let waves = (0..9)
            .map(|_| {
                [
                    rng.random_range(0.02..0.3),
                    rng.random_range(0.02..0.3),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    rng.random_range(0.05..0.2),
                ]
            })
            .collect();
        Self { waves }
    }

    fn frame(&self, h: usize, w: usize, shift: usize) -> FeatureTensor {
        FeatureTensor::from_fn(3, h, w, |c, y, x| {
            let x = x as f64 - shift as f64;
            let v = self.waves.iter().enumerate().fold(0.5, |acc, (i, [fy, fx, p, a])| {
                acc + a * ((fy * y as f64 + fx * x + p + (c * i) as f64 * 0.7).sin()) / 2.0
            });
            v.clamp(0.0, 1.0) as f32
        })
    }
}

fn box_down(t: &FeatureTensor, f: usize) -> FeatureTensor {
    let (c, h, w) = t.dims();
    FeatureTensor::from_fn(c, h / f, w / f, |ch, y, x| {
        let mut s = 0.0;
        for i in 0..f {
            for j in 0..f {
                s += t.get(ch, y * f + i, x * f + j);
            }
        }
        s / (f * f) as f32
    })
}

/// Luma in 8-bit code values, without the constant offset.
fn luma_codes(t: &FeatureTensor) -> Vec<f64> {
    (0..t.plane_len())
        .map(|i| 255.0 * (0.257 * t.plane(0)[i] as f64 + 0.504 * t.plane(1)[i] as f64 + 0.098 * t.plane(2)[i] as f64))
        .collect()
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (h, w, s) = (args.height, args.width, args.scale);
    let lr_dir = args.out_dir.join("lr");
    let gt_dir = args.out_dir.join("gt");
    fs::create_dir_all(&lr_dir).with_context(|| format!("creating {}", lr_dir.display()))?;
    fs::create_dir_all(&gt_dir)?;

    let mut texture = Texture::new(&mut rng);
    let mut codec = Vec::with_capacity(args.frames);
    let mut prev: Option<FeatureTensor> = None;
    for t in 0..args.frames {
        let hr = match args.motion {
            Motion::Static => texture.frame(h * s, w * s, 0),
            Motion::Pan => texture.frame(h * s, w * s, t * s),
            Motion::Noise => {
                texture = Texture::new(&mut rng);
                texture.frame(h * s, w * s, 0)
            }
        };
        let hr = quantize(&hr);
        let lr = quantize(&box_down(&hr, s));
        let name = format!("frame_{t:04}.png");
        write_rgb(&gt_dir.join(&name), &hr)?;
        write_rgb(&lr_dir.join(&name), &lr)?;

        let frame = match &prev {
            None => SidecarFrame::intra(h, w),
            Some(p) => {
                let motion = match args.motion {
                    Motion::Pan => MotionField::uniform(h, w, [0, -4]),
                    _ => MotionField::zeros(h, w),
                };
                let predicted = warp(p, &mv_to_pixels(&motion))?;
                let (cur, pred) = (luma_codes(&lr), luma_codes(&predicted));
                let res = cur.iter().zip(&pred).map(|(a, b)| (a - b).round() as i16).collect();
                SidecarFrame {
                    frame_type: FrameType::P,
                    motion,
                    residual: ResidualMap::new(h, w, res)?,
                }
            }
        };
        codec.push(frame);
        prev = Some(lr);
    }
    let stream = SidecarStream::new(w, h, codec)?;
    let path = args.out_dir.join("stream.ciaf");
    fs::write(&path, serialize_sidecar(&stream)?).with_context(|| format!("writing {}", path.display()))?;
    let skipped = stream
        .frames()
        .iter()
        .filter(|f| f.frame_type == FrameType::P)
        .flat_map(|f| f.residual.values())
        .filter(|&&v| v == 0)
        .count();
    eprintln!(
        "wrote {} frames ({w}x{h} LR) and {}, {skipped} zero-residual P-frame pixels",
        args.frames,
        path.display()
    );
    Ok(())
}
