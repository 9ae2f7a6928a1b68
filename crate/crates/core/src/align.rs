//! Motion-vector alignment.
//!
//! Backward warping: every output pixel looks up its reference position in the
//! previous frame and samples it bilinearly.
//!
//! ```text
//!   previous frame            current frame
//!   +-----------+             +-----------+
//!   |     R <---+--- mv ------+-- p       |   out[p] = prev[p + mv(p)]
//!   +-----------+             +-----------+
//! ```
//!
//! Sample positions are clamped to the frame, so references outside the image
//! repeat the border pixel instead of introducing zeros into the recurrent state.

use crate::error::{shape_mismatch, Result};
use crate::sidecar::{mv_to_pixels, MotionField};
use crate::tensor::{fmt_dims, FeatureTensor};

/// Pixel-unit `2 x H x W` motion tensor for a codec motion field.
pub fn build_motion_tensor(m: &MotionField) -> FeatureTensor {
    mv_to_pixels(m)
}

/// Warps `source` so that `out[c, y, x] = source[c]` at `(y + dy, x + dx)`.
pub fn warp(source: &FeatureTensor, motion: &FeatureTensor) -> Result<FeatureTensor> {
    let (c, h, w) = source.dims();
    if motion.dims() != (2, h, w) {
        return Err(shape_mismatch(
            "warp (motion)",
            fmt_dims((2, h, w)),
            fmt_dims(motion.dims()),
        ));
    }
    if motion.data().iter().all(|&v| v == 0.0) {
        return Ok(source.clone());
    }

    // Per-pixel taps are shared by all channels.
    let plane = h * w;
    let (my, mx) = (motion.plane(0), motion.plane(1));
    let max_y = (h - 1) as f32;
    let max_x = (w - 1) as f32;
    let mut taps = Vec::with_capacity(plane);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sy = (y as f32 + my[i]).clamp(0.0, max_y);
            let sx = (x as f32 + mx[i]).clamp(0.0, max_x);
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            taps.push(Tap {
                i00: y0 * w + x0,
                i01: y0 * w + x1,
                i10: y1 * w + x0,
                i11: y1 * w + x1,
                fy: sy - y0 as f32,
                fx: sx - x0 as f32,
            });
        }
    }

    let mut out = FeatureTensor::zeros(c, h, w);
    for ch in 0..c {
        let src = source.plane(ch);
        let dst = out.plane_mut(ch);
        for (d, t) in dst.iter_mut().zip(&taps) {
            *d = if t.fy == 0.0 && t.fx == 0.0 {
                src[t.i00]
            } else {
                let top = src[t.i00] * (1.0 - t.fx) + src[t.i01] * t.fx;
                let bottom = src[t.i10] * (1.0 - t.fx) + src[t.i11] * t.fx;
                top * (1.0 - t.fy) + bottom * t.fy
            };
        }
    }
    Ok(out)
}

struct Tap {
    i00: usize,
    i01: usize,
    i10: usize,
    i11: usize,
    fy: f32,
    fx: f32,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_motion_is_exact_identity() {
        let src = FeatureTensor::from_fn(3, 5, 4, |c, y, x| {
            (c as f32 - 1.3) * (y as f32 + 0.7) / (x as f32 + 1.0)
        });
        let out = warp(&src, &FeatureTensor::zeros(2, 5, 4)).unwrap();
        assert_eq!(out, src);
    }

    #[test]
    fn half_pixel_horizontal_average() {
        let (a, b) = (0.3f32, 1.7f32);
        let src = FeatureTensor::new(1, 1, 2, vec![a, b]).unwrap();
        let motion = FeatureTensor::new(2, 1, 2, vec![0.0, 0.0, 0.5, 0.0]).unwrap();
        let out = warp(&src, &motion).unwrap();
        assert_eq!(out.data()[0], (a + b) / 2.0);
        assert_eq!(out.data()[1], b);
    }

    #[test]
    fn border_clamps() {
        let src = FeatureTensor::new(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let motion = FeatureTensor::new(2, 1, 3, vec![0.0, 0.0, 0.0, -5.0, 10.0, 0.0]).unwrap();
        let out = warp(&src, &motion).unwrap();
        assert_eq!(out.data(), &[1.0, 3.0, 3.0]);
    }

    #[test]
    fn dim_mismatch_is_error() {
        let src = FeatureTensor::zeros(1, 4, 4);
        assert!(warp(&src, &FeatureTensor::zeros(2, 4, 3)).is_err());
        assert!(warp(&src, &FeatureTensor::zeros(1, 4, 4)).is_err());
    }

    #[test]
    fn single_block_vertical_motion() {
        let mut m = MotionField::zeros(8, 8);
        for y in 4..8 {
            for x in 0..4 {
                m.vectors_mut()[y * 8 + x] = [4, 0];
            }
        }
        let t = build_motion_tensor(&m);
        assert_eq!(t.plane(0).iter().filter(|&&v| v == 1.0).count(), 16);
        assert_eq!(t.plane(0).iter().filter(|&&v| v != 0.0).count(), 16);
        assert!(t.plane(1).iter().all(|&v| v == 0.0));
        for y in 4..8 {
            for x in 0..4 {
                assert_eq!(t.get(0, y, x), 1.0);
            }
        }
    }
}
