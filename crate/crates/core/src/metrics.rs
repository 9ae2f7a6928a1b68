//! Quality and loss measurements.
//!
//! PSNR is taken on limited-range BT.601 luma,
//! `Y = 0.257 R + 0.504 G + 0.098 B + 16/255` for inputs on the 0..1 scale.
//! SSIM is the usual 11x11 Gaussian-window (sigma 1.5) form with
//! `C1 = 0.01^2`, `C2 = 0.03^2`, evaluated over the valid region of each RGB
//! channel and averaged. No border cropping is applied.

use crate::error::{shape_mismatch, Error, Result};
use crate::tensor::{fmt_dims, FeatureTensor};

/// Returned for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const CHARBONNIER_EPS: f64 = 1e-3;

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn same_dims(op: &'static str, a: &FeatureTensor, b: &FeatureTensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(shape_mismatch(op, fmt_dims(a.dims()), fmt_dims(b.dims())));
    }
    if a.is_empty() {
        return Err(Error::Empty { op });
    }
    Ok(())
}

fn rgb(op: &'static str, a: &FeatureTensor) -> Result<()> {
    if a.channels() != 3 {
        return Err(shape_mismatch(op, "3 channels", a.channels()));
    }
    Ok(())
}

fn luma_plane(t: &FeatureTensor) -> Vec<f64> {
    let (r, g, b) = (t.plane(0), t.plane(1), t.plane(2));
    (0..t.plane_len())
        .map(|i| 0.257 * r[i] as f64 + 0.504 * g[i] as f64 + 0.098 * b[i] as f64 + 16.0 / 255.0)
        .collect()
}

/// Y-channel PSNR in dB for RGB images on the 0..1 scale, capped at [`PSNR_CAP_DB`].
pub fn psnr_y(a: &FeatureTensor, b: &FeatureTensor) -> Result<f64> {
    same_dims("psnr_y", a, b)?;
    rgb("psnr_y", a)?;
    let (ya, yb) = (luma_plane(a), luma_plane(b));
    let mse = ya.iter().zip(&yb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / ya.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> Vec<f64> {
    let n = 2 * SSIM_RADIUS + 1;
    let g: Vec<f64> = (0..n)
        .map(|i| {
            let d = i as f64 - SSIM_RADIUS as f64;
            (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter over the valid region.
fn filter_valid(plane: &[f64], height: usize, width: usize, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let ow = width + 1 - n;
    let oh = height + 1 - n;
    let mut horiz = vec![0f64; height * ow];
    for y in 0..height {
        for x in 0..ow {
            horiz[y * ow + x] = (0..n).map(|k| g[k] * plane[y * width + x + k]).sum();
        }
    }
    let mut out = vec![0f64; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|k| g[k] * horiz[(y + k) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f32], b: &[f32], height: usize, width: usize, g: &[f64]) -> f64 {
    let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let mu_a = filter_valid(&a, height, width, g);
    let mu_b = filter_valid(&b, height, width, g);
    let e_aa = filter_valid(&prod(&a, &a), height, width, g);
    let e_bb = filter_valid(&prod(&b, &b), height, width, g);
    let e_ab = filter_valid(&prod(&a, &b), height, width, g);
    let n = mu_a.len();
    let mut sum = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        sum +=
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    sum / n as f64
}

/// Mean SSIM over channels. Images must be at least 11x11.
pub fn ssim_rgb(a: &FeatureTensor, b: &FeatureTensor) -> Result<f64> {
    same_dims("ssim_rgb", a, b)?;
    let (c, h, w) = a.dims();
    let n = 2 * SSIM_RADIUS + 1;
    if h < n || w < n {
        return Err(Error::InvalidArgument(format!(
            "ssim_rgb: {h}x{w} is smaller than the {n}x{n} window"
        )));
    }
    let g = gaussian_window();
    let total: f64 = (0..c).map(|ch| ssim_plane(a.plane(ch), b.plane(ch), h, w, &g)).sum();
    Ok(total / c as f64)
}

/// Mean of `sqrt((a - b)^2 + eps^2)` with `eps = 1e-3`.
pub fn charbonnier(a: &FeatureTensor, b: &FeatureTensor) -> Result<f64> {
    same_dims("charbonnier", a, b)?;
    let eps = CHARBONNIER_EPS;
    // accumulate the excess over eps so that identical inputs give eps exactly
    let excess: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            (d * d + eps * eps).sqrt() - eps
        })
        .sum();
    Ok(eps + excess / a.data().len() as f64)
}

/// Stacks row `row` of every frame into a `C x T x W` strip.
pub fn temporal_profile(frames: &[FeatureTensor], row: usize) -> Result<FeatureTensor> {
    let first = frames.first().ok_or(Error::Empty { op: "temporal_profile" })?;
    let (c, h, w) = first.dims();
    if row >= h {
        return Err(Error::InvalidArgument(format!("row {row} out of range for height {h}")));
    }
    let t = frames.len();
    let mut out = FeatureTensor::zeros(c, t, w);
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != (c, h, w) {
            return Err(shape_mismatch(
                "temporal_profile",
                fmt_dims((c, h, w)),
                fmt_dims(f.dims()),
            ));
        }
        for ch in 0..c {
            let src = &f.plane(ch)[row * w..(row + 1) * w];
            out.plane_mut(ch)[i * w..(i + 1) * w].copy_from_slice(src);
        }
    }
    Ok(out)
}
