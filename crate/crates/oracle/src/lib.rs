//! Slow, obviously-correct reference implementations.
//!
//! Everything here works on plain slices in channel-major (C, H, W) order and
//! accumulates in `f64`. Nothing in this crate depends on the engine, so the
//! engine's tests and the `ciaf verify` command can compare against it without
//! sharing a code path.

/// Direct 6-nested-loop cross-correlation with zero padding and unit stride.
///
/// `weight` is laid out `[out][in][ky][kx]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    input: &[f32],
    channels: usize,
    height: usize,
    width: usize,
    weight: &[f32],
    bias: &[f32],
    out_channels: usize,
    kernel: usize,
    padding: usize,
) -> Vec<f32> {
    assert_eq!(input.len(), channels * height * width);
    assert_eq!(weight.len(), out_channels * channels * kernel * kernel);
    let out_h = height + 2 * padding + 1 - kernel;
    let out_w = width + 2 * padding + 1 - kernel;
    let mut out = vec![0f32; out_channels * out_h * out_w];
    for o in 0..out_channels {
        for y in 0..out_h {
            for x in 0..out_w {
                let mut acc = bias[o] as f64;
                for c in 0..channels {
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let iy = y as isize + ky as isize - padding as isize;
                            let ix = x as isize + kx as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= height as isize || ix >= width as isize {
                                continue;
                            }
                            let v = input[(c * height + iy as usize) * width + ix as usize] as f64;
                            let k = weight[((o * channels + c) * kernel + ky) * kernel + kx] as f64;
                            acc += v * k;
                        }
                    }
                }
                out[(o * out_h + y) * out_w + x] = acc as f32;
            }
        }
    }
    out
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Bilinear sample of one plane at a fractional position, clamping the
/// position to the image rectangle first.
pub fn bilinear_sample(plane: &[f32], height: usize, width: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (height - 1) as f64);
    let x = x.clamp(0.0, (width - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let at = |yy: usize, xx: usize| plane[yy * width + xx] as f64;
    at(y0, x0) * (1.0 - fy) * (1.0 - fx)
        + at(y0, x1) * (1.0 - fy) * fx
        + at(y1, x0) * fy * (1.0 - fx)
        + at(y1, x1) * fy * fx
}

/// Backward warp: `out[c, y, x] = source[c]` sampled at `(y + dy, x + dx)`.
///
/// `motion` is `2 x H x W` with the vertical component first.
pub fn warp(source: &[f32], channels: usize, height: usize, width: usize, motion: &[f32]) -> Vec<f64> {
    let plane = height * width;
    let mut out = vec![0f64; channels * plane];
    for c in 0..channels {
        let src = &source[c * plane..(c + 1) * plane];
        for y in 0..height {
            for x in 0..width {
                let dy = motion[y * width + x] as f64;
                let dx = motion[plane + y * width + x] as f64;
                out[c * plane + y * width + x] = bilinear_sample(src, height, width, y as f64 + dy, x as f64 + dx);
            }
        }
    }
    out
}

/// Pure gather with border clamp for integer-valued motion.
pub fn gather_warp(source: &[f32], channels: usize, height: usize, width: usize, motion: &[i32]) -> Vec<f32> {
    let plane = height * width;
    let mut out = vec![0f32; channels * plane];
    for c in 0..channels {
        for y in 0..height {
            for x in 0..width {
                let sy = (y as i32 + motion[y * width + x]).clamp(0, height as i32 - 1) as usize;
                let sx = (x as i32 + motion[plane + y * width + x]).clamp(0, width as i32 - 1) as usize;
                out[c * plane + y * width + x] = source[c * plane + sy * width + sx];
            }
        }
    }
    out
}

/// Half-pixel-centre bilinear enlargement (the "align corners = false" convention).
pub fn bilinear_upsample(input: &[f32], channels: usize, height: usize, width: usize, factor: usize) -> Vec<f64> {
    let (oh, ow) = (height * factor, width * factor);
    let mut out = vec![0f64; channels * oh * ow];
    let plane = height * width;
    for c in 0..channels {
        let src = &input[c * plane..(c + 1) * plane];
        for y in 0..oh {
            for x in 0..ow {
                let sy = ((y as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
                let sx = ((x as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
                out[(c * oh + y) * ow + x] = bilinear_sample(src, height, width, sy, sx);
            }
        }
    }
    out
}

/// Probability of the first of two classes under a tempered softmax.
pub fn softmax2_first(a: f64, b: f64, tau: f64) -> f64 {
    let ea = (a / tau).exp();
    let eb = (b / tau).exp();
    ea / (ea + eb)
}

/// `min(t / t_epoch, 1) * lambda0`, written directly.
pub fn lambda(t: f64, t_epoch: f64, lambda0: f64) -> f64 {
    let ratio = t / t_epoch;
    let ramp = if ratio < 1.0 { ratio } else { 1.0 };
    ramp * lambda0
}

/// `max(1 - t / t_temp, 0.5)`, written directly.
pub fn tau(t: f64, t_temp: f64) -> f64 {
    let v = 1.0 - t / t_temp;
    if v > 0.5 {
        v
    } else {
        0.5
    }
}

/// Multiply-accumulates of a stride-1 convolution evaluated at `pixels` outputs.
pub fn conv_macs(kernel: u64, in_channels: u64, out_channels: u64, pixels: u64) -> u64 {
    kernel * kernel * in_channels * out_channels * pixels
}

/// Limited-range BT.601 luma of an RGB triple on the 0..1 scale.
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.257 * r + 0.504 * g + 0.098 * b + 16.0 / 255.0
}

/// Y-channel PSNR for two `3 x H x W` images with unit peak.
pub fn psnr_y(a: &[f32], b: &[f32], height: usize, width: usize) -> f64 {
    let plane = height * width;
    let mut se = 0.0;
    for i in 0..plane {
        let ya = luma(a[i] as f64, a[plane + i] as f64, a[2 * plane + i] as f64);
        let yb = luma(b[i] as f64, b[plane + i] as f64, b[2 * plane + i] as f64);
        se += (ya - yb) * (ya - yb);
    }
    let mse = se / plane as f64;
    if mse == 0.0 {
        99.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(99.0)
    }
}

/// Single-plane SSIM with an 11x11, sigma 1.5 Gaussian window over the valid region.
pub fn ssim_plane(a: &[f32], b: &[f32], height: usize, width: usize) -> f64 {
    const R: usize = 5;
    let mut g = [[0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let dy = i as f64 - R as f64;
            let dx = j as f64 - R as f64;
            *v = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in R..height - R {
        for x in R..width - R {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, row) in g.iter().enumerate() {
                for (j, w) in row.iter().enumerate() {
                    let w = w / total;
                    let idx = (y + i - R) * width + (x + j - R);
                    let va = a[idx] as f64;
                    let vb = b[idx] as f64;
                    ma += w * va;
                    mb += w * vb;
                    saa += w * va * va;
                    sbb += w * vb * vb;
                    sab += w * va * vb;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            n += 1;
        }
    }
    sum / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let input: Vec<f32> = (0..9).map(|v| v as f32).collect();
        let mut w = vec![0f32; 9];
        w[4] = 1.0;
        assert_eq!(conv2d(&input, 1, 3, 3, &w, &[0.0], 1, 3, 1), input);
    }

    #[test]
    fn bilinear_midpoint() {
        assert_eq!(bilinear_sample(&[2.0, 4.0], 1, 2, 0.0, 0.5), 3.0);
    }

    #[test]
    fn schedules_at_known_points() {
        assert_eq!(lambda(10.0, 20.0, 0.004), 0.002);
        assert_eq!(tau(20.0, 40.0), 0.5);
        assert_eq!(tau(0.0, 40.0), 1.0);
    }
}
