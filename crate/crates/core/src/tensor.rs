//! Dense `C x H x W` tensors and the handful of image operators the network
//! needs: convolution, leaky ReLU, pixel shuffle and bilinear upsampling.
//!
//! All operators take their inputs by reference and return fresh tensors.

use std::fmt;

use crate::error::{shape_mismatch, Error, Result};

/// Number of output pixels whose im2col columns are materialised at once.
const CONV_TILE: usize = 2048;

#[derive(Clone, PartialEq)]
pub struct FeatureTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl fmt::Debug for FeatureTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureTensor({}x{}x{})", self.channels, self.height, self.width)
    }
}

impl FeatureTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(shape_mismatch("FeatureTensor::new", expected, data.len()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f32) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    /// Elementwise sum; both tensors must share dimensions.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(shape_mismatch("add", fmt_dims(self.dims()), fmt_dims(other.dims())));
        }
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
            ..*self
        })
    }

    /// Stacks tensors along the channel axis.
    pub fn concat_channels(parts: &[&FeatureTensor]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty { op: "concat_channels" })?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if (p.height, p.width) != (h, w) {
                return Err(shape_mismatch(
                    "concat_channels",
                    format!("{h}x{w}"),
                    format!("{}x{}", p.height, p.width),
                ));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Self::new(channels, h, w, data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f32 {
        assert_eq!(self.dims(), other.dims(), "max_abs_diff on mismatched tensors");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

pub(crate) fn fmt_dims((c, h, w): (usize, usize, usize)) -> String {
    format!("{c}x{h}x{w}")
}

/// Weights of a square, stride-1 convolution, laid out `[out][in][ky][kx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    out_channels: usize,
    in_channels: usize,
    kernel: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvWeights {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        let expected = out_channels * in_channels * kernel * kernel;
        if weight.len() != expected {
            return Err(shape_mismatch("ConvWeights::new (weight)", expected, weight.len()));
        }
        if bias.len() != out_channels {
            return Err(shape_mismatch("ConvWeights::new (bias)", out_channels, bias.len()));
        }
        if kernel == 0 {
            return Err(Error::InvalidArgument("kernel size must be positive".into()));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            weight,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [f32] {
        &mut self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }
}

fn check_conv(input: &FeatureTensor, w: &ConvWeights, padding: usize) -> Result<(usize, usize)> {
    if input.is_empty() {
        return Err(Error::Empty { op: "conv2d" });
    }
    if input.channels != w.in_channels {
        return Err(shape_mismatch("conv2d (input channels)", w.in_channels, input.channels));
    }
    let padded_h = input.height + 2 * padding;
    let padded_w = input.width + 2 * padding;
    if padded_h < w.kernel || padded_w < w.kernel {
        return Err(Error::InvalidArgument(format!(
            "conv2d: kernel {} larger than padded input {}x{}",
            w.kernel, padded_h, padded_w
        )));
    }
    Ok((padded_h + 1 - w.kernel, padded_w + 1 - w.kernel))
}

/// Zero-padded, stride-1 cross-correlation.
pub fn conv2d(input: &FeatureTensor, w: &ConvWeights, padding: usize) -> Result<FeatureTensor> {
    let (out_h, out_w) = check_conv(input, w, padding)?;
    let pixels: Vec<u32> = (0..(out_h * out_w) as u32).collect();
    let mut out = FeatureTensor::zeros(w.out_channels, out_h, out_w);
    let values = conv2d_at(input, w, padding, out_w, &pixels)?;
    scatter_columns(&values, &pixels, &mut out);
    Ok(out)
}

/// Evaluates a convolution only at the listed output pixels (flat `y * out_w + x`
/// indices). Returns an `out_channels x pixels.len()` row-major matrix.
///
/// Every output column is produced by the same gather + GEMM path as the dense
/// [`conv2d`], so a pixel gets the same value whichever set it is evaluated in.
pub fn conv2d_at(
    input: &FeatureTensor,
    w: &ConvWeights,
    padding: usize,
    out_w: usize,
    pixels: &[u32],
) -> Result<Vec<f32>> {
    let (out_h, ow) = check_conv(input, w, padding)?;
    if ow != out_w {
        return Err(shape_mismatch("conv2d_at (output width)", ow, out_w));
    }
    let limit = (out_h * out_w) as u32;
    if let Some(&bad) = pixels.iter().find(|&&p| p >= limit) {
        return Err(Error::InvalidArgument(format!(
            "conv2d_at: pixel {bad} outside {out_h}x{out_w}"
        )));
    }

    let n_total = pixels.len();
    let depth = w.in_channels * w.kernel * w.kernel;
    let mut result = vec![0f32; w.out_channels * n_total];
    let mut cols = vec![0f32; depth * CONV_TILE.min(n_total.max(1))];
    let mut tile_out = vec![0f32; w.out_channels * CONV_TILE.min(n_total.max(1))];

    for (tile_idx, tile) in pixels.chunks(CONV_TILE).enumerate() {
        let n = tile.len();
        gather_columns(input, w.kernel, padding, out_w, tile, &mut cols[..depth * n]);
        // SAFETY: the slices hold exactly m*k, k*n and m*n elements with the
        // row-major strides passed here.
        unsafe {
            matrixmultiply::sgemm(
                w.out_channels,
                depth,
                n,
                1.0,
                w.weight.as_ptr(),
                depth as isize,
                1,
                cols.as_ptr(),
                n as isize,
                1,
                0.0,
                tile_out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        let base = tile_idx * CONV_TILE;
        for o in 0..w.out_channels {
            let b = w.bias[o];
            let src = &tile_out[o * n..o * n + n];
            let dst = &mut result[o * n_total + base..o * n_total + base + n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + b;
            }
        }
    }
    Ok(result)
}

/// im2col for a subset of output pixels. `cols` is `depth x tile.len()`.
fn gather_columns(input: &FeatureTensor, kernel: usize, padding: usize, out_w: usize, tile: &[u32], cols: &mut [f32]) {
    let n = tile.len();
    let (h, w) = (input.height as isize, input.width as isize);
    let mut row = 0;
    for c in 0..input.channels {
        let plane = input.plane(c);
        for ky in 0..kernel {
            for kx in 0..kernel {
                let dst = &mut cols[row * n..(row + 1) * n];
                for (d, &p) in dst.iter_mut().zip(tile) {
                    let y = (p as usize / out_w) as isize + ky as isize - padding as isize;
                    let x = (p as usize % out_w) as isize + kx as isize - padding as isize;
                    *d = if y >= 0 && x >= 0 && y < h && x < w {
                        plane[(y * w + x) as usize]
                    } else {
                        0.0
                    };
                }
                row += 1;
            }
        }
    }
}

/// Writes an `out_channels x pixels.len()` matrix back into `out` at the given pixels.
pub(crate) fn scatter_columns(values: &[f32], pixels: &[u32], out: &mut FeatureTensor) {
    let n = pixels.len();
    for c in 0..out.channels {
        let src = &values[c * n..(c + 1) * n];
        let plane = out.plane_mut(c);
        for (&p, &v) in pixels.iter().zip(src) {
            plane[p as usize] = v;
        }
    }
}

/// Elementwise `max(x, slope * x)`.
pub fn leaky_relu(input: &FeatureTensor, slope: f32) -> FeatureTensor {
    input.map(|v| if v >= 0.0 { v } else { slope * v })
}

pub(crate) fn leaky_relu_in_place(values: &mut [f32], slope: f32) {
    for v in values {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

/// Depth-to-space: `out[c, y*f + i, x*f + j] = in[c*f*f + i*f + j, y, x]`.
pub fn pixel_shuffle(input: &FeatureTensor, factor: usize) -> Result<FeatureTensor> {
    let ff = factor * factor;
    if factor == 0 || !input.channels.is_multiple_of(ff) {
        return Err(Error::InvalidArgument(format!(
            "pixel_shuffle: {} channels not divisible by {factor}^2",
            input.channels
        )));
    }
    let (c_out, h, w) = (input.channels / ff, input.height, input.width);
    let (oh, ow) = (h * factor, w * factor);
    let mut out = FeatureTensor::zeros(c_out, oh, ow);
    for c in 0..c_out {
        for i in 0..factor {
            for j in 0..factor {
                let src = input.plane(c * ff + i * factor + j);
                let dst = out.plane_mut(c);
                for y in 0..h {
                    for x in 0..w {
                        dst[(y * factor + i) * ow + x * factor + j] = src[y * w + x];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Space-to-depth, the inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(input: &FeatureTensor, factor: usize) -> Result<FeatureTensor> {
    if factor == 0 || !input.height.is_multiple_of(factor) || !input.width.is_multiple_of(factor) {
        return Err(Error::InvalidArgument(format!(
            "pixel_unshuffle: {}x{} not divisible by {factor}",
            input.height, input.width
        )));
    }
    let ff = factor * factor;
    let (h, w) = (input.height / factor, input.width / factor);
    let iw = input.width;
    let mut out = FeatureTensor::zeros(input.channels * ff, h, w);
    for c in 0..input.channels {
        let src = input.plane(c);
        for i in 0..factor {
            for j in 0..factor {
                let dst = out.plane_mut(c * ff + i * factor + j);
                for y in 0..h {
                    for x in 0..w {
                        dst[y * w + x] = src[(y * factor + i) * iw + x * factor + j];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Bilinear enlargement with half-pixel centres (align-corners = false).
pub fn bilinear_upsample(input: &FeatureTensor, factor: usize) -> Result<FeatureTensor> {
    if factor == 0 {
        return Err(Error::InvalidArgument("bilinear_upsample: factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(input.clone());
    }
    let (c, h, w) = input.dims();
    let (oh, ow) = (h * factor, w * factor);
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        (0..n_out)
            .map(|o| {
                let s = ((o as f32 + 0.5) / factor as f32 - 0.5).max(0.0);
                let i0 = (s.floor() as usize).min(n_in - 1);
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, s - i0 as f32)
            })
            .collect()
    };
    let ys = taps(h, oh);
    let xs = taps(w, ow);
    let mut out = FeatureTensor::zeros(c, oh, ow);
    for ch in 0..c {
        let src = input.plane(ch);
        let dst = out.plane_mut(ch);
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst[oy * ow + ox] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_kernel(channels: usize) -> ConvWeights {
        let mut w = ConvWeights::zeros(channels, channels, 3);
        for c in 0..channels {
            w.weight_mut()[((c * channels + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        w
    }

    #[test]
    fn zero_kernel_passes_bias_only() {
        let input = FeatureTensor::new(1, 1, 1, vec![5.0]).unwrap();
        let w = ConvWeights::new(1, 1, 3, vec![0.0; 9], vec![0.5]).unwrap();
        let out = conv2d(&input, &w, 1).unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let input = FeatureTensor::filled(1, 3, 3, 1.0);
        let out = conv2d(&input, &identity_kernel(1), 1).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_empty() {
        let w = ConvWeights::zeros(2, 3, 3);
        let bad = FeatureTensor::zeros(2, 4, 4);
        assert!(matches!(conv2d(&bad, &w, 1), Err(Error::ShapeMismatch { .. })));
        let empty = FeatureTensor::zeros(3, 0, 4);
        assert!(matches!(conv2d(&empty, &w, 1), Err(Error::Empty { .. })));
    }

    #[test]
    fn conv_without_padding_shrinks() {
        let input = FeatureTensor::filled(1, 4, 5, 1.0);
        let w = ConvWeights::new(1, 1, 3, vec![1.0; 9], vec![0.0]).unwrap();
        let out = conv2d(&input, &w, 0).unwrap();
        assert_eq!(out.dims(), (1, 2, 3));
        assert!(out.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn leaky_relu_definition_and_limits() {
        let t = FeatureTensor::new(1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(leaky_relu(&t, 0.1).data(), &[-0.1, 0.0, 2.0]);
        assert_eq!(leaky_relu(&t, 0.0).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(leaky_relu(&t, 1.0), t);
    }

    #[test]
    fn pixel_shuffle_canonical_order() {
        let t = FeatureTensor::new(4, 1, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = pixel_shuffle(&t, 2).unwrap();
        assert_eq!(out.dims(), (1, 2, 2));
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pixel_shuffle(&t, 1).unwrap(), t);
        assert!(pixel_shuffle(&FeatureTensor::zeros(3, 1, 1), 2).is_err());
    }

    #[test]
    fn pixel_shuffle_round_trip() {
        let t = FeatureTensor::from_fn(8, 3, 2, |c, y, x| (c * 100 + y * 10 + x) as f32);
        let s = pixel_shuffle(&t, 2).unwrap();
        assert_eq!(s.dims(), (2, 6, 4));
        assert_eq!(pixel_unshuffle(&s, 2).unwrap(), t);
    }

    #[test]
    fn upsample_constant_and_identity() {
        let t = FeatureTensor::filled(2, 3, 5, 0.25);
        let up = bilinear_upsample(&t, 4).unwrap();
        assert_eq!(up.dims(), (2, 12, 20));
        assert!(up.data().iter().all(|&v| v == 0.25));
        assert_eq!(bilinear_upsample(&t, 1).unwrap(), t);
    }

    #[test]
    fn inputs_untouched() {
        let t = FeatureTensor::from_fn(4, 4, 4, |c, y, x| (c + y * x) as f32 - 3.0);
        let copy = t.clone();
        let _ = conv2d(&t, &identity_kernel(4), 1).unwrap();
        let _ = leaky_relu(&t, 0.2);
        let _ = pixel_shuffle(&t, 2).unwrap();
        let _ = bilinear_upsample(&t, 2).unwrap();
        assert_eq!(t, copy);
    }
}
