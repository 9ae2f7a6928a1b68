//! Residual-gated sparse execution.
//!
//! At test time a pixel is processed by the body Resblocks only when its codec
//! residual is non-zero; every other pixel takes the previous frame's output of
//! the same Resblock, warped by the current motion. The train-time path instead
//! draws a soft mask from a Gumbel-softmax over two mask logits.

use rand::distr::Open01;
use rand::Rng;

use crate::error::{shape_mismatch, Error, Result};
use crate::sidecar::{FrameType, ResidualMap};
use crate::tensor::{conv2d, conv2d_at, fmt_dims, leaky_relu_in_place, scatter_columns, ConvWeights, FeatureTensor};

/// Negative slope of the Resblock activation.
pub const LEAKY_SLOPE: f32 = 0.1;

/// A pixel is active when its mask value is at least this.
pub const ACTIVE_THRESHOLD: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    Soft,
    Hard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMask {
    height: usize,
    width: usize,
    values: Vec<f32>,
    mode: MaskMode,
}

impl SpatialMask {
    pub fn new(height: usize, width: usize, values: Vec<f32>, mode: MaskMode) -> Result<Self> {
        if values.len() != height * width {
            return Err(shape_mismatch("SpatialMask::new", height * width, values.len()));
        }
        let ok = match mode {
            MaskMode::Hard => values.iter().all(|&v| v == 0.0 || v == 1.0),
            MaskMode::Soft => values.iter().all(|&v| (0.0..=1.0).contains(&v)),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{mode:?} mask holds values outside its range"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
            mode,
        })
    }

    pub fn from_active(height: usize, width: usize, active: impl IntoIterator<Item = bool>) -> Self {
        let values: Vec<f32> = active.into_iter().map(|a| if a { 1.0 } else { 0.0 }).collect();
        assert_eq!(values.len(), height * width);
        Self {
            height,
            width,
            values,
            mode: MaskMode::Hard,
        }
    }

    pub fn all_active(height: usize, width: usize) -> Self {
        Self::from_active(height, width, std::iter::repeat_n(true, height * width))
    }

    pub fn all_inactive(height: usize, width: usize) -> Self {
        Self::from_active(height, width, std::iter::repeat_n(false, height * width))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.values[i] >= ACTIVE_THRESHOLD
    }

    pub fn active_count(&self) -> usize {
        self.values.iter().filter(|&&v| v >= ACTIVE_THRESHOLD).count()
    }

    /// Flat indices of active pixels, ascending.
    pub fn active_pixels(&self) -> Vec<u32> {
        (0..self.values.len() as u32)
            .filter(|&i| self.is_active(i as usize))
            .collect()
    }

    pub fn complement(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| 1.0 - v).collect(),
            ..self.clone()
        }
    }

    /// Thresholds a soft mask into a hard one.
    pub fn harden(&self) -> Self {
        Self::from_active(
            self.height,
            self.width,
            self.values.iter().map(|&v| v >= ACTIVE_THRESHOLD),
        )
    }
}

/// Test-time mask: active where the residual is non-zero. I-frames are fully active.
pub fn residual_mask(r: &ResidualMap, frame_type: FrameType) -> SpatialMask {
    match frame_type {
        FrameType::I => SpatialMask::all_active(r.height(), r.width()),
        FrameType::P => SpatialMask::from_active(r.height(), r.width(), r.values().iter().map(|&v| v != 0)),
    }
}

/// Fraction of pixels skipped.
pub fn sparse_rate(m: &SpatialMask) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    (m.len() - m.active_count()) as f64 / m.len() as f64
}

/// Mean mask value, the sparsity regulariser.
pub fn sparsity_loss(m: &SpatialMask) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.values.iter().map(|&v| v as f64).sum::<f64>() / m.len() as f64
}

/// Probability assigned to the first (keep) channel by a tempered two-way
/// softmax of perturbed logits.
pub fn soft_mask_value(f_keep: f64, f_skip: f64, g_keep: f64, g_skip: f64, tau: f64) -> f64 {
    let a = (f_keep + g_keep) / tau;
    let b = (f_skip + g_skip) / tau;
    // exp(a) / (exp(a) + exp(b)) without overflow
    if a >= b {
        1.0 / (1.0 + (b - a).exp())
    } else {
        let e = (a - b).exp();
        e / (1.0 + e)
    }
}

/// Closed-form derivatives of [`soft_mask_value`] with respect to the two logits.
pub fn soft_mask_grad(f_keep: f64, f_skip: f64, g_keep: f64, g_skip: f64, tau: f64) -> (f64, f64) {
    let m = soft_mask_value(f_keep, f_skip, g_keep, g_skip, tau);
    let d = m * (1.0 - m) / tau;
    (d, -d)
}

fn check_gumbel(logits: &FeatureTensor, tau: f64, noise: &FeatureTensor) -> Result<()> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if logits.channels() != 2 {
        return Err(shape_mismatch("gumbel_mask (logit channels)", 2, logits.channels()));
    }
    if noise.dims() != logits.dims() {
        return Err(shape_mismatch(
            "gumbel_mask (noise)",
            fmt_dims(logits.dims()),
            fmt_dims(noise.dims()),
        ));
    }
    Ok(())
}

/// Both channels of the Gumbel-softmax, `2 x H x W`; channel 0 is the mask.
pub fn gumbel_softmax(logits: &FeatureTensor, tau: f64, noise: &FeatureTensor) -> Result<FeatureTensor> {
    check_gumbel(logits, tau, noise)?;
    let (_, h, w) = logits.dims();
    let mut out = FeatureTensor::zeros(2, h, w);
    for i in 0..h * w {
        let (f0, f1) = (logits.plane(0)[i] as f64, logits.plane(1)[i] as f64);
        let (g0, g1) = (noise.plane(0)[i] as f64, noise.plane(1)[i] as f64);
        out.plane_mut(0)[i] = soft_mask_value(f0, f1, g0, g1, tau) as f32;
        out.plane_mut(1)[i] = soft_mask_value(f1, f0, g1, g0, tau) as f32;
    }
    Ok(out)
}

/// Soft spatial mask from mask logits and Gumbel noise.
pub fn gumbel_mask(logits: &FeatureTensor, tau: f64, noise: &FeatureTensor) -> Result<SpatialMask> {
    let probs = gumbel_softmax(logits, tau, noise)?;
    let (_, h, w) = probs.dims();
    SpatialMask::new(h, w, probs.plane(0).to_vec(), MaskMode::Soft)
}

/// Derivative of each mask value w.r.t. the logits at its own pixel, `2 x H x W`
/// (the Jacobian is diagonal across pixels).
pub fn gumbel_mask_grad(logits: &FeatureTensor, tau: f64, noise: &FeatureTensor) -> Result<FeatureTensor> {
    check_gumbel(logits, tau, noise)?;
    let (_, h, w) = logits.dims();
    let mut out = FeatureTensor::zeros(2, h, w);
    for i in 0..h * w {
        let (d0, d1) = soft_mask_grad(
            logits.plane(0)[i] as f64,
            logits.plane(1)[i] as f64,
            noise.plane(0)[i] as f64,
            noise.plane(1)[i] as f64,
            tau,
        );
        out.plane_mut(0)[i] = d0 as f32;
        out.plane_mut(1)[i] = d1 as f32;
    }
    Ok(out)
}

/// Standard Gumbel(0, 1) samples via `-ln(-ln u)`, `u` uniform on (0, 1).
pub fn sample_gumbel_noise<R: Rng + ?Sized>(
    rng: &mut R,
    channels: usize,
    height: usize,
    width: usize,
) -> FeatureTensor {
    FeatureTensor::from_fn(channels, height, width, |_, _, _| {
        let u: f64 = rng.sample(Open01);
        (-(-u.ln()).ln()) as f32
    })
}

/// Annealing of the sparsity-loss weight and the Gumbel temperature over epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnealSchedule {
    pub t_epoch: f64,
    pub t_temp: f64,
    pub lambda0: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            t_epoch: 20.0,
            t_temp: 40.0,
            lambda0: 0.004,
        }
    }
}

impl AnnealSchedule {
    pub fn new(t_epoch: f64, t_temp: f64, lambda0: f64) -> Result<Self> {
        if !(t_epoch > 0.0 && t_temp > 0.0 && lambda0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "schedule constants must be positive (T_epoch={t_epoch}, T_temp={t_temp}, lambda0={lambda0})"
            )));
        }
        Ok(Self {
            t_epoch,
            t_temp,
            lambda0,
        })
    }

    /// Loss weight ramps linearly to `lambda0` over `t_epoch` epochs, then holds.
    pub fn lambda_at(&self, epoch: u32) -> f64 {
        (epoch as f64 / self.t_epoch).min(1.0) * self.lambda0
    }

    /// Temperature starts at 1 and decays linearly to a floor of 0.5.
    pub fn tau_at(&self, epoch: u32) -> f64 {
        (1.0 - epoch as f64 / self.t_temp).max(0.5)
    }
}

/// Kernel size and channel counts of a stride-1 convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvShape {
    pub fn of(w: &ConvWeights) -> Self {
        Self {
            kernel: w.kernel(),
            in_channels: w.in_channels(),
            out_channels: w.out_channels(),
        }
    }

    pub fn macs_per_pixel(&self) -> u64 {
        (self.kernel * self.kernel * self.in_channels * self.out_channels) as u64
    }
}

/// Multiply-accumulates of one convolution layer: `k^2 * C_in * C_out` per
/// evaluated pixel, where a mask restricts evaluation to its active pixels.
pub fn count_flops(layer: ConvShape, height: usize, width: usize, mask: Option<&SpatialMask>) -> u64 {
    let pixels = match mask {
        Some(m) => m.active_count(),
        None => height * width,
    };
    layer.macs_per_pixel() * pixels as u64
}

fn check_resblock(input: &FeatureTensor, w1: &ConvWeights, w2: &ConvWeights) -> Result<()> {
    let c = input.channels();
    for (name, w) in [("conv1", w1), ("conv2", w2)] {
        if w.in_channels() != c || w.out_channels() != c {
            return Err(shape_mismatch(
                "resblock",
                format!("{name} {c}->{c}"),
                format!("{name} {}->{}", w.in_channels(), w.out_channels()),
            ));
        }
        if w.kernel() % 2 == 0 {
            return Err(Error::InvalidArgument(format!("resblock {name}: kernel must be odd")));
        }
    }
    Ok(())
}

/// Dense Resblock: `x + conv2(lrelu(conv1(x)))` with same-size padding.
pub fn resblock(input: &FeatureTensor, w1: &ConvWeights, w2: &ConvWeights) -> Result<FeatureTensor> {
    check_resblock(input, w1, w2)?;
    let mut mid = conv2d(input, w1, w1.kernel() / 2)?;
    leaky_relu_in_place(mid.data_mut(), LEAKY_SLOPE);
    let branch = conv2d(&mid, w2, w2.kernel() / 2)?;
    input.add(&branch)
}

/// Pixels within `radius` (Chebyshev) of any listed pixel, ascending.
pub fn dilate(pixels: &[u32], height: usize, width: usize, radius: usize) -> Vec<u32> {
    let mut hit = vec![false; height * width];
    let r = radius as isize;
    for &p in pixels {
        let (y, x) = ((p as usize / width) as isize, (p as usize % width) as isize);
        for yy in (y - r).max(0)..=(y + r).min(height as isize - 1) {
            for xx in (x - r).max(0)..=(x + r).min(width as isize - 1) {
                hit[yy as usize * width + xx as usize] = true;
            }
        }
    }
    (0..hit.len() as u32).filter(|&i| hit[i as usize]).collect()
}

/// Pixels at which [`sparse_resblock`] evaluates `conv1` for a given mask: the
/// active set grown by the `conv2` receptive field.
pub fn resblock_support(mask: &SpatialMask, w2: &ConvWeights) -> Vec<u32> {
    dilate(&mask.active_pixels(), mask.height(), mask.width(), w2.kernel() / 2)
}

/// Resblock evaluated only at active pixels; inactive pixels take `cached_warped`.
///
/// Active pixels read their full neighbourhood of the dense input, so with an
/// all-active mask the result equals [`resblock`]. The intermediate activation
/// is computed over the active set plus the `conv2` halo, which is what makes
/// that equivalence exact.
pub fn sparse_resblock(
    input: &FeatureTensor,
    w1: &ConvWeights,
    w2: &ConvWeights,
    mask: &SpatialMask,
    cached_warped: &FeatureTensor,
) -> Result<FeatureTensor> {
    check_resblock(input, w1, w2)?;
    let (c, h, w) = input.dims();
    if cached_warped.dims() != (c, h, w) {
        return Err(shape_mismatch(
            "sparse_resblock (cache)",
            fmt_dims((c, h, w)),
            fmt_dims(cached_warped.dims()),
        ));
    }
    if (mask.height(), mask.width()) != (h, w) {
        return Err(shape_mismatch(
            "sparse_resblock (mask)",
            format!("{h}x{w}"),
            format!("{}x{}", mask.height(), mask.width()),
        ));
    }
    if mask.mode() != MaskMode::Hard {
        return Err(Error::InvalidArgument("sparse_resblock needs a hard mask".into()));
    }

    let active = mask.active_pixels();
    if active.is_empty() {
        return Ok(cached_warped.clone());
    }
    let support = resblock_support(mask, w2);

    let mut mid_cols = conv2d_at(input, w1, w1.kernel() / 2, w, &support)?;
    leaky_relu_in_place(&mut mid_cols, LEAKY_SLOPE);
    let mut mid = FeatureTensor::zeros(c, h, w);
    scatter_columns(&mid_cols, &support, &mut mid);

    let branch = conv2d_at(&mid, w2, w2.kernel() / 2, w, &active)?;
    let n = active.len();
    let mut out = cached_warped.clone();
    for ch in 0..c {
        let x = input.plane(ch);
        let b = &branch[ch * n..(ch + 1) * n];
        let dst = out.plane_mut(ch);
        for (&p, &v) in active.iter().zip(b) {
            dst[p as usize] = x[p as usize] + v;
        }
    }
    Ok(out)
}

/// Previous-step output of every body Resblock.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerCache {
    entries: Vec<FeatureTensor>,
}

impl LayerCache {
    pub fn zeros(blocks: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            entries: vec![FeatureTensor::zeros(channels, height, width); blocks],
        }
    }

    pub fn from_entries(entries: Vec<FeatureTensor>) -> Result<Self> {
        if let Some(first) = entries.first() {
            if let Some(bad) = entries.iter().find(|e| e.dims() != first.dims()) {
                return Err(shape_mismatch(
                    "LayerCache",
                    fmt_dims(first.dims()),
                    fmt_dims(bad.dims()),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &FeatureTensor {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[FeatureTensor] {
        &self.entries
    }

    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.entries.first().map(|e| e.dims())
    }
}
