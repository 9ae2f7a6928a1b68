//! Unidirectional recurrent super-resolution cell.
//!
//! Per frame:
//!
//! 1. warp the previous hidden features with the frame's motion (MV variants),
//! 2. head conv over `[frame, warped hidden]`, always dense,
//! 3. `num_resblocks` Resblocks, dense or residual-gated sparse,
//! 4. tail conv, whose output is the next hidden state,
//! 5. upsampler: conv, `log2(scale)` pixel-shuffle x2 stages, output conv, plus a
//!    bilinear global skip of the input frame.

use serde::{Deserialize, Serialize};

use crate::align::{build_motion_tensor, warp};
use crate::error::{shape_mismatch, Error, Result};
use crate::sidecar::SidecarFrame;
use crate::sparse::{
    count_flops, resblock, resblock_support, residual_mask, sparse_rate, sparse_resblock, ConvShape, LayerCache,
    SpatialMask, LEAKY_SLOPE,
};
use crate::tensor::{bilinear_upsample, conv2d, fmt_dims, leaky_relu, pixel_shuffle, ConvWeights, FeatureTensor};
use crate::weights::WeightBundle;

pub const KERNEL: usize = 3;
/// Hidden width of the train-time mask predictor.
pub const MASK_HIDDEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// No alignment: the previous hidden state is used as is.
    Baseline,
    /// Hidden state warped with codec motion vectors.
    MvAligned,
    /// MV alignment plus residual-gated sparse Resblocks.
    MvResidualSparse,
}

impl Variant {
    pub fn uses_motion(self) -> bool {
        !matches!(self, Variant::Baseline)
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Variant::MvResidualSparse)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_resblocks: usize,
    pub channels: usize,
    pub scale: usize,
    pub input_channels: usize,
    pub variant: Variant,
}

impl ModelConfig {
    /// 7 Resblocks, 128 channels, 4x upscaling of RGB input.
    pub fn new(variant: Variant) -> Self {
        Self {
            num_resblocks: 7,
            channels: 128,
            scale: 4,
            input_channels: 3,
            variant,
        }
    }

    pub fn with_variant(self, variant: Variant) -> Self {
        Self { variant, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_resblocks == 0 || self.channels == 0 || self.input_channels == 0 {
            return Err(Error::InvalidArgument("model sizes must be positive".into()));
        }
        if !self.scale.is_power_of_two() || self.scale < 2 {
            return Err(Error::InvalidArgument(format!(
                "scale {} is not a power of two >= 2",
                self.scale
            )));
        }
        if !self.channels.is_multiple_of(self.scale * self.scale) {
            return Err(Error::InvalidArgument(format!(
                "{} channels not divisible by scale^2 = {}",
                self.channels,
                self.scale * self.scale
            )));
        }
        Ok(())
    }

    /// Channels entering the output conv after all pixel-shuffle stages.
    pub fn shuffled_channels(&self) -> usize {
        self.channels / (self.scale * self.scale)
    }

    /// Every parameter tensor name with its shape.
    pub fn required_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let k = KERNEL;
        let c = self.channels;
        let mut out = Vec::new();
        let mut conv = |name: &str, cout: usize, cin: usize| {
            out.push((format!("{name}.weight"), vec![cout, cin, k, k]));
            out.push((format!("{name}.bias"), vec![cout]));
        };
        conv("head", c, self.input_channels + c);
        for i in 0..self.num_resblocks {
            conv(&format!("body.{i}.conv1"), c, c);
            conv(&format!("body.{i}.conv2"), c, c);
        }
        conv("tail", c, c);
        conv("up", c, c);
        conv("out", self.input_channels, self.shuffled_channels());
        conv("mask.0", MASK_HIDDEN, self.input_channels + c);
        conv("mask.1", MASK_HIDDEN, MASK_HIDDEN);
        conv("mask.2", 2, MASK_HIDDEN);
        out
    }
}

/// Hidden features `h_{t-1}` plus, for the sparse variant, each Resblock's
/// previous output.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub hidden: FeatureTensor,
    pub cache: Option<LayerCache>,
}

pub fn init_state(cfg: &ModelConfig, height: usize, width: usize) -> RecurrentState {
    RecurrentState {
        hidden: FeatureTensor::zeros(cfg.channels, height, width),
        cache: cfg
            .variant
            .is_sparse()
            .then(|| LayerCache::zeros(cfg.num_resblocks, cfg.channels, height, width)),
    }
}

/// Per-frame statistics. MAC counts follow `k^2 * C_in * C_out` per evaluated pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub sparse_rate: f64,
    pub active_pixels: u64,
    pub pixels: u64,
    /// Body MACs counted at active pixels only.
    pub body_macs: u64,
    pub body_macs_dense: u64,
    /// Body MACs actually executed, including the first conv's halo around
    /// active pixels.
    pub body_macs_executed: u64,
    pub total_macs: u64,
    pub total_macs_dense: u64,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub hr_frame: FeatureTensor,
    pub state: RecurrentState,
    pub report: FrameReport,
    pub mask: SpatialMask,
}

struct BodyBlock {
    conv1: ConvWeights,
    conv2: ConvWeights,
}

/// A model with loaded weights. Immutable; per-sequence state lives in [`RecurrentState`].
pub struct VsrModel {
    cfg: ModelConfig,
    head: ConvWeights,
    body: Vec<BodyBlock>,
    tail: ConvWeights,
    up: ConvWeights,
    out: ConvWeights,
    mask_net: [ConvWeights; 3],
}

fn conv_from(bundle: &WeightBundle, name: &str) -> Result<ConvWeights> {
    let w = bundle.get(&format!("{name}.weight"))?;
    let b = bundle.get(&format!("{name}.bias"))?;
    ConvWeights::new(w.shape[0], w.shape[1], w.shape[2], w.data.clone(), b.data.clone())
}

impl VsrModel {
    /// Builds a model from a bundle; `cfg` must describe the same architecture
    /// as the bundle but may select a different variant.
    pub fn new(cfg: ModelConfig, bundle: &WeightBundle) -> Result<Self> {
        cfg.validate()?;
        if bundle.config.with_variant(cfg.variant) != cfg {
            return Err(shape_mismatch(
                "VsrModel::new (architecture)",
                format!("{cfg:?}"),
                format!("{:?}", bundle.config),
            ));
        }
        bundle.validate()?;
        let body = (0..cfg.num_resblocks)
            .map(|i| {
                Ok(BodyBlock {
                    conv1: conv_from(bundle, &format!("body.{i}.conv1"))?,
                    conv2: conv_from(bundle, &format!("body.{i}.conv2"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg,
            head: conv_from(bundle, "head")?,
            body,
            tail: conv_from(bundle, "tail")?,
            up: conv_from(bundle, "up")?,
            out: conv_from(bundle, "out")?,
            mask_net: [
                conv_from(bundle, "mask.0")?,
                conv_from(bundle, "mask.1")?,
                conv_from(bundle, "mask.2")?,
            ],
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn init_state(&self, height: usize, width: usize) -> RecurrentState {
        init_state(&self.cfg, height, width)
    }

    /// Dense body MACs for one `height x width` frame.
    pub fn body_macs_dense(&self, height: usize, width: usize) -> u64 {
        self.body
            .iter()
            .map(|b| {
                count_flops(ConvShape::of(&b.conv1), height, width, None)
                    + count_flops(ConvShape::of(&b.conv2), height, width, None)
            })
            .sum()
    }

    /// MACs outside the body (head, tail, upsampler), which always run dense.
    pub fn non_body_macs(&self, height: usize, width: usize) -> u64 {
        let s = self.cfg.scale;
        count_flops(ConvShape::of(&self.head), height, width, None)
            + count_flops(ConvShape::of(&self.tail), height, width, None)
            + count_flops(ConvShape::of(&self.up), height, width, None)
            + count_flops(ConvShape::of(&self.out), height * s, width * s, None)
    }

    fn check_inputs(&self, frame: &FeatureTensor, codec: &SidecarFrame, state: &RecurrentState) -> Result<()> {
        let (c, h, w) = frame.dims();
        if c != self.cfg.input_channels {
            return Err(shape_mismatch("step (frame channels)", self.cfg.input_channels, c));
        }
        if h == 0 || w == 0 {
            return Err(Error::Empty { op: "step" });
        }
        for (what, dims) in [
            ("motion", (codec.motion.height(), codec.motion.width())),
            ("residual", (codec.residual.height(), codec.residual.width())),
        ] {
            if dims != (h, w) {
                return Err(shape_mismatch(
                    "step (codec side data)",
                    format!("{what} {h}x{w}"),
                    format!("{what} {}x{}", dims.0, dims.1),
                ));
            }
        }
        let expected = (self.cfg.channels, h, w);
        if state.hidden.dims() != expected {
            return Err(shape_mismatch(
                "step (hidden state)",
                fmt_dims(expected),
                fmt_dims(state.hidden.dims()),
            ));
        }
        if self.cfg.variant.is_sparse() {
            let cache = state
                .cache
                .as_ref()
                .ok_or(Error::UninitializedState("sparse variant needs a layer cache"))?;
            if cache.len() != self.cfg.num_resblocks {
                return Err(shape_mismatch(
                    "step (layer cache)",
                    self.cfg.num_resblocks,
                    cache.len(),
                ));
            }
            if cache.dims() != Some(expected) {
                return Err(shape_mismatch(
                    "step (layer cache)",
                    fmt_dims(expected),
                    format!("{:?}", cache.dims()),
                ));
            }
        }
        Ok(())
    }

    /// Processes one low-resolution frame.
    pub fn step(&self, frame: &FeatureTensor, codec: &SidecarFrame, state: &RecurrentState) -> Result<StepOutput> {
        self.check_inputs(frame, codec, state)?;
        let (_, h, w) = frame.dims();
        let variant = self.cfg.variant;

        let motion = variant.uses_motion().then(|| build_motion_tensor(&codec.motion));
        let warped_hidden = match &motion {
            Some(m) => warp(&state.hidden, m)?,
            None => state.hidden.clone(),
        };

        let head_in = FeatureTensor::concat_channels(&[frame, &warped_hidden])?;
        let mut x = leaky_relu(&conv2d(&head_in, &self.head, KERNEL / 2)?, LEAKY_SLOPE);

        let body_dense = self.body_macs_dense(h, w);
        let (mask, cache, body_macs, body_executed) = if variant.is_sparse() {
            let mask = residual_mask(&codec.residual, codec.frame_type);
            let prev = state.cache.as_ref().expect("checked in check_inputs");
            let motion = motion.as_ref().expect("sparse variant uses motion");
            let skip_any = mask.active_count() < mask.len();
            let mut entries = Vec::with_capacity(self.body.len());
            let (mut counted, mut executed) = (0u64, 0u64);
            for (i, b) in self.body.iter().enumerate() {
                let cached = if skip_any {
                    warp(prev.get(i), motion)?
                } else {
                    // fully active: the cache is never read
                    FeatureTensor::zeros(x.channels(), h, w)
                };
                x = sparse_resblock(&x, &b.conv1, &b.conv2, &mask, &cached)?;
                entries.push(x.clone());
                counted += count_flops(ConvShape::of(&b.conv1), h, w, Some(&mask))
                    + count_flops(ConvShape::of(&b.conv2), h, w, Some(&mask));
                if mask.active_count() > 0 {
                    executed += ConvShape::of(&b.conv1).macs_per_pixel()
                        * resblock_support(&mask, &b.conv2).len() as u64
                        + ConvShape::of(&b.conv2).macs_per_pixel() * mask.active_count() as u64;
                }
            }
            (mask, Some(LayerCache::from_entries(entries)?), counted, executed)
        } else {
            for b in &self.body {
                x = resblock(&x, &b.conv1, &b.conv2)?;
            }
            (SpatialMask::all_active(h, w), None, body_dense, body_dense)
        };

        let hidden = conv2d(&x, &self.tail, KERNEL / 2)?;
        let hr_frame = self.upsample(&hidden, frame)?;

        let non_body = self.non_body_macs(h, w);
        let report = FrameReport {
            sparse_rate: sparse_rate(&mask),
            active_pixels: mask.active_count() as u64,
            pixels: (h * w) as u64,
            body_macs,
            body_macs_dense: body_dense,
            body_macs_executed: body_executed,
            total_macs: non_body + body_macs,
            total_macs_dense: non_body + body_dense,
        };
        Ok(StepOutput {
            hr_frame,
            state: RecurrentState { hidden, cache },
            report,
            mask,
        })
    }

    fn upsample(&self, hidden: &FeatureTensor, frame: &FeatureTensor) -> Result<FeatureTensor> {
        let mut y = leaky_relu(&conv2d(hidden, &self.up, KERNEL / 2)?, LEAKY_SLOPE);
        let mut s = self.cfg.scale;
        while s > 1 {
            y = pixel_shuffle(&y, 2)?;
            s /= 2;
        }
        let residual = conv2d(&y, &self.out, KERNEL / 2)?;
        residual.add(&bilinear_upsample(frame, self.cfg.scale)?)
    }

    /// Forward pass of the train-time mask predictor: two mask logits per pixel
    /// from the current frame and the motion-warped previous hidden features.
    pub fn mask_logits(&self, frame: &FeatureTensor, warped_hidden: &FeatureTensor) -> Result<FeatureTensor> {
        let input = FeatureTensor::concat_channels(&[frame, warped_hidden])?;
        let a = leaky_relu(&conv2d(&input, &self.mask_net[0], KERNEL / 2)?, LEAKY_SLOPE);
        let b = leaky_relu(&conv2d(&a, &self.mask_net[1], KERNEL / 2)?, LEAKY_SLOPE);
        conv2d(&b, &self.mask_net[2], KERNEL / 2)
    }

    /// Warps the state's hidden features for `codec` the same way `step` does.
    pub fn warped_hidden(&self, codec: &SidecarFrame, state: &RecurrentState) -> Result<FeatureTensor> {
        if self.cfg.variant.uses_motion() {
            warp(&state.hidden, &build_motion_tensor(&codec.motion))
        } else {
            Ok(state.hidden.clone())
        }
    }
}
