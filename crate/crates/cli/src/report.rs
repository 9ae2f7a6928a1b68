//! JSON reports. Layout is described by `docs/report.schema.json`.

use std::path::Path;

use anyhow::{Context, Result};
use ciaf::{FrameReport, FrameType, ModelConfig};
use serde::Serialize;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Versions {
    pub report_schema: u32,
    pub sidecar_format: u16,
    pub weights_format: u32,
    pub tool: &'static str,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            report_schema: REPORT_SCHEMA_VERSION,
            sidecar_format: ciaf::sidecar::VERSION,
            weights_format: ciaf::weights::WEIGHTS_VERSION,
            tool: env!("CARGO_PKG_VERSION"),
        }
    }
}

pub fn frame_type_name(t: FrameType) -> &'static str {
    match t {
        FrameType::I => "I",
        FrameType::P => "P",
    }
}

#[derive(Serialize)]
pub struct UpscaleFrame {
    pub index: usize,
    pub name: String,
    pub frame_type: &'static str,
    #[serde(flatten)]
    pub costs: FrameReport,
    pub wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
}

#[derive(Serialize)]
pub struct UpscaleAggregate {
    /// Averaged over P-frames; I-frames are never skipped.
    pub mean_sparse_rate: f64,
    pub body_macs: u64,
    pub body_macs_dense: u64,
    pub body_macs_executed: u64,
    pub total_macs: u64,
    pub total_macs_dense: u64,
    pub body_saving: f64,
    pub total_saving: f64,
    pub wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
}

#[derive(Serialize)]
pub struct UpscaleReport {
    pub command: &'static str,
    pub versions: Versions,
    pub config: ModelConfig,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<UpscaleFrame>,
    pub aggregate: UpscaleAggregate,
}

#[derive(Serialize)]
pub struct MaskFrame {
    pub index: usize,
    pub frame_type: &'static str,
    pub active_pixels: u64,
    pub pixels: u64,
    pub sparse_rate: f64,
}

#[derive(Serialize)]
pub struct MaskStatsReport {
    pub command: &'static str,
    pub versions: Versions,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<MaskFrame>,
    /// Averaged over P-frames.
    pub mean_sparse_rate: f64,
}

/// Mean over P-frames of `rate`, 0 when there are none.
pub fn p_frame_mean(items: impl IntoIterator<Item = (FrameType, f64)>) -> f64 {
    let (sum, n) = items
        .into_iter()
        .filter(|(t, _)| *t == FrameType::P)
        .fold((0.0, 0usize), |(s, n), (_, r)| (s + r, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn saving(used: u64, dense: u64) -> f64 {
    if dense == 0 {
        0.0
    } else {
        1.0 - used as f64 / dense as f64
    }
}

pub fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing report {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
