use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ciaf::metrics::temporal_profile;
use ciaf::parse_sidecar;
use ciaf::sparse::{residual_mask, sparse_rate};

use crate::frames::{read_folder, write_mask, write_rgb};
use crate::report::{frame_type_name, p_frame_mean, write_json, MaskFrame, MaskStatsReport, Versions};

pub fn mask_stats(sidecar: &Path, report: Option<&Path>, emit_masks: Option<&Path>) -> Result<()> {
    let bytes = fs::read(sidecar).with_context(|| format!("reading sidecar {}", sidecar.display()))?;
    let stream = parse_sidecar(&bytes).with_context(|| format!("parsing sidecar {}", sidecar.display()))?;
    if let Some(dir) = emit_masks {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut frames = Vec::with_capacity(stream.frame_count());
    for (i, f) in stream.frames().iter().enumerate() {
        let m = residual_mask(&f.residual, f.frame_type);
        if let Some(dir) = emit_masks {
            write_mask(&dir.join(format!("mask_{i:04}.png")), &m)?;
        }
        frames.push(MaskFrame {
            index: i,
            frame_type: frame_type_name(f.frame_type),
            active_pixels: m.active_count() as u64,
            pixels: m.len() as u64,
            sparse_rate: sparse_rate(&m),
        });
    }
    let mean = p_frame_mean(
        stream
            .frames()
            .iter()
            .zip(&frames)
            .map(|(f, r)| (f.frame_type, r.sparse_rate)),
    );
    write_json(
        report,
        &MaskStatsReport {
            command: "mask-stats",
            versions: Versions::current(),
            width: stream.width(),
            height: stream.height(),
            frames,
            mean_sparse_rate: mean,
        },
    )
}

pub fn profile(frames_dir: &Path, row: usize, out: &Path) -> Result<()> {
    let frames: Vec<_> = read_folder(frames_dir)?.into_iter().map(|(_, f)| f).collect();
    let h = frames[0].height();
    if row >= h {
        bail!("row {row} is outside frames of height {h}");
    }
    let strip = temporal_profile(&frames, row)?;
    write_rgb(out, &strip)?;
    eprintln!(
        "wrote {}x{} temporal profile to {}",
        strip.width(),
        strip.height(),
        out.display()
    );
    Ok(())
}
