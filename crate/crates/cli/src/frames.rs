//! PNG frame folders.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ciaf::sparse::SpatialMask;
use ciaf::FeatureTensor;
use image::{GrayImage, RgbImage};

/// PNG files of `dir` in lexicographic order.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading frame folder {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        bail!("no PNG frames in {}", dir.display());
    }
    Ok(out)
}

pub fn read_rgb(path: &Path) -> Result<FeatureTensor> {
    let img = image::open(path)
        .with_context(|| format!("decoding {}", path.display()))?
        .to_rgb8();
    Ok(from_rgb8(&img))
}

pub fn from_rgb8(img: &RgbImage) -> FeatureTensor {
    let (w, h) = img.dimensions();
    FeatureTensor::from_fn(3, h as usize, w as usize, |c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
}

pub fn to_rgb8(t: &FeatureTensor) -> RgbImage {
    let (_, h, w) = t.dims();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |c| (t.get(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    })
}

/// Rounds to the 8-bit grid that a saved PNG would hold.
pub fn quantize(t: &FeatureTensor) -> FeatureTensor {
    t.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

/// Reads every frame of `dir` and checks they share one size.
pub fn read_folder(dir: &Path) -> Result<Vec<(String, FeatureTensor)>> {
    let mut frames: Vec<(String, FeatureTensor)> = Vec::new();
    for path in list_pngs(dir)? {
        let t = read_rgb(&path)?;
        if let Some((_, first)) = frames.first() {
            if first.dims() != t.dims() {
                bail!(
                    "{}: {}x{} frame, expected {}x{}",
                    path.display(),
                    t.width(),
                    t.height(),
                    first.width(),
                    first.height()
                );
            }
        }
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        frames.push((name, t));
    }
    Ok(frames)
}

pub fn write_rgb(path: &Path, t: &FeatureTensor) -> Result<()> {
    to_rgb8(t)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

/// White where the mask is active (computed), black where skipped.
pub fn write_mask(path: &Path, m: &SpatialMask) -> Result<()> {
    let (h, w) = (m.height(), m.width());
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        image::Luma([if m.is_active(y as usize * w + x as usize) {
            255
        } else {
            0
        }])
    });
    img.save(path).with_context(|| format!("writing {}", path.display()))
}
