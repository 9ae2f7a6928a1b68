use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ciaf::metrics::{psnr_y, ssim_rgb};
use ciaf::{load_weights, parse_sidecar, Variant, VsrModel};

use crate::frames::{quantize, read_folder, write_mask, write_rgb};
use crate::report::{
    frame_type_name, p_frame_mean, saving, write_json, UpscaleAggregate, UpscaleFrame, UpscaleReport, Versions,
};

pub struct UpscaleArgs<'a> {
    pub frames_dir: &'a Path,
    pub sidecar: &'a Path,
    pub weights: &'a Path,
    pub out_dir: &'a Path,
    pub variant: Variant,
    pub gt: Option<&'a Path>,
    pub report: Option<PathBuf>,
    pub emit_masks: bool,
}

pub fn run(args: UpscaleArgs) -> Result<()> {
    let frames = read_folder(args.frames_dir)?;
    let bytes = fs::read(args.sidecar).with_context(|| format!("reading sidecar {}", args.sidecar.display()))?;
    let stream = parse_sidecar(&bytes).with_context(|| format!("parsing sidecar {}", args.sidecar.display()))?;
    if stream.frame_count() != frames.len() {
        bail!(
            "{} frames in {} but the sidecar describes {}",
            frames.len(),
            args.frames_dir.display(),
            stream.frame_count()
        );
    }
    let (_, h, w) = frames[0].1.dims();
    if (stream.width(), stream.height()) != (w, h) {
        bail!(
            "frames are {w}x{h} but the sidecar is {}x{}",
            stream.width(),
            stream.height()
        );
    }
    let wbytes = fs::read(args.weights).with_context(|| format!("reading weights {}", args.weights.display()))?;
    let bundle = load_weights(&wbytes).with_context(|| format!("loading weights {}", args.weights.display()))?;
    let cfg = bundle.config.with_variant(args.variant);
    let model = VsrModel::new(cfg, &bundle)?;
    let (hh, hw) = (h * cfg.scale, w * cfg.scale);

    let gt = match args.gt {
        Some(dir) => {
            let gt = read_folder(dir)?;
            if gt.len() != frames.len() {
                bail!("{} ground-truth frames for {} inputs", gt.len(), frames.len());
            }
            if gt[0].1.dims() != (3, hh, hw) {
                bail!(
                    "ground truth is {}x{}, expected {hw}x{hh}",
                    gt[0].1.width(),
                    gt[0].1.height()
                );
            }
            Some(gt)
        }
        None => None,
    };

    fs::create_dir_all(args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mask_dir = args.out_dir.join("masks");
    if args.emit_masks {
        fs::create_dir_all(&mask_dir)?;
    }

    let mut state = model.init_state(h, w);
    let mut rows = Vec::with_capacity(frames.len());
    for (i, ((name, frame), codec)) in frames.iter().zip(stream.frames()).enumerate() {
        let start = Instant::now();
        let out = model
            .step(frame, codec, &state)
            .with_context(|| format!("frame {i} ({name})"))?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let hr = quantize(&out.hr_frame);
        write_rgb(&args.out_dir.join(name), &hr)?;
        if args.emit_masks {
            write_mask(&mask_dir.join(name), &out.mask)?;
        }
        let (psnr, ssim) = match &gt {
            Some(gt) => (Some(psnr_y(&hr, &gt[i].1)?), Some(ssim_rgb(&hr, &gt[i].1)?)),
            None => (None, None),
        };
        rows.push(UpscaleFrame {
            index: i,
            name: name.clone(),
            frame_type: frame_type_name(codec.frame_type),
            costs: out.report,
            wall_ms,
            psnr_y: psnr,
            ssim,
        });
        state = out.state;
    }

    let sum = |f: fn(&UpscaleFrame) -> u64| rows.iter().map(f).sum::<u64>();
    let mean = |f: fn(&UpscaleFrame) -> Option<f64>| {
        let v: Option<Vec<f64>> = rows.iter().map(f).collect();
        v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    let aggregate = UpscaleAggregate {
        mean_sparse_rate: p_frame_mean(
            stream
                .frames()
                .iter()
                .zip(&rows)
                .map(|(c, r)| (c.frame_type, r.costs.sparse_rate)),
        ),
        body_macs: sum(|r| r.costs.body_macs),
        body_macs_dense: sum(|r| r.costs.body_macs_dense),
        body_macs_executed: sum(|r| r.costs.body_macs_executed),
        total_macs: sum(|r| r.costs.total_macs),
        total_macs_dense: sum(|r| r.costs.total_macs_dense),
        body_saving: saving(sum(|r| r.costs.body_macs), sum(|r| r.costs.body_macs_dense)),
        total_saving: saving(sum(|r| r.costs.total_macs), sum(|r| r.costs.total_macs_dense)),
        wall_ms: rows.iter().map(|r| r.wall_ms).sum(),
        psnr_y: mean(|r| r.psnr_y),
        ssim: mean(|r| r.ssim),
    };
    let report = UpscaleReport {
        command: "upscale",
        versions: Versions::current(),
        config: cfg,
        width: w,
        height: h,
        frames: rows,
        aggregate,
    };
    let path = args.report.unwrap_or_else(|| args.out_dir.join("report.json"));
    write_json(Some(&path), &report)?;
    eprintln!(
        "upscaled {} frames to {}x{}, mean sparse rate {:.3}, body MACs saved {:.1}%",
        report.frames.len(),
        hw,
        hh,
        report.aggregate.mean_sparse_rate,
        100.0 * report.aggregate.body_saving
    );
    Ok(())
}
