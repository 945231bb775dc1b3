use neurowarp_core::blend::{
    feature_transfer_with, linear_blend, morph_sample, train_morph_with, GradientFieldSpec, MorphModel,
};
use neurowarp_core::image::ImageGrid;
use neurowarp_core::metrics::psnr_images;
use neurowarp_core::neural_image::NeuralImage;
use neurowarp_core::region::RegionMask;
use neurowarp_core::warp::WarpModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{json_key, load_images, load_warp, run_stage, upstream_stamp, StageRun, BLEND, FIT, MORPH, TRANSFER, WARP};
use crate::artifacts::{file_sha256, sha256_hex, stage_key, write_bytes, Db, Labeled, Progress};
use crate::config::{BlendMode, Project, RenderSpec};
use crate::error::{Error, Result};
use crate::manifest::{frame_name, FrameEntry, FrameManifest, FRAMES_VERSION, MANIFEST_FILE};
use crate::render::{frame_coords, to_image};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphStageReport {
    pub mode: BlendMode,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// First and last frame against the fitted images rendered at the same
    /// size, when the time range spans `[0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_psnr: Option<[Db; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloning_residual: Option<f64>,
    pub manifest_sha256: String,
}

pub fn render_linear_frame(
    warp: &WarpModel,
    i0: &NeuralImage,
    i1: &NeuralImage,
    width: usize,
    height: usize,
    t: f64,
) -> Result<ImageGrid> {
    let colors = linear_blend(warp, i0, i1, frame_coords(width, height).view(), t)?;
    Ok(to_image(width, height, &colors)?)
}

pub fn render_morph_frame(model: &MorphModel, width: usize, height: usize, t: f64) -> Result<ImageGrid> {
    let colors = morph_sample(model, frame_coords(width, height).view(), t)?;
    Ok(to_image(width, height, &colors)?)
}

fn load_region(p: &Project) -> Result<RegionMask> {
    let path = p
        .config
        .inputs
        .region
        .as_ref()
        .ok_or_else(|| Error::Config("this stage needs inputs.region".into()))?;
    Ok(RegionMask::load(path)?)
}

fn region_sha(p: &Project) -> Result<String> {
    match &p.config.inputs.region {
        Some(path) => file_sha256(path),
        None => Ok(String::new()),
    }
}

/// Renders the frames in parallel and writes them with their manifest.
fn write_frames<F>(dir: &std::path::Path, mode: BlendMode, spec: &RenderSpec, render: F) -> Result<Vec<ImageGrid>>
where
    F: Fn(f64) -> Result<ImageGrid> + Sync,
{
    let times = spec.times();
    let rendered: Vec<(ImageGrid, FrameEntry)> = times
        .par_iter()
        .enumerate()
        .map(|(index, &t)| {
            let frame = render(t)?;
            let bytes = frame.encode_png()?;
            let file = frame_name(index);
            write_bytes(&dir.join(&file), &bytes)?;
            let entry = FrameEntry {
                index,
                t,
                file,
                sha256: sha256_hex(&bytes),
            };
            Ok((frame.quantized(), entry))
        })
        .collect::<Result<_>>()?;
    let (frames, entries): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();
    FrameManifest {
        version: FRAMES_VERSION.into(),
        mode: mode.as_str().into(),
        width: spec.width,
        height: spec.height,
        frames: entries,
    }
    .save(dir)?;
    Ok(frames)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendReport {
    pub mode: BlendMode,
    pub base: u8,
    pub steps: usize,
    pub boundary_residual: f64,
    pub cloning_residual: f64,
    pub region_fraction: f64,
}

pub fn blend_dir(p: &Project, mode: BlendMode) -> std::path::PathBuf {
    p.stage_dir(&format!("{BLEND}-{mode}"))
}

/// Trains the gradient-domain morph for `mode` into `blend-<mode>/morph.json`.
pub fn cmd_blend(p: &Project, mode: BlendMode, force: bool, progress: &mut dyn Progress) -> Result<StageRun<BlendReport>> {
    let Some(gm) = mode.gradient_mode() else {
        return Err(Error::Config("linear blending has no model to train".into()));
    };
    let c = &p.config;
    let key = stage_key(&[
        BLEND,
        mode.as_str(),
        &upstream_stamp(p, FIT)?,
        &upstream_stamp(p, WARP)?,
        &c.blend.base.to_string(),
        &json_key(&c.morph),
        &region_sha(p)?,
    ]);
    let dir = blend_dir(p, mode);
    run_stage(&dir, &key, &["morph.json"], force, || {
        let (i0, i1) = load_images(p)?;
        let warp = load_warp(p)?;
        let field = GradientFieldSpec::new(gm, c.blend.base, load_region(p)?)?;
        progress.message(&format!("training {mode} morph: {} steps", c.morph.steps));
        let mut observer = Labeled {
            label: format!("{BLEND}/{mode}"),
            inner: &mut *progress,
        };
        let model = train_morph_with(&warp, &i0, &i1, &field, &c.morph, &mut observer)?;
        model.save(dir.join("morph.json"))?;
        let d = model.diagnostics().cloned().unwrap_or_default();
        Ok(BlendReport {
            mode,
            base: c.blend.base,
            steps: d.steps,
            boundary_residual: d.boundary_residual,
            cloning_residual: d.cloning_residual,
            region_fraction: d.region_fraction,
        })
    })
}

pub fn load_blend(p: &Project, mode: BlendMode) -> Result<MorphModel> {
    Ok(MorphModel::load(super::require(blend_dir(p, mode).join("morph.json"), BLEND)?)?)
}

/// Renders the morph sequence into `morph/`, training the gradient-domain
/// model first unless the mode is linear.
pub fn cmd_morph(p: &Project, force: bool, progress: &mut dyn Progress) -> Result<StageRun<MorphStageReport>> {
    let c = &p.config;
    let mode = c.blend.mode;
    let blend = match mode.gradient_mode() {
        Some(_) => Some(cmd_blend(p, mode, force, progress)?),
        None => None,
    };
    let blend_stamp = blend
        .as_ref()
        .and_then(|b| crate::artifacts::read_stamp(&b.dir))
        .unwrap_or_default();
    let key = stage_key(&[
        MORPH,
        &upstream_stamp(p, FIT)?,
        &upstream_stamp(p, WARP)?,
        mode.as_str(),
        &blend_stamp,
        &json_key(&c.render),
    ]);
    let dir = p.stage_dir(MORPH);
    run_stage(&dir, &key, &[MANIFEST_FILE], force, || {
        let (i0, i1) = load_images(p)?;
        let spec = &c.render;
        clear_frames(&dir)?;
        progress.message(&format!("rendering {} {mode} frames", spec.frames));
        let frames = match &blend {
            None => {
                let warp = load_warp(p)?;
                write_frames(&dir, mode, spec, |t| render_linear_frame(&warp, &i0, &i1, spec.width, spec.height, t))?
            }
            Some(_) => {
                let model = load_blend(p, mode)?;
                write_frames(&dir, mode, spec, |t| render_morph_frame(&model, spec.width, spec.height, t))?
            }
        };
        let endpoint_psnr = if spec.t_start == 0.0 && spec.t_end == 1.0 {
            let a = i0.render(spec.width, spec.height)?.quantized();
            let b = i1.render(spec.width, spec.height)?.quantized();
            Some([
                Db(psnr_images(&frames[0], &a)?),
                Db(psnr_images(&frames[frames.len() - 1], &b)?),
            ])
        } else {
            None
        };
        Ok(MorphStageReport {
            mode,
            frames: frames.len(),
            width: spec.width,
            height: spec.height,
            endpoint_psnr,
            boundary_residual: blend.as_ref().map(|b| b.report.boundary_residual),
            cloning_residual: blend.as_ref().map(|b| b.report.cloning_residual),
            manifest_sha256: file_sha256(&dir.join(MANIFEST_FILE))?,
        })
    })
}

/// Removes frames left over from an earlier run with more frames.
fn clear_frames(dir: &std::path::Path) -> Result<()> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Ok(());
    };
    for entry in entries.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("frame_") && name.ends_with(".png") {
            std::fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Image receiving the region.
    pub base: u8,
    pub width: usize,
    pub height: usize,
    pub boundary_residual: f64,
    pub cloning_residual: f64,
    pub region_fraction: f64,
    pub steps: usize,
}

/// Clones the region of the aligned donor image into the base at `t = 1`
/// and writes `transfer/composite.png`.
pub fn cmd_transfer(p: &Project, force: bool, progress: &mut dyn Progress) -> Result<StageRun<TransferReport>> {
    let c = &p.config;
    let key = stage_key(&[
        TRANSFER,
        &upstream_stamp(p, FIT)?,
        &upstream_stamp(p, WARP)?,
        &json_key(&c.transfer),
        &json_key(&c.morph),
        &region_sha(p)?,
        &json_key(&c.render),
    ]);
    let dir = p.stage_dir(TRANSFER);
    run_stage(&dir, &key, &["composite.png", "morph.json"], force, || {
        let (i0, i1) = load_images(p)?;
        let warp = load_warp(p)?;
        let region = load_region(p)?;
        let base = c.transfer.base;
        progress.message(&format!("transferring region into image {base}: {} steps", c.morph.steps));
        let mut observer = Labeled {
            label: TRANSFER.into(),
            inner: &mut *progress,
        };
        let model = feature_transfer_with(&warp, &i0, &i1, &region, base, &c.morph, &mut observer)?;
        model.save(dir.join("morph.json"))?;
        let (w, h) = (c.render.width, c.render.height);
        render_morph_frame(&model, w, h, 1.0)?.save_png(dir.join("composite.png"))?;
        let d = model.diagnostics().cloned().unwrap_or_default();
        Ok(TransferReport {
            base,
            width: w,
            height: h,
            boundary_residual: d.boundary_residual,
            cloning_residual: d.cloning_residual,
            region_fraction: d.region_fraction,
            steps: d.steps,
        })
    })
}
