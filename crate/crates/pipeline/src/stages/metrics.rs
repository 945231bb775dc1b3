use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use neurowarp_core::image::ImageGrid;
use neurowarp_core::metrics::{ssim, SSIM_WINDOW};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{read_timing, FitStageReport, MorphStageReport, TransferReport, WarpStageReport, REPORT_FILE};
use super::{FIT, MORPH, PATHS, TRANSFER, WARP};
use crate::artifacts::{read_json, write_json, Db};
use crate::config::{Project, ProjectConfig};
use crate::error::{Error, Result};
use crate::manifest::{FrameManifest, MANIFEST_FILE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub fit: u64,
    pub warp: u64,
    pub morph: u64,
}

/// Everything measured for a project, with the config that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: ProjectConfig,
    pub seeds: Seeds,
    pub fit: Option<FitStageReport>,
    pub warp: Option<WarpStageReport>,
    pub morph: Option<MorphStageReport>,
    pub transfer: Option<TransferReport>,
    /// Wall-clock seconds per completed stage.
    pub runtimes: BTreeMap<String, f64>,
}

fn stage_report<T: DeserializeOwned>(p: &Project, stage: &str) -> Option<T> {
    read_json(&p.stage_dir(stage).join(REPORT_FILE)).ok()
}

/// Collects the stage reports into `metrics.json` in the output directory.
pub fn cmd_metrics(p: &Project) -> Result<MetricsReport> {
    let c = &p.config;
    let runtimes = [FIT, WARP, MORPH, TRANSFER, PATHS]
        .into_iter()
        .filter_map(|s| Some((s.to_string(), read_timing(&p.stage_dir(s))?)))
        .collect();
    let report = MetricsReport {
        config: c.clone(),
        seeds: Seeds {
            fit: c.fit.seed,
            warp: c.warp.seed,
            morph: c.morph.seed,
        },
        fit: stage_report(p, FIT),
        warp: stage_report(p, WARP),
        morph: stage_report(p, MORPH),
        transfer: stage_report(p, TRANSFER),
        runtimes,
    };
    write_json(&p.out.join("metrics.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub index: usize,
    pub file: String,
    pub psnr: Db,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceComparison {
    pub a: PathBuf,
    pub b: PathBuf,
    pub ssim_window: usize,
    pub frames: Vec<FrameScore>,
    /// PSNR of the mean squared error over all frames.
    pub mean_psnr: Db,
    pub mean_ssim: f64,
}

/// Frame files of a sequence directory: the manifest order when there is
/// one, otherwise every PNG sorted by name.
fn sequence_files(dir: &Path) -> Result<Vec<String>> {
    if dir.join(MANIFEST_FILE).exists() {
        return Ok(FrameManifest::load(dir)?.frames.into_iter().map(|f| f.file).collect());
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<String> = entries
        .flatten()
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    files.sort();
    Ok(files)
}

fn mse(a: &ImageGrid, b: &ImageGrid) -> f64 {
    let n = a.pixels().len() as f64;
    a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

fn psnr_of_mse(m: f64) -> f64 {
    if m == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * m.log10()
    }
}

/// Per-frame PSNR and SSIM between two frame sequences of equal length and size.
pub fn compare_sequences(a: &Path, b: &Path) -> Result<SequenceComparison> {
    let fa = sequence_files(a)?;
    let fb = sequence_files(b)?;
    if fa.len() != fb.len() {
        return Err(Error::Mismatch(format!("{} has {} frames, {} has {}", a.display(), fa.len(), b.display(), fb.len())));
    }
    if fa.is_empty() {
        return Err(Error::Mismatch(format!("{} contains no frames", a.display())));
    }
    let mut frames = Vec::with_capacity(fa.len());
    let mut total = 0.0;
    for (index, (x, y)) in fa.iter().zip(&fb).enumerate() {
        let ia = ImageGrid::load(a.join(x))?;
        let ib = ImageGrid::load(b.join(y))?;
        if (ia.width(), ia.height(), ia.channels()) != (ib.width(), ib.height(), ib.channels()) {
            return Err(Error::Mismatch(format!(
                "frame {index}: {}×{}×{} vs {}×{}×{}",
                ia.width(),
                ia.height(),
                ia.channels(),
                ib.width(),
                ib.height(),
                ib.channels()
            )));
        }
        let m = mse(&ia, &ib);
        total += m;
        frames.push(FrameScore {
            index,
            file: x.clone(),
            psnr: Db(psnr_of_mse(m)),
            ssim: ssim(&ia, &ib)?,
        });
    }
    let n = frames.len() as f64;
    Ok(SequenceComparison {
        a: a.to_path_buf(),
        b: b.to_path_buf(),
        ssim_window: SSIM_WINDOW,
        mean_psnr: Db(psnr_of_mse(total / n)),
        mean_ssim: frames.iter().map(|f| f.ssim).sum::<f64>() / n,
        frames,
    })
}
