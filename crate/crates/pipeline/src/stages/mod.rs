mod ablate;
mod fit;
mod metrics;
mod morph;
mod paths;
mod warp;

use std::path::{Path, PathBuf};

use neurowarp_core::neural_image::NeuralImage;
use neurowarp_core::warp::{WarpDiagnostics, WarpModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub use ablate::{cmd_ablate, AblationChecks, AblationReport, AblationRow, Variant};
pub use fit::{cmd_fit, FitStageReport, ImageFitSummary};
pub use metrics::{cmd_metrics, compare_sequences, FrameScore, MetricsReport, SequenceComparison};
pub use morph::{
    blend_dir, cmd_blend, cmd_morph, cmd_transfer, load_blend, render_linear_frame, render_morph_frame, BlendReport,
    MorphStageReport, TransferReport,
};
pub use paths::{cmd_paths, landmark_paths, LandmarkTrajectory, PathsDocument, PathsReport, PATHS_VERSION};
pub use warp::{cmd_warp, cmd_warp_widths, WarpStageReport};

use crate::artifacts::{is_fresh, read_json, write_json, write_stamp};
use crate::config::Project;
use crate::error::{Error, Result};

pub const FIT: &str = "fit";
pub const WARP: &str = "warp";
pub const BLEND: &str = "blend";
pub const MORPH: &str = "morph";
pub const TRANSFER: &str = "transfer";
pub const PATHS: &str = "paths";
pub const ABLATE: &str = "ablate";

/// Outcome of one stage invocation.
#[derive(Clone, Debug)]
pub struct StageRun<T> {
    /// True when the stamp matched and nothing was recomputed.
    pub skipped: bool,
    pub dir: PathBuf,
    pub report: T,
}

/// Wall-clock time of a stage, kept apart from the reports so those stay
/// byte-identical across reruns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

pub(crate) fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, stage })
    }
}

pub fn image_artifact(p: &Project, i: u8) -> PathBuf {
    p.stage_dir(FIT).join(format!("image{i}.json"))
}

pub fn warp_artifact(p: &Project) -> PathBuf {
    p.stage_dir(WARP).join("warp.json")
}

pub fn load_images(p: &Project) -> Result<(NeuralImage, NeuralImage)> {
    let a = NeuralImage::load(require(image_artifact(p, 0), FIT)?)?;
    let b = NeuralImage::load(require(image_artifact(p, 1), FIT)?)?;
    Ok((a, b))
}

pub fn load_warp(p: &Project) -> Result<WarpModel> {
    Ok(WarpModel::load(require(warp_artifact(p), WARP)?)?)
}

pub(crate) fn upstream_stamp(p: &Project, stage: &'static str) -> Result<String> {
    let dir = p.stage_dir(stage);
    crate::artifacts::read_stamp(&dir).ok_or(Error::MissingArtifact {
        path: dir.join("stamp"),
        stage,
    })
}

pub fn read_timing(dir: &Path) -> Option<f64> {
    read_json::<Timing>(&dir.join(TIMING_FILE)).ok().map(|t| t.seconds)
}

pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";

/// Skips the stage when its stamp matches `key` and every output exists;
/// otherwise runs `compute`, then writes the report, timing and stamp. The
/// stamp goes last so an interrupted run is never mistaken for a finished one.
pub(crate) fn run_stage<T, F>(dir: &Path, key: &str, outputs: &[&str], force: bool, compute: F) -> Result<StageRun<T>>
where
    T: Serialize + DeserializeOwned,
    F: FnOnce() -> Result<T>,
{
    let mut expected = outputs.to_vec();
    expected.push(REPORT_FILE);
    if !force && is_fresh(dir, key, &expected) {
        if let Ok(report) = read_json(&dir.join(REPORT_FILE)) {
            return Ok(StageRun {
                skipped: true,
                dir: dir.to_path_buf(),
                report,
            });
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stamp = dir.join("stamp");
    if stamp.exists() {
        std::fs::remove_file(&stamp).map_err(|e| Error::io(&stamp, e))?;
    }
    let started = Instant::now();
    let report = compute()?;
    write_json(&dir.join(REPORT_FILE), &report)?;
    write_json(
        &dir.join(TIMING_FILE),
        &Timing {
            seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    write_stamp(dir, key)?;
    Ok(StageRun {
        skipped: false,
        dir: dir.to_path_buf(),
        report,
    })
}

pub(crate) fn json_key<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("configs serialize")
}

/// Warp diagnostics without the wall-clock time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpSummary {
    pub identity_residual: f64,
    pub inverse_residual: f64,
    pub alignment_error: f64,
    pub reverse_alignment_error: f64,
    pub endpoint_error: f64,
    pub path_matching_max: f64,
    pub thin_plate_energy: f64,
    pub steps: usize,
    pub history: Vec<neurowarp_core::warp::HistoryEntry>,
}

impl From<&WarpDiagnostics> for WarpSummary {
    fn from(d: &WarpDiagnostics) -> Self {
        WarpSummary {
            identity_residual: d.identity_residual,
            inverse_residual: d.inverse_residual,
            alignment_error: d.alignment_error,
            reverse_alignment_error: d.reverse_alignment_error,
            endpoint_error: d.endpoint_error(),
            path_matching_max: d.path_matching_max,
            thin_plate_energy: d.thin_plate_energy,
            steps: d.steps,
            history: d.history.clone(),
        }
    }
}
