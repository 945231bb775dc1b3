use std::path::Path;

use neurowarp_core::landmarks::LandmarkPairs;
use neurowarp_core::warp::{diagnose, train_warp_with, WarpConfig, WarpModel};
use serde::{Deserialize, Serialize};

use super::{json_key, run_stage, StageRun, WarpSummary, WARP};
use crate::artifacts::{file_sha256, stage_key, Labeled, Progress};
use crate::config::Project;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpStageReport {
    pub landmarks: usize,
    pub landmarks_sha256: String,
    pub config: WarpConfig,
    pub diagnostics: WarpSummary,
}

pub(crate) fn load_pairs(p: &Project) -> Result<LandmarkPairs> {
    let pairs = LandmarkPairs::load(&p.config.inputs.landmarks)?;
    if pairs.is_empty() {
        return Err(Error::Config(format!(
            "{}: warp training needs at least one landmark pair",
            p.config.inputs.landmarks.display()
        )));
    }
    Ok(pairs)
}

/// Trains `cfg` on `pairs` into `dir/warp.json`, skipping when fresh.
pub(crate) fn train_into(
    dir: &Path,
    pairs: &LandmarkPairs,
    landmarks_sha: &str,
    cfg: &WarpConfig,
    label: &str,
    force: bool,
    progress: &mut dyn Progress,
) -> Result<StageRun<WarpStageReport>> {
    let key = stage_key(&[WARP, landmarks_sha, &json_key(cfg)]);
    run_stage(dir, &key, &["warp.json"], force, || {
        progress.message(&format!("training {label}: hidden {:?}, {} steps", cfg.hidden, cfg.steps));
        let mut observer = Labeled {
            label: label.to_string(),
            inner: &mut *progress,
        };
        let model = train_warp_with(pairs, cfg, &mut observer)?;
        model.save(dir.join("warp.json"))?;
        Ok(WarpStageReport {
            landmarks: pairs.len(),
            landmarks_sha256: landmarks_sha.to_string(),
            config: cfg.clone(),
            diagnostics: summarize(&model, pairs),
        })
    })
}

pub(crate) fn summarize(model: &WarpModel, pairs: &LandmarkPairs) -> WarpSummary {
    match model.diagnostics() {
        Some(d) => d.into(),
        None => (&diagnose(model, pairs, model.config().seed)).into(),
    }
}

/// Trains the configured warp into `warp/warp.json`.
pub fn cmd_warp(p: &Project, force: bool, progress: &mut dyn Progress) -> Result<StageRun<WarpStageReport>> {
    let pairs = load_pairs(p)?;
    let sha = file_sha256(&p.config.inputs.landmarks)?;
    train_into(&p.stage_dir(WARP), &pairs, &sha, &p.config.warp, WARP, force, progress)
}

/// One single-hidden-layer warp per width, each in `warp/width-W/`.
pub fn cmd_warp_widths(
    p: &Project,
    widths: &[usize],
    force: bool,
    progress: &mut dyn Progress,
) -> Result<Vec<(usize, StageRun<WarpStageReport>)>> {
    if let Some(w) = widths.iter().find(|&&w| w == 0) {
        return Err(Error::Config(format!("width must be positive, got {w}")));
    }
    let pairs = load_pairs(p)?;
    let sha = file_sha256(&p.config.inputs.landmarks)?;
    widths
        .iter()
        .map(|&w| {
            let cfg = WarpConfig {
                hidden: vec![w],
                ..p.config.warp.clone()
            };
            let dir = p.stage_dir(WARP).join(format!("width-{w}"));
            let run = train_into(&dir, &pairs, &sha, &cfg, &format!("warp/width-{w}"), force, progress)?;
            Ok((w, run))
        })
        .collect()
}
