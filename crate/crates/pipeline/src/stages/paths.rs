use neurowarp_core::image::ImageGrid;
use neurowarp_core::landmarks::LandmarkPairs;
use neurowarp_core::warp::{landmark_path, uniform_times, WarpField};
use serde::{Deserialize, Serialize};

use super::{image_artifact, json_key, load_warp, run_stage, StageRun, FIT, PATHS, WARP};
use crate::artifacts::{file_sha256, read_stamp, stage_key, write_json, Progress};
use crate::config::Project;
use crate::error::{Error, Result};
use crate::render::overlay_paths;

pub const PATHS_VERSION: &str = "paths/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkTrajectory {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub p: [f64; 2],
    pub q: [f64; 2],
    /// `T(p, t)` at the document's times, in normalized coordinates.
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathsDocument {
    pub version: String,
    pub times: Vec<f64>,
    pub paths: Vec<LandmarkTrajectory>,
}

/// Trajectories of every source landmark over `samples` uniform times in `[0, 1]`.
pub fn landmark_paths(warp: &impl WarpField, pairs: &LandmarkPairs, samples: usize) -> Result<PathsDocument> {
    if samples < 2 {
        return Err(Error::Config(format!("path samples must be at least 2, got {samples}")));
    }
    let times = uniform_times(samples);
    let paths = pairs
        .pairs()
        .iter()
        .enumerate()
        .map(|(index, pair)| {
            Ok(LandmarkTrajectory {
                index,
                label: pair.label.clone(),
                p: pair.p,
                q: pair.q,
                points: landmark_path(warp, pair.p, &times)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PathsDocument {
        version: PATHS_VERSION.into(),
        times,
        paths,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathsReport {
    pub landmarks: usize,
    pub samples: usize,
    /// Largest bounding-box side of any path, in pixels of the overlay.
    pub max_extent_px: f64,
}

/// Writes `paths/paths.json` and `paths/overlay.png`, drawn over the fitted
/// first image when available and mid gray otherwise.
pub fn cmd_paths(p: &Project, force: bool, _progress: &mut dyn Progress) -> Result<StageRun<PathsReport>> {
    let c = &p.config;
    let pairs = LandmarkPairs::load(&c.inputs.landmarks)?;
    let warp_stamp = if pairs.is_empty() {
        String::new()
    } else {
        read_stamp(&p.stage_dir(WARP)).ok_or(Error::MissingArtifact {
            path: p.stage_dir(WARP).join("stamp"),
            stage: WARP,
        })?
    };
    let fit_stamp = read_stamp(&p.stage_dir(FIT)).unwrap_or_default();
    let key = stage_key(&[
        PATHS,
        &file_sha256(&c.inputs.landmarks)?,
        &warp_stamp,
        &fit_stamp,
        &json_key(&c.render),
    ]);
    let dir = p.stage_dir(PATHS);
    run_stage(&dir, &key, &["paths.json", "overlay.png"], force, || {
        let (w, h) = (c.render.width, c.render.height);
        let doc = if pairs.is_empty() {
            PathsDocument {
                version: PATHS_VERSION.into(),
                times: uniform_times(c.render.path_samples),
                paths: vec![],
            }
        } else {
            landmark_paths(&load_warp(p)?, &pairs, c.render.path_samples)?
        };
        write_json(&dir.join("paths.json"), &doc)?;
        let base = match neurowarp_core::neural_image::NeuralImage::load(image_artifact(p, 0)) {
            Ok(img) if !fit_stamp.is_empty() => img.render(w, h)?,
            _ => ImageGrid::new(w, h, 1, vec![0.5; w * h])?,
        };
        let polylines: Vec<Vec<[f64; 2]>> = doc.paths.iter().map(|t| t.points.clone()).collect();
        overlay_paths(&base, &polylines).save_png(dir.join("overlay.png"))?;
        let frame = base.frame();
        let max_extent_px = polylines
            .iter()
            .map(|path| {
                let px: Vec<[f64; 2]> = path.iter().map(|&q| frame.to_pixel(q)).collect();
                let span = |k: usize| {
                    let (lo, hi) = px
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[k]), hi.max(v[k])));
                    hi - lo
                };
                span(0).max(span(1))
            })
            .fold(0.0, f64::max);
        Ok(PathsReport {
            landmarks: doc.paths.len(),
            samples: doc.times.len(),
            max_extent_px,
        })
    })
}
