use std::path::PathBuf;

use neurowarp_core::image::ImageGrid;
use neurowarp_core::metrics::{psnr_images, ssim};
use neurowarp_core::neural_image::{fit_image_with, ImageFitConfig};
use serde::{Deserialize, Serialize};

use super::{image_artifact, json_key, run_stage, StageRun, FIT};
use crate::artifacts::{file_sha256, stage_key, Db, Labeled, Progress};
use crate::config::Project;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageFitSummary {
    pub source: PathBuf,
    pub sha256: String,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub seed: u64,
    pub steps: usize,
    /// Rendered fit against the source raster.
    pub psnr: Db,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitStageReport {
    pub config: ImageFitConfig,
    pub images: Vec<ImageFitSummary>,
}

/// Fits both input images and writes `fit/image{0,1}.json`.
pub fn cmd_fit(p: &Project, force: bool, progress: &mut dyn Progress) -> Result<StageRun<FitStageReport>> {
    let cfg = &p.config.fit;
    let sources = [&p.config.inputs.image0, &p.config.inputs.image1];
    let hashes = sources.iter().map(|s| file_sha256(s)).collect::<Result<Vec<_>>>()?;
    let key = stage_key(&[FIT, &hashes[0], &hashes[1], &json_key(cfg)]);
    let dir = p.stage_dir(FIT);
    run_stage(&dir, &key, &["image0.json", "image1.json"], force, || {
        let mut images = Vec::new();
        for (i, source) in sources.into_iter().enumerate() {
            let grid = ImageGrid::load(source)?;
            let seed = cfg.seed.wrapping_add(i as u64);
            let image_cfg = ImageFitConfig { seed, ..cfg.clone() };
            progress.message(&format!("fitting image {i} ({}×{})", grid.width(), grid.height()));
            let mut observer = Labeled {
                label: format!("fit{i}"),
                inner: &mut *progress,
            };
            let fitted = fit_image_with(&grid, &image_cfg, &mut observer)?;
            let out = image_artifact(p, i as u8);
            fitted.save(&out)?;
            let rendered = fitted.render(grid.width(), grid.height())?;
            images.push(ImageFitSummary {
                source: source.clone(),
                sha256: hashes[i].clone(),
                width: grid.width(),
                height: grid.height(),
                channels: grid.channels(),
                seed,
                steps: cfg.steps,
                psnr: Db(psnr_images(&rendered, &grid)?),
                ssim: ssim(&rendered, &grid)?,
            });
        }
        if images[0].channels != images[1].channels {
            return Err(Error::Config(format!(
                "images have {} and {} channels; convert them to the same color space",
                images[0].channels, images[1].channels
            )));
        }
        Ok(FitStageReport {
            config: cfg.clone(),
            images,
        })
    })
}
