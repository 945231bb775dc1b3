use std::fmt;
use std::path::Path;

use neurowarp_core::image::ImageGrid;
use neurowarp_core::warp::{LossWeights, WarpConfig, WarpField, WarpModel};
use serde::{Deserialize, Serialize};

use super::warp::{load_pairs, train_into};
use super::{StageRun, WarpStageReport, WarpSummary, ABLATE};
use crate::artifacts::{file_sha256, write_json, Progress};
use crate::config::Project;
use crate::error::Result;
use crate::render::{checkerboard, frame_coords, strip};

/// Loss-term configurations compared by the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoData,
    NoThinPlate,
    NoIdentity,
    NoInverse,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoData,
        Variant::NoThinPlate,
        Variant::NoIdentity,
        Variant::NoInverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoData => "no-data",
            Variant::NoThinPlate => "no-thin-plate",
            Variant::NoIdentity => "no-identity",
            Variant::NoInverse => "no-inverse",
        }
    }

    pub fn weights(self, base: &LossWeights) -> LossWeights {
        let mut w = *base;
        match self {
            Variant::Full => {}
            Variant::NoData => w.data = 0.0,
            Variant::NoThinPlate => w.thin_plate = 0.0,
            Variant::NoIdentity => w.identity = 0.0,
            Variant::NoInverse => w.inverse = 0.0,
        }
        w
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub hidden: Vec<usize>,
    pub weights: LossWeights,
    /// `None` when training failed; see `error`.
    pub diagnostics: Option<WarpSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AblationRow {
    pub fn ok(&self) -> bool {
        self.diagnostics.is_some()
    }
}

/// Directional comparisons against the full run. Ratios are `None` when
/// either side failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationChecks {
    /// No-data endpoint error over full endpoint error.
    pub data_ratio: Option<f64>,
    /// No-thin-plate bending energy over the full run's.
    pub thin_plate_ratio: Option<f64>,
    /// Full run has the lowest endpoint error of all loss variants.
    pub full_best_alignment: Option<bool>,
    /// Full run has the lowest bending energy of all loss variants.
    pub full_best_thin_plate: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub steps: usize,
    pub landmarks_sha256: String,
    pub variants: Vec<AblationRow>,
    pub widths: Vec<AblationRow>,
    pub checks: AblationChecks,
}

impl AblationReport {
    pub fn variant(&self, v: Variant) -> Option<&AblationRow> {
        self.variants.iter().find(|r| r.name == v.name())
    }
}

fn finite(s: &WarpSummary) -> bool {
    [
        s.identity_residual,
        s.inverse_residual,
        s.endpoint_error,
        s.path_matching_max,
        s.thin_plate_energy,
    ]
    .iter()
    .all(|v| v.is_finite())
}

fn row(name: String, cfg: &WarpConfig, run: Result<StageRun<WarpStageReport>>) -> AblationRow {
    let (diagnostics, error) = match run {
        Ok(r) if finite(&r.report.diagnostics) => (Some(r.report.diagnostics), None),
        Ok(_) => (None, Some("non-finite diagnostics".to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    AblationRow {
        name,
        hidden: cfg.hidden.clone(),
        weights: cfg.weights,
        diagnostics,
        error,
    }
}

fn checks(variants: &[AblationRow]) -> AblationChecks {
    let get = |v: Variant| {
        variants
            .iter()
            .find(|r| r.name == v.name())
            .and_then(|r| r.diagnostics.as_ref())
    };
    let full = get(Variant::Full);
    let ratio = |other: Variant, metric: fn(&WarpSummary) -> f64| {
        Some(metric(get(other)?) / metric(full?))
    };
    let best = |metric: fn(&WarpSummary) -> f64| {
        let f = metric(full?);
        Some(variants.iter().filter_map(|r| r.diagnostics.as_ref()).all(|d| f <= metric(d)))
    };
    AblationChecks {
        data_ratio: ratio(Variant::NoData, |d| d.endpoint_error),
        thin_plate_ratio: ratio(Variant::NoThinPlate, |d| d.thin_plate_energy),
        full_best_alignment: best(|d| d.endpoint_error),
        full_best_thin_plate: best(|d| d.thin_plate_energy),
    }
}

const PANEL: usize = 96;

/// The checkerboard on image 0 carried to `t = 1`.
fn warped_checkerboard(model: &WarpModel) -> Result<ImageGrid> {
    let coords = frame_coords(PANEL, PANEL);
    let mut rows = ndarray::Array2::from_elem((coords.nrows(), 3), -1.0);
    rows.slice_mut(ndarray::s![.., 0..2]).assign(&coords);
    let back = model.warp_batch(rows.view());
    let values = back.rows().into_iter().map(|r| checkerboard([r[0], r[1]])).collect();
    Ok(ImageGrid::new(PANEL, PANEL, 1, values)?)
}

fn panel(dir: &Path, ok: bool) -> Result<ImageGrid> {
    if ok {
        if let Ok(model) = WarpModel::load(dir.join("warp.json")) {
            return warped_checkerboard(&model);
        }
    }
    Ok(ImageGrid::new(PANEL, PANEL, 1, vec![0.0; PANEL * PANEL])?)
}

/// Retrains the warp with each loss term switched off and at each width.
/// Every run lives in its own restartable directory under `ablate/`; a
/// failed run is recorded and the others continue.
pub fn cmd_ablate(p: &Project, widths: &[usize], force: bool, progress: &mut dyn Progress) -> Result<AblationReport> {
    let pairs = load_pairs(p)?;
    let sha = file_sha256(&p.config.inputs.landmarks)?;
    let root = p.stage_dir(ABLATE);
    let base = &p.config.warp;
    let mut runs = Vec::new();
    let mut variants = Vec::new();
    for v in Variant::ALL {
        let cfg = WarpConfig {
            weights: v.weights(&base.weights),
            ..base.clone()
        };
        let dir = root.join(v.name());
        let run = train_into(&dir, &pairs, &sha, &cfg, &format!("ablate/{v}"), force, progress);
        if let Err(e) = &run {
            progress.message(&format!("ablate/{v} failed: {e}"));
        }
        let r = row(v.name().to_string(), &cfg, run);
        runs.push((dir, r.ok()));
        variants.push(r);
    }
    let mut width_rows = Vec::new();
    for &w in widths {
        let cfg = WarpConfig {
            hidden: vec![w],
            ..base.clone()
        };
        let name = format!("width-{w}");
        let dir = root.join(&name);
        let r = if cfg == *base {
            let mut same = variants[0].clone();
            same.name = name;
            runs.push((root.join(Variant::Full.name()), same.ok()));
            same
        } else {
            let run = train_into(&dir, &pairs, &sha, &cfg, &format!("ablate/{name}"), force, progress);
            if let Err(e) = &run {
                progress.message(&format!("ablate/{name} failed: {e}"));
            }
            let r = row(name, &cfg, run);
            runs.push((dir, r.ok()));
            r
        };
        width_rows.push(r);
    }
    let panels = runs.iter().map(|(dir, ok)| panel(dir, *ok)).collect::<Result<Vec<_>>>()?;
    strip(&panels)?.save_png(root.join("strip.png"))?;
    let report = AblationReport {
        seed: base.seed,
        steps: base.steps,
        landmarks_sha256: sha,
        checks: checks(&variants),
        variants,
        widths: width_rows,
    };
    write_json(&root.join("report.json"), &report)?;
    Ok(report)
}
