//! Request and response bodies shared by the service and its clients.

use std::collections::BTreeMap;
use std::fmt;

use neurowarp_pipeline::stages::PathsDocument;
use neurowarp_pipeline::{BlendMode, ProjectConfig};
use serde::{Deserialize, Serialize};

/// Header carrying the artifact version a frame was rendered from.
pub const VERSION_HEADER: &str = "x-artifact-version";
/// `hit` or `miss`.
pub const CACHE_HEADER: &str = "x-frame-cache";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateProject {
    /// `key.path=value` overrides on the service's default config.
    pub set: Vec<String>,
    /// Blending region as a polygon in normalized coordinates.
    pub region: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub format: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Models available to the frame and path endpoints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ready {
    /// Artifact version of the published models, if any.
    pub version: Option<u64>,
    pub fit: bool,
    pub warp: bool,
    pub modes: Vec<BlendMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectInfo {
    pub id: String,
    /// Increases with every change to images, landmarks or published models.
    pub version: u64,
    pub images: [Option<ImageInfo>; 2],
    pub landmarks: usize,
    pub region: bool,
    pub ready: Ready,
    pub job: MorphJob,
    pub config: ProjectConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Fit,
    Warp,
    Blend,
    Render,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRequest {
    /// Stages to run; all of them when absent.
    pub stages: Option<Vec<Stage>>,
    /// Config overrides applied (and kept) before training.
    pub set: Vec<String>,
    /// Gradient-domain modes to train in the blend stage. Defaults to the
    /// configured mode when it is not linear.
    pub modes: Vec<BlendMode>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[default]
    Idle,
    Fitting,
    Warping,
    Blending,
    Rendering,
    Done,
    Failed,
}

impl Phase {
    /// The phase after this one on the normal path.
    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::Idle => Some(Phase::Fitting),
            Phase::Fitting => Some(Phase::Warping),
            Phase::Warping => Some(Phase::Blending),
            Phase::Blending => Some(Phase::Rendering),
            Phase::Rendering => Some(Phase::Done),
            Phase::Done | Phase::Failed => None,
        }
    }

    /// Done and failed are terminal; every other phase may fail.
    pub fn can_become(self, to: Phase) -> bool {
        self.next() == Some(to) || (to == Phase::Failed && !self.is_terminal())
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Failed)
    }

    pub fn is_running(self) -> bool {
        !matches!(self, Phase::Idle | Phase::Done | Phase::Failed)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("phase serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub phase: Phase,
    /// Which model the terms belong to, e.g. `fit0`, `warp`, `blend/clone`.
    pub label: String,
    pub step: usize,
    pub terms: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("illegal job transition {from} → {to}")]
pub struct IllegalTransition {
    pub from: Phase,
    pub to: Phase,
}

/// A training run over a project's stages.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MorphJob {
    pub id: u64,
    pub project: String,
    pub phase: Phase,
    /// Fraction of the current phase completed.
    pub progress: f64,
    /// Latest per-term losses.
    pub losses: BTreeMap<String, f64>,
    pub history: Vec<LossSample>,
    pub error: Option<String>,
    /// Project version the job trains on.
    pub input_version: u64,
    /// Version under which the results were published.
    pub artifact_version: Option<u64>,
    pub stages: Vec<Stage>,
    pub diagnostics: Option<serde_json::Value>,
}

impl MorphJob {
    pub fn new(id: u64, project: &str, input_version: u64) -> Self {
        MorphJob {
            id,
            project: project.to_string(),
            input_version,
            ..MorphJob::default()
        }
    }

    pub fn advance(&mut self, to: Phase) -> Result<(), IllegalTransition> {
        if !self.phase.can_become(to) {
            return Err(IllegalTransition { from: self.phase, to });
        }
        self.phase = to;
        if to != Phase::Failed {
            self.progress = if to == Phase::Done { 1.0 } else { 0.0 };
        }
        Ok(())
    }

    /// Raises the phase progress; lower values are ignored.
    pub fn report(&mut self, progress: f64) {
        if progress > self.progress {
            self.progress = progress.min(1.0);
        }
    }

    /// Moves a non-terminal job to failed; finished jobs are left alone.
    pub fn fail(&mut self, message: impl Into<String>) {
        if self.phase.can_become(Phase::Failed) {
            self.phase = Phase::Failed;
            self.error = Some(message.into());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathsResponse {
    pub artifact_version: u64,
    pub paths: PathsDocument,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
