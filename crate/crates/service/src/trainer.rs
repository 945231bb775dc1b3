use std::collections::HashMap;
use std::ops::ControlFlow;
use std::sync::Arc;

use neurowarp_client::api::{LossSample, Phase, Stage};
use neurowarp_core::blend::MorphModel;
use neurowarp_core::landmarks::LandmarkPairs;
use neurowarp_core::neural_image::NeuralImage;
use neurowarp_core::train::TrainEvent;
use neurowarp_core::warp::WarpModel;
use neurowarp_pipeline::stages::{cmd_blend, cmd_fit, cmd_morph, cmd_warp, load_blend, load_images, load_warp};
use neurowarp_pipeline::{BlendMode, Progress, Project};
use serde_json::{Map, Value};

use crate::state::{Models, Slot};

pub(crate) struct Plan {
    pub stages: Vec<Stage>,
    /// Gradient modes trained in the blend stage.
    pub modes: Vec<BlendMode>,
}

impl Plan {
    fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    /// Modes whose morph models exist after the job: the render stage
    /// trains the configured mode if the blend stage did not.
    fn trained_modes(&self, project: &Project) -> Vec<BlendMode> {
        let mut modes = if self.has(Stage::Blend) { self.modes.clone() } else { Vec::new() };
        let mode = project.config.blend.mode;
        if self.has(Stage::Render) && mode != BlendMode::Linear && !modes.contains(&mode) {
            modes.push(mode);
        }
        modes
    }
}

enum Abort {
    /// The job was replaced; its results must not be published.
    Superseded,
    Failed(String),
}

impl From<neurowarp_pipeline::Error> for Abort {
    fn from(e: neurowarp_pipeline::Error) -> Self {
        Abort::Failed(e.to_string())
    }
}

const PHASES: [(Phase, Stage); 4] = [
    (Phase::Fitting, Stage::Fit),
    (Phase::Warping, Stage::Warp),
    (Phase::Blending, Stage::Blend),
    (Phase::Rendering, Stage::Render),
];

/// Runs a job on the calling thread and publishes its models when it
/// finishes without being superseded.
pub(crate) fn run(slot: Arc<Slot>, job_id: u64, project: Project, plan: Plan) {
    let outcome = train(&slot, job_id, &project, &plan).and_then(|diag| {
        let fresh = load_outputs(&project, &plan)?;
        Ok((diag, fresh))
    });
    let mut st = slot.lock();
    st.trainer_alive = false;
    if st.info.job.id != job_id {
        tracing::info!(project = %st.info.id, job = job_id, "superseded job stopped");
        return;
    }
    match outcome {
        Ok((diagnostics, fresh)) => {
            let models = merge(&st.models, fresh, &plan);
            st.info.version += 1;
            let version = st.info.version;
            st.set_models(Models { version, ..models });
            let job = &mut st.info.job;
            job.artifact_version = Some(version);
            job.diagnostics = Some(Value::Object(diagnostics));
            if let Err(e) = job.advance(Phase::Done) {
                job.fail(e.to_string());
            }
            tracing::info!(project = %st.info.id, job = job_id, version, "job done");
        }
        Err(Abort::Failed(message)) => {
            tracing::warn!(project = %st.info.id, job = job_id, "job failed: {message}");
            st.info.job.fail(message);
        }
        Err(Abort::Superseded) => unreachable!("job id matched"),
    }
    if let Err(e) = slot.persist(&st) {
        tracing::error!("{e}");
    }
}

fn train(slot: &Slot, job_id: u64, project: &Project, plan: &Plan) -> Result<Map<String, Value>, Abort> {
    let mut diag = Map::new();
    let mut put = |key: &str, value: Result<Value, serde_json::Error>| {
        diag.insert(key.to_string(), value.unwrap_or(Value::Null));
    };
    for (phase, stage) in PHASES {
        enter(slot, job_id, phase)?;
        if !plan.has(stage) {
            continue;
        }
        let mut observer = JobObserver {
            slot,
            job_id,
            phase,
            modes: &plan.modes,
        };
        let result = match stage {
            Stage::Fit => cmd_fit(project, false, &mut observer).map(|r| put("fit", serde_json::to_value(r.report))),
            Stage::Warp => cmd_warp(project, false, &mut observer).map(|r| put("warp", serde_json::to_value(r.report))),
            Stage::Blend => {
                let mut reports = Map::new();
                for &mode in &plan.modes {
                    match cmd_blend(project, mode, false, &mut observer) {
                        Ok(r) => {
                            reports.insert(mode.to_string(), serde_json::to_value(r.report).unwrap_or(Value::Null));
                        }
                        Err(e) => return Err(abort(slot, job_id, e)),
                    }
                }
                put("blend", Ok(Value::Object(reports)));
                Ok(())
            }
            Stage::Render => {
                cmd_morph(project, false, &mut observer).map(|r| put("render", serde_json::to_value(r.report)))
            }
        };
        result.map_err(|e| abort(slot, job_id, e))?;
    }
    Ok(diag)
}

/// A cancelled stage surfaces as an error; tell it apart from a real one.
fn abort(slot: &Slot, job_id: u64, e: neurowarp_pipeline::Error) -> Abort {
    if slot.lock().info.job.id != job_id {
        Abort::Superseded
    } else {
        e.into()
    }
}

fn enter(slot: &Slot, job_id: u64, phase: Phase) -> Result<(), Abort> {
    let mut st = slot.lock();
    if st.info.job.id != job_id {
        return Err(Abort::Superseded);
    }
    st.info
        .job
        .advance(phase)
        .map_err(|e| Abort::Failed(e.to_string()))?;
    tracing::info!(project = %st.info.id, job = job_id, "{phase}");
    slot.persist(&st).map_err(|e| Abort::Failed(e.message))
}

struct Fresh {
    images: Option<Arc<(NeuralImage, NeuralImage)>>,
    warp: Option<(Arc<WarpModel>, LandmarkPairs)>,
    morphs: HashMap<BlendMode, Arc<MorphModel>>,
}

fn load_outputs(project: &Project, plan: &Plan) -> Result<Fresh, Abort> {
    let images = if plan.has(Stage::Fit) {
        Some(Arc::new(load_images(project)?))
    } else {
        None
    };
    let warp = if plan.has(Stage::Warp) {
        let pairs = LandmarkPairs::load(&project.config.inputs.landmarks).map_err(|e| Abort::Failed(e.to_string()))?;
        Some((Arc::new(load_warp(project)?), pairs))
    } else {
        None
    };
    let mut morphs = HashMap::new();
    for mode in plan.trained_modes(project) {
        morphs.insert(mode, Arc::new(load_blend(project, mode)?));
    }
    Ok(Fresh { images, warp, morphs })
}

/// New models replace old ones; morphs trained against replaced images or
/// warps are dropped.
fn merge(old: &Models, fresh: Fresh, plan: &Plan) -> Models {
    let upstream_changed = plan.has(Stage::Fit) || plan.has(Stage::Warp);
    let mut morphs = if upstream_changed { HashMap::new() } else { old.morphs.clone() };
    morphs.extend(fresh.morphs);
    let (warp, pairs) = match fresh.warp {
        Some((w, p)) => (Some(w), p),
        None => (old.warp.clone(), old.pairs.clone()),
    };
    Models {
        version: old.version,
        images: fresh.images.or_else(|| old.images.clone()),
        warp,
        pairs,
        morphs,
    }
}

struct JobObserver<'a> {
    slot: &'a Slot,
    job_id: u64,
    phase: Phase,
    modes: &'a [BlendMode],
}

impl JobObserver<'_> {
    /// Position of the model behind `label` within the phase, and how many
    /// models the phase trains.
    fn part(&self, label: &str) -> (usize, usize) {
        match self.phase {
            Phase::Fitting => (usize::from(label.ends_with('1')), 2),
            Phase::Blending => {
                let k = self.modes.iter().position(|m| label.ends_with(m.as_str())).unwrap_or(0);
                (k, self.modes.len().max(1))
            }
            _ => (0, 1),
        }
    }
}

impl Progress for JobObserver<'_> {
    fn event(&mut self, label: &str, event: &TrainEvent) -> ControlFlow<()> {
        let (k, n) = self.part(label);
        let within = event.step as f64 / event.total_steps.max(1) as f64;
        let fraction = (k as f64 + within.min(1.0)) / n as f64;
        let mut st = self.slot.lock();
        if st.info.job.id != self.job_id {
            return ControlFlow::Break(());
        }
        let job = &mut st.info.job;
        job.report(fraction);
        job.losses = event.terms.iter().cloned().collect();
        job.history.push(LossSample {
            phase: self.phase,
            label: label.to_string(),
            step: event.step,
            terms: job.losses.clone(),
        });
        ControlFlow::Continue(())
    }
}
