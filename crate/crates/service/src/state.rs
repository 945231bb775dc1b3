use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock};

use neurowarp_client::api::{MorphJob, ProjectInfo, Ready};
use neurowarp_core::blend::{MorphModel, TimeSampling};
use neurowarp_core::fixtures;
use neurowarp_core::landmarks::LandmarkPairs;
use neurowarp_core::neural_image::NeuralImage;
use neurowarp_core::warp::WarpModel;
use neurowarp_pipeline::config::Inputs;
use neurowarp_pipeline::stages::{load_blend, load_images, load_warp};
use neurowarp_pipeline::{BlendMode, Project, ProjectConfig, RenderSpec};

use crate::error::{ApiError, ApiResult};
use crate::ServiceError;

pub(crate) const RECORD_FILE: &str = "record.json";
pub(crate) const LANDMARKS_FILE: &str = "landmarks.json";
pub(crate) const REGION_FILE: &str = "region.json";
const FRAME_CACHE_LIMIT: usize = 256;

/// Config for new projects before any per-project overrides.
pub fn default_project_config() -> ProjectConfig {
    let mut fit = fixtures::fit_config();
    fit.log_every = 50;
    let mut warp = fixtures::face_config();
    warp.log_every = 50;
    let mut morph = fixtures::morph_config(1500, TimeSampling::Uniform);
    morph.log_every = 50;
    ProjectConfig {
        inputs: managed_inputs(None),
        output: Some("out".into()),
        blend: Default::default(),
        transfer: Default::default(),
        fit,
        warp,
        morph,
        render: RenderSpec::default(),
    }
}

pub(crate) fn managed_inputs(region: Option<PathBuf>) -> Inputs {
    Inputs {
        image0: "image0.png".into(),
        image1: "image1.png".into(),
        landmarks: LANDMARKS_FILE.into(),
        region,
    }
}

/// Models published by the last successful job, minus whatever later
/// uploads invalidated.
#[derive(Clone, Default)]
pub(crate) struct Models {
    pub version: u64,
    pub images: Option<Arc<(NeuralImage, NeuralImage)>>,
    pub warp: Option<Arc<WarpModel>>,
    /// The correspondences `warp` was trained on.
    pub pairs: LandmarkPairs,
    pub morphs: HashMap<BlendMode, Arc<MorphModel>>,
}

impl Models {
    pub fn ready(&self) -> Ready {
        let mut modes: Vec<BlendMode> = self.morphs.keys().copied().collect();
        modes.sort_by_key(|m| m.as_str());
        let any = self.images.is_some() || self.warp.is_some() || !modes.is_empty();
        Ready {
            version: any.then_some(self.version),
            fit: self.images.is_some(),
            warp: self.warp.is_some(),
            modes,
        }
    }
}

pub(crate) struct SlotState {
    pub info: ProjectInfo,
    pub models: Arc<Models>,
    /// A training thread has not returned yet, even if its job was replaced.
    pub trainer_alive: bool,
}

impl SlotState {
    /// Records a change to the inputs: bumps the version and replaces the
    /// current job with an idle one, which cancels a running trainer.
    pub fn mutated(&mut self) {
        self.info.version += 1;
        let id = self.info.job.id + 1;
        self.info.job = MorphJob::new(id, &self.info.id, self.info.version);
        self.info.ready = self.models.ready();
    }

    pub fn set_models(&mut self, models: Models) {
        self.models = Arc::new(models);
        self.info.ready = self.models.ready();
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct FrameKey {
    pub version: u64,
    pub mode: BlendMode,
    /// Time in 1/1024 steps.
    pub tick: u32,
    pub width: usize,
    pub height: usize,
}

pub(crate) struct Slot {
    pub dir: PathBuf,
    pub state: Mutex<SlotState>,
    pub frames: Mutex<HashMap<FrameKey, Arc<Vec<u8>>>>,
}

impl Slot {
    pub fn lock(&self) -> MutexGuard<'_, SlotState> {
        self.state.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn cached_frame(&self, key: &FrameKey) -> Option<Arc<Vec<u8>>> {
        self.frames.lock().unwrap_or_else(PoisonError::into_inner).get(key).cloned()
    }

    pub fn cache_frame(&self, key: FrameKey, png: Arc<Vec<u8>>) {
        let mut frames = self.frames.lock().unwrap_or_else(PoisonError::into_inner);
        frames.retain(|k, _| k.version == key.version);
        if frames.len() >= FRAME_CACHE_LIMIT {
            frames.clear();
        }
        frames.insert(key, png);
    }

    pub fn project(&self, config: ProjectConfig) -> neurowarp_pipeline::Result<Project> {
        Project::new(config, &self.dir)
    }

    /// Writes the record; the caller holds the state lock.
    pub fn persist(&self, state: &SlotState) -> ApiResult<()> {
        write_record(&self.dir, &state.info).map_err(|e| ApiError::internal(e.to_string()))
    }
}

fn write_record(dir: &Path, info: &ProjectInfo) -> std::io::Result<()> {
    let tmp = dir.join("record.json.tmp");
    let text = serde_json::to_vec_pretty(info).map_err(std::io::Error::other)?;
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, dir.join(RECORD_FILE))
}

pub(crate) struct AppState {
    pub root: PathBuf,
    pub base: ProjectConfig,
    pub projects: RwLock<HashMap<String, Arc<Slot>>>,
}

pub(crate) type App = Arc<AppState>;

impl AppState {
    pub fn open(root: PathBuf, base: ProjectConfig) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&root).map_err(|e| ServiceError::io(&root, e))?;
        let mut projects = HashMap::new();
        let entries = std::fs::read_dir(&root).map_err(|e| ServiceError::io(&root, e))?;
        for entry in entries {
            let dir = entry.map_err(|e| ServiceError::io(&root, e))?.path();
            let record = dir.join(RECORD_FILE);
            if !record.is_file() {
                continue;
            }
            match restore(&dir, &record) {
                Ok(slot) => {
                    let id = slot.lock().info.id.clone();
                    projects.insert(id, Arc::new(slot));
                }
                Err(e) => tracing::warn!("skipping {}: {e}", dir.display()),
            }
        }
        tracing::info!("loaded {} project(s) from {}", projects.len(), root.display());
        Ok(AppState {
            root,
            base,
            projects: RwLock::new(projects),
        })
    }

    pub fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.projects
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no project {id:?}")))
    }

    pub fn insert(&self, id: String, slot: Slot) {
        self.projects
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(id, Arc::new(slot));
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .projects
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }
}

pub(crate) fn new_slot(dir: PathBuf, info: ProjectInfo) -> ApiResult<Slot> {
    write_record(&dir, &info).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Slot {
        dir,
        state: Mutex::new(SlotState {
            info,
            models: Arc::new(Models::default()),
            trainer_alive: false,
        }),
        frames: Mutex::default(),
    })
}

/// Reloads a project record. Published models are reloaded from the stage
/// artifacts, unless a job was cut short, since it may have overwritten them.
fn restore(dir: &Path, record: &Path) -> Result<Slot, ServiceError> {
    let text = std::fs::read_to_string(record).map_err(|e| ServiceError::io(record, e))?;
    let mut info: ProjectInfo =
        serde_json::from_str(&text).map_err(|e| ServiceError::Record(record.to_path_buf(), e.to_string()))?;
    let mut models = Models::default();
    if info.job.phase.is_running() {
        info.job.fail("interrupted by a service restart");
    } else if let Some(version) = info.ready.version {
        match reload_models(dir, &info, version) {
            Ok(m) => models = m,
            Err(e) => tracing::warn!("{}: dropping published models: {e}", dir.display()),
        }
    }
    info.ready = models.ready();
    write_record(dir, &info).map_err(|e| ServiceError::io(record, e))?;
    Ok(Slot {
        dir: dir.to_path_buf(),
        state: Mutex::new(SlotState {
            info,
            models: Arc::new(models),
            trainer_alive: false,
        }),
        frames: Mutex::default(),
    })
}

fn reload_models(dir: &Path, info: &ProjectInfo, version: u64) -> neurowarp_pipeline::Result<Models> {
    let project = Project::new(info.config.clone(), dir)?;
    let mut models = Models {
        version,
        ..Models::default()
    };
    if info.ready.fit {
        models.images = Some(Arc::new(load_images(&project)?));
    }
    if info.ready.warp {
        models.warp = Some(Arc::new(load_warp(&project)?));
        models.pairs = LandmarkPairs::load(dir.join(LANDMARKS_FILE))?;
    }
    for &mode in &info.ready.modes {
        models.morphs.insert(mode, Arc::new(load_blend(&project, mode)?));
    }
    Ok(models)
}
