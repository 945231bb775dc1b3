use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use neurowarp_client::api::{
    CreateProject, ImageInfo, MorphJob, PathsResponse, ProjectInfo, Stage, TrainRequest, CACHE_HEADER,
    VERSION_HEADER,
};
use neurowarp_core::image::ImageGrid;
use neurowarp_core::landmarks::LandmarkPairs;
use neurowarp_core::region::RegionMask;
use neurowarp_pipeline::artifacts::sha256_hex;
use neurowarp_pipeline::stages::{landmark_paths, render_linear_frame, render_morph_frame};
use neurowarp_pipeline::{BlendMode, ProjectConfig};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::error::{ApiError, ApiResult};
use crate::state::{managed_inputs, new_slot, App, FrameKey, Models, LANDMARKS_FILE, REGION_FILE};
use crate::trainer::{self, Plan};

pub(crate) const DEFAULT_FRAME_SIZE: usize = 256;
pub(crate) const MAX_FRAME_SIZE: usize = 2048;
const MAX_PATH_SAMPLES: usize = 1025;
const TICKS: f64 = 1024.0;

/// An empty body reads as the default value.
fn parse_body<T: DeserializeOwned + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("invalid request body: {e}")))
}

/// Applies overrides to `config`, keeping the service-managed file layout.
fn reconfigure(config: &ProjectConfig, set: &[String]) -> ApiResult<ProjectConfig> {
    if set.is_empty() {
        return Ok(config.clone());
    }
    if let Some(item) = set
        .iter()
        .find(|s| s.trim_start().starts_with("inputs") || s.trim_start().starts_with("output"))
    {
        return Err(ApiError::unprocessable(format!(
            "{item:?}: inputs and output are managed by the service"
        )));
    }
    let next = ProjectConfig::from_toml_with(&config.to_toml(), set)?;
    next.validate()?;
    Ok(next)
}

pub(crate) async fn health() -> &'static str {
    "ok"
}

pub(crate) async fn list(State(app): State<App>) -> Json<Vec<String>> {
    Json(app.ids())
}

pub(crate) async fn create(State(app): State<App>, body: Bytes) -> ApiResult<Response> {
    let req: CreateProject = parse_body(&body)?;
    let mut config = reconfigure(&app.base, &req.set)?;
    let region = match &req.region {
        Some(polygon) => {
            let text = json!({ "polygon": polygon }).to_string();
            RegionMask::from_polygon_json(&text)?;
            Some(text)
        }
        None => None,
    };
    config.inputs = managed_inputs(region.as_ref().map(|_| REGION_FILE.into()));
    config.validate()?;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let dir = app.root.join(&id);
    let io = |e: std::io::Error| ApiError::internal(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(&dir).map_err(io)?;
    if let Some(text) = &region {
        std::fs::write(dir.join(REGION_FILE), text).map_err(io)?;
    }
    std::fs::write(dir.join(LANDMARKS_FILE), LandmarkPairs::default().to_json()).map_err(io)?;
    let info = ProjectInfo {
        id: id.clone(),
        version: 0,
        images: [None, None],
        landmarks: 0,
        region: region.is_some(),
        ready: Default::default(),
        job: MorphJob::new(0, &id, 0),
        config,
    };
    app.insert(id.clone(), new_slot(dir, info.clone())?);
    tracing::info!(project = %id, "created");
    let location = HeaderValue::from_str(&format!("/projects/{id}")).expect("ids are ASCII");
    Ok((StatusCode::CREATED, [(header::LOCATION, location)], Json(info)).into_response())
}

pub(crate) async fn project(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Json<ProjectInfo>> {
    let slot = app.slot(&id)?;
    let info = slot.lock().info.clone();
    Ok(Json(info))
}

fn image_index(index: &str) -> ApiResult<u8> {
    match index {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(ApiError::not_found(format!("image index must be 0 or 1, got {index:?}"))),
    }
}

fn sniff(bytes: &[u8]) -> Option<(&'static str, &'static str)> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        Some(("png", "png"))
    } else if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        Some(("jpeg", "jpg"))
    } else {
        None
    }
}

pub(crate) async fn put_image(
    State(app): State<App>,
    Path((id, index)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<ProjectInfo>> {
    let index = image_index(&index)?;
    let slot = app.slot(&id)?;
    let unsupported = |detail: String| ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, detail);
    let (format, ext) = sniff(&body).ok_or_else(|| unsupported("expected a PNG or JPEG image".into()))?;
    let decoded = {
        let body = body.clone();
        tokio::task::spawn_blocking(move || ImageGrid::decode(&body))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
    };
    let grid = decoded.map_err(|e| unsupported(format!("cannot decode {format} image: {e}")))?;
    if grid.width() < 2 || grid.height() < 2 {
        return Err(unsupported(format!("image is too small: {}×{}", grid.width(), grid.height())));
    }

    let mut st = slot.lock();
    let file = format!("image{index}.{ext}");
    for stale in ["png", "jpg"].map(|e| slot.dir.join(format!("image{index}.{e}"))) {
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| ApiError::internal(format!("{}: {e}", stale.display())))?;
        }
    }
    let path = slot.dir.join(&file);
    std::fs::write(&path, &body).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    if index == 0 {
        st.info.config.inputs.image0 = file.into();
    } else {
        st.info.config.inputs.image1 = file.into();
    }
    st.info.images[usize::from(index)] = Some(ImageInfo {
        width: grid.width(),
        height: grid.height(),
        channels: grid.channels(),
        format: format.into(),
        bytes: body.len(),
        sha256: sha256_hex(&body),
    });
    let mut models = Models::clone(&st.models);
    models.images = None;
    models.morphs.clear();
    st.set_models(models);
    st.mutated();
    slot.persist(&st)?;
    tracing::info!(project = %id, index, version = st.info.version, "image uploaded");
    Ok(Json(st.info.clone()))
}

pub(crate) async fn get_image(
    State(app): State<App>,
    Path((id, index)): Path<(String, String)>,
) -> ApiResult<Response> {
    let index = image_index(&index)?;
    let slot = app.slot(&id)?;
    let (info, file) = {
        let st = slot.lock();
        let file = if index == 0 {
            st.info.config.inputs.image0.clone()
        } else {
            st.info.config.inputs.image1.clone()
        };
        (st.info.images[usize::from(index)].clone(), file)
    };
    let info = info.ok_or_else(|| ApiError::not_found(format!("image {index} has not been uploaded")))?;
    let path = slot.dir.join(file);
    let bytes = std::fs::read(&path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    let mime = if info.format == "png" { "image/png" } else { "image/jpeg" };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

pub(crate) async fn get_landmarks(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Response> {
    let slot = app.slot(&id)?;
    let _st = slot.lock();
    let path = slot.dir.join(LANDMARKS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

pub(crate) async fn put_landmarks(
    State(app): State<App>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<ProjectInfo>> {
    let slot = app.slot(&id)?;
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::unprocessable("landmarks must be UTF-8 JSON"))?;
    let pairs = LandmarkPairs::from_json(text)?;

    let mut st = slot.lock();
    let path = slot.dir.join(LANDMARKS_FILE);
    pairs
        .save(&path)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    st.info.landmarks = pairs.len();
    let mut models = Models::clone(&st.models);
    models.warp = None;
    models.pairs = LandmarkPairs::default();
    models.morphs.clear();
    st.set_models(models);
    st.mutated();
    slot.persist(&st)?;
    tracing::info!(project = %id, pairs = pairs.len(), version = st.info.version, "landmarks updated");
    Ok(Json(st.info.clone()))
}

const ALL_STAGES: [Stage; 4] = [Stage::Fit, Stage::Warp, Stage::Blend, Stage::Render];

pub(crate) async fn train(
    State(app): State<App>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<MorphJob>)> {
    let req: TrainRequest = parse_body(&body)?;
    let slot = app.slot(&id)?;
    let mut st = slot.lock();
    if st.info.job.phase.is_running() || st.trainer_alive {
        return Err(ApiError::conflict(format!(
            "job {} is still {}",
            st.info.job.id, st.info.job.phase
        )));
    }
    let config = reconfigure(&st.info.config, &req.set)?;
    let mut stages = req.stages.clone().unwrap_or_else(|| ALL_STAGES.to_vec());
    stages.sort();
    stages.dedup();
    if stages.is_empty() {
        return Err(ApiError::unprocessable("no stages requested"));
    }
    if req.modes.contains(&BlendMode::Linear) {
        return Err(ApiError::unprocessable("linear blending needs no training"));
    }
    let mut modes = req.modes.clone();
    if modes.is_empty() && config.blend.mode != BlendMode::Linear {
        modes.push(config.blend.mode);
    }
    modes.dedup();

    let has = |s: Stage| stages.contains(&s);
    if has(Stage::Fit) || has(Stage::Blend) || has(Stage::Render) {
        if let Some(i) = st.info.images.iter().position(Option::is_none) {
            return Err(ApiError::conflict(format!("image {i} has not been uploaded")));
        }
    }
    if has(Stage::Warp) && st.info.landmarks == 0 {
        return Err(ApiError::conflict("no landmarks: upload at least one pair before training the warp"));
    }
    let gradient = (has(Stage::Blend) && !modes.is_empty())
        || (has(Stage::Render) && config.blend.mode != BlendMode::Linear);
    if gradient && !st.info.region {
        return Err(ApiError::conflict("gradient-domain blending needs a region; create the project with one"));
    }
    let project = slot.project(config.clone()).map_err(|e| ApiError::conflict(e.to_string()))?;

    st.info.config = config;
    let job_id = st.info.job.id + 1;
    let mut job = MorphJob::new(job_id, &id, st.info.version);
    job.stages = stages.clone();
    st.info.job = job.clone();
    st.trainer_alive = true;
    slot.persist(&st)?;
    drop(st);
    tracing::info!(project = %id, job = job_id, ?stages, "training");

    let plan = Plan { stages, modes };
    let worker = slot.clone();
    tokio::task::spawn_blocking(move || trainer::run(worker, job_id, project, plan));
    Ok((StatusCode::ACCEPTED, Json(job)))
}

pub(crate) async fn job(State(app): State<App>, Path(id): Path<String>) -> ApiResult<Json<MorphJob>> {
    let slot = app.slot(&id)?;
    let job = slot.lock().info.job.clone();
    Ok(Json(job))
}

fn query_number<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<T>> {
    q.get(key)
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| ApiError::bad_request(format!("{key}: cannot parse {v:?}")))
        })
        .transpose()
}

/// Frame dimensions with the longer side `size`, keeping image 0's aspect.
fn frame_dims(size: usize, info: Option<&ImageInfo>) -> (usize, usize) {
    let Some(info) = info else {
        return (size, size);
    };
    let (w, h) = (info.width as f64, info.height as f64);
    let short = |a: f64, b: f64| ((size as f64 * a / b).round() as usize).max(2);
    if info.width >= info.height {
        (size, short(h, w))
    } else {
        (short(w, h), size)
    }
}

pub(crate) async fn frame(
    State(app): State<App>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let t: f64 = query_number(&q, "t")?.ok_or_else(|| ApiError::bad_request("missing t"))?;
    if !(0.0..=1.0).contains(&t) {
        return Err(ApiError::bad_request(format!("t must lie in [0, 1], got {t}")));
    }
    let mode: BlendMode = match q.get("mode") {
        Some(m) => m.parse().map_err(ApiError::bad_request)?,
        None => BlendMode::Linear,
    };
    let size = query_number(&q, "size")?.unwrap_or(DEFAULT_FRAME_SIZE);
    if !(16..=MAX_FRAME_SIZE).contains(&size) {
        return Err(ApiError::bad_request(format!(
            "size must lie in [16, {MAX_FRAME_SIZE}], got {size}"
        )));
    }

    let slot = app.slot(&id)?;
    let (models, dims) = {
        let st = slot.lock();
        (st.models.clone(), frame_dims(size, st.info.images[0].as_ref()))
    };
    match mode {
        BlendMode::Linear => {
            if models.images.is_none() {
                return Err(ApiError::conflict("images are not fitted yet"));
            }
            if models.warp.is_none() {
                return Err(ApiError::conflict("warp is not trained yet"));
            }
        }
        m if !models.morphs.contains_key(&m) => {
            return Err(ApiError::conflict(format!("blend mode {m} is not trained yet")));
        }
        _ => {}
    }

    let tick = (t * TICKS).round() as u32;
    let key = FrameKey {
        version: models.version,
        mode,
        tick,
        width: dims.0,
        height: dims.1,
    };
    let (png, hit) = match slot.cached_frame(&key) {
        Some(png) => (png, true),
        None => {
            let png = tokio::task::spawn_blocking(move || render(&models, mode, dims, f64::from(tick) / TICKS))
                .await
                .map_err(|e| ApiError::internal(e.to_string()))??;
            let png = Arc::new(png);
            slot.cache_frame(key, png.clone());
            (png, false)
        }
    };
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("image/png")),
            (header::HeaderName::from_static(VERSION_HEADER), HeaderValue::from(key.version)),
            (
                header::HeaderName::from_static(CACHE_HEADER),
                HeaderValue::from_static(if hit { "hit" } else { "miss" }),
            ),
        ],
        png.as_ref().clone(),
    )
        .into_response())
}

fn render(models: &Models, mode: BlendMode, (w, h): (usize, usize), t: f64) -> ApiResult<Vec<u8>> {
    let frame = match mode {
        BlendMode::Linear => {
            let (Some(images), Some(warp)) = (&models.images, &models.warp) else {
                return Err(ApiError::conflict("warp is not trained yet"));
            };
            render_linear_frame(warp, &images.0, &images.1, w, h, t)?
        }
        m => {
            let model = models
                .morphs
                .get(&m)
                .ok_or_else(|| ApiError::conflict(format!("blend mode {m} is not trained yet")))?;
            render_morph_frame(model, w, h, t)?
        }
    };
    Ok(frame.encode_png()?)
}

pub(crate) async fn paths(
    State(app): State<App>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<PathsResponse>> {
    let samples = query_number(&q, "samples")?.unwrap_or(33usize);
    if !(2..=MAX_PATH_SAMPLES).contains(&samples) {
        return Err(ApiError::bad_request(format!(
            "samples must lie in [2, {MAX_PATH_SAMPLES}], got {samples}"
        )));
    }
    let slot = app.slot(&id)?;
    let models = slot.lock().models.clone();
    let Some(warp) = models.warp.clone() else {
        return Err(ApiError::conflict("warp is not trained yet"));
    };
    let version = models.version;
    let doc = tokio::task::spawn_blocking(move || landmark_paths(warp.as_ref(), &models.pairs, samples))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(PathsResponse {
        artifact_version: version,
        paths: doc,
    }))
}
