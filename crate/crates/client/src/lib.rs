//! Client for the neurowarp HTTP service.

pub mod api;

use std::time::Duration;

use neurowarp_core::landmarks::LandmarkFile;
use neurowarp_pipeline::BlendMode;
use reqwest::{RequestBuilder, Response};
pub use reqwest::StatusCode;
use serde::de::DeserializeOwned;

use api::{CreateProject, ErrorBody, MorphJob, PathsResponse, Phase, ProjectInfo, TrainRequest, CACHE_HEADER, VERSION_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),

    #[error("{status}: {message}")]
    Status { status: StatusCode, message: String },

    #[error("malformed response: {0}")]
    Malformed(String),
}

impl Error {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            Error::Status { status, .. } => Some(*status),
            Error::Http(e) => e.status(),
            Error::Malformed(_) => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A rendered preview frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub png: Vec<u8>,
    pub version: u64,
    pub cache_hit: bool,
}

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send(&self, req: RequestBuilder) -> Result<Response> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
        Err(Error::Status { status, message })
    }

    async fn json<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T> {
        Ok(self.send(req).await?.json().await?)
    }

    pub async fn create_project(&self, body: &CreateProject) -> Result<ProjectInfo> {
        self.json(self.http.post(self.url("/projects")).json(body)).await
    }

    pub async fn project(&self, id: &str) -> Result<ProjectInfo> {
        self.json(self.http.get(self.url(&format!("/projects/{id}")))).await
    }

    /// Uploads a PNG or JPEG as image 0 or 1.
    pub async fn put_image(&self, id: &str, index: u8, bytes: Vec<u8>) -> Result<ProjectInfo> {
        let req = self.http.put(self.url(&format!("/projects/{id}/images/{index}"))).body(bytes);
        self.json(req).await
    }

    pub async fn image(&self, id: &str, index: u8) -> Result<Vec<u8>> {
        let resp = self.send(self.http.get(self.url(&format!("/projects/{id}/images/{index}")))).await?;
        Ok(resp.bytes().await?.to_vec())
    }

    pub async fn put_landmarks(&self, id: &str, doc: &LandmarkFile) -> Result<ProjectInfo> {
        self.json(self.http.put(self.url(&format!("/projects/{id}/landmarks"))).json(doc)).await
    }

    pub async fn landmarks(&self, id: &str) -> Result<LandmarkFile> {
        self.json(self.http.get(self.url(&format!("/projects/{id}/landmarks")))).await
    }

    pub async fn train(&self, id: &str, body: &TrainRequest) -> Result<MorphJob> {
        self.json(self.http.post(self.url(&format!("/projects/{id}/train"))).json(body)).await
    }

    pub async fn job(&self, id: &str) -> Result<MorphJob> {
        self.json(self.http.get(self.url(&format!("/projects/{id}/job")))).await
    }

    /// Polls the job until it is done or failed.
    pub async fn wait(&self, id: &str, every: Duration, mut on_update: impl FnMut(&MorphJob)) -> Result<MorphJob> {
        loop {
            let job = self.job(id).await?;
            on_update(&job);
            if matches!(job.phase, Phase::Done | Phase::Failed) {
                return Ok(job);
            }
            tokio::time::sleep(every).await;
        }
    }

    pub async fn frame(&self, id: &str, t: f64, mode: BlendMode, size: usize) -> Result<Frame> {
        let req = self
            .http
            .get(self.url(&format!("/projects/{id}/frame")))
            .query(&[("t", t.to_string()), ("mode", mode.to_string()), ("size", size.to_string())]);
        let resp = self.send(req).await?;
        let header = |name: &str| resp.headers().get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
        let version = header(VERSION_HEADER)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Malformed(format!("missing {VERSION_HEADER} header")))?;
        let cache_hit = header(CACHE_HEADER).as_deref() == Some("hit");
        Ok(Frame {
            png: resp.bytes().await?.to_vec(),
            version,
            cache_hit,
        })
    }

    pub async fn paths(&self, id: &str, samples: usize) -> Result<PathsResponse> {
        let req = self
            .http
            .get(self.url(&format!("/projects/{id}/paths")))
            .query(&[("samples", samples)]);
        self.json(req).await
    }
}
