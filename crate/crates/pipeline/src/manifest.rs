use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifacts::{file_sha256, read_json, write_json};
use crate::error::{Error, Result};

pub const FRAMES_VERSION: &str = "frames/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub t: f64,
    pub file: String,
    pub sha256: String,
}

/// Sidecar for a rendered frame sequence, with a content hash per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub version: String,
    pub mode: String,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameEntry>,
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:04}.png")
}

impl FrameManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let m: FrameManifest = read_json(&dir.join(MANIFEST_FILE))?;
        if m.version != FRAMES_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported manifest version {:?}",
                dir.display(),
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Re-hashes every frame file and compares with the recorded digest.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for f in &self.frames {
            let got = file_sha256(&dir.join(&f.file))?;
            if got != f.sha256 {
                return Err(Error::Mismatch(format!("{} hash {got} does not match manifest", f.file)));
            }
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }
}
