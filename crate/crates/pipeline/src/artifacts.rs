use std::fmt;
use std::ops::ControlFlow;
use std::path::Path;

use neurowarp_core::train::{Observer, TrainEvent};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Core(e.into()))
}

/// Digest of everything a stage depends on. A stage whose stamp matches and
/// whose outputs all exist is skipped.
pub fn stage_key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn is_fresh(dir: &Path, key: &str, outputs: &[&str]) -> bool {
    let stamp = std::fs::read_to_string(dir.join("stamp")).unwrap_or_default();
    stamp.trim() == key && outputs.iter().all(|f| dir.join(f).exists())
}

pub fn write_stamp(dir: &Path, key: &str) -> Result<()> {
    write_bytes(&dir.join("stamp"), format!("{key}\n").as_bytes())
}

pub fn read_stamp(dir: &Path) -> Option<String> {
    std::fs::read_to_string(dir.join("stamp")).ok().map(|s| s.trim().to_string())
}

/// PSNR in decibels; identical inputs give infinity, written as `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Db(pub f64);

impl fmt::Display for Db {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("inf")
        } else {
            write!(f, "{:.2}", self.0)
        }
    }
}

impl Serialize for Db {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            Err(serde::ser::Error::custom(format!("PSNR {} is not reportable", self.0)))
        }
    }
}

impl<'de> Deserialize<'de> for Db {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Db(v)),
            Raw::Text(t) if t == "inf" => Ok(Db(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR value {t:?}"))),
        }
    }
}

/// Receives training events from the stages.
pub trait Progress {
    fn event(&mut self, _stage: &str, _event: &TrainEvent) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }

    fn message(&mut self, _text: &str) {}
}

pub struct Quiet;

impl Progress for Quiet {}

pub(crate) struct Labeled<'a> {
    pub label: String,
    pub inner: &'a mut dyn Progress,
}

impl Observer for Labeled<'_> {
    fn on_event(&mut self, event: &TrainEvent) -> ControlFlow<()> {
        self.inner.event(&self.label, event)
    }
}
