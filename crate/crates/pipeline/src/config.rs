use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use neurowarp_core::blend::{GradientMode, MorphConfig};
use neurowarp_core::neural_image::ImageFitConfig;
use neurowarp_core::warp::WarpConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How frames are composed from the two warped images.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendMode {
    #[default]
    Linear,
    Clone,
    Average,
    Mix,
}

impl BlendMode {
    pub fn gradient_mode(self) -> Option<GradientMode> {
        match self {
            BlendMode::Linear => None,
            BlendMode::Clone => Some(GradientMode::Clone),
            BlendMode::Average => Some(GradientMode::Average),
            BlendMode::Mix => Some(GradientMode::Mix),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BlendMode::Linear => "linear",
            BlendMode::Clone => "clone",
            BlendMode::Average => "average",
            BlendMode::Mix => "mix",
        }
    }
}

impl fmt::Display for BlendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(BlendMode::Linear),
            "clone" => Ok(BlendMode::Clone),
            "average" => Ok(BlendMode::Average),
            "mix" => Ok(BlendMode::Mix),
            other => Err(format!("unknown blend mode {other:?} (expected linear, clone, average or mix)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub image0: PathBuf,
    pub image1: PathBuf,
    pub landmarks: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendSettings {
    pub mode: BlendMode,
    /// Which warped image supplies the values outside the region.
    pub base: u8,
}

impl Default for BlendSettings {
    fn default() -> Self {
        BlendSettings {
            mode: BlendMode::Linear,
            base: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSettings {
    /// The image that receives the region; the other one donates it.
    pub base: u8,
}

impl Default for TransferSettings {
    fn default() -> Self {
        TransferSettings { base: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Time samples per landmark path.
    pub path_samples: usize,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            width: 256,
            height: 256,
            frames: 33,
            t_start: 0.0,
            t_end: 1.0,
            path_samples: 33,
        }
    }
}

impl RenderSpec {
    pub fn times(&self) -> Vec<f64> {
        let n = self.frames;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.t_end
                } else {
                    self.t_start + (self.t_end - self.t_start) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub inputs: Inputs,
    /// Artifact directory; defaults to `out` next to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub blend: BlendSettings,
    #[serde(default)]
    pub transfer: TransferSettings,
    #[serde(default)]
    pub fit: ImageFitConfig,
    #[serde(default)]
    pub warp: WarpConfig,
    #[serde(default)]
    pub morph: MorphConfig,
    #[serde(default)]
    pub render: RenderSpec,
}

impl ProjectConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parses `text`, first applying `key.path=value` overrides. Values are
    /// read as TOML and fall back to plain strings.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("project config is representable as TOML")
    }

    /// Checks everything that does not need the file system.
    pub fn validate(&self) -> Result<()> {
        let r = &self.render;
        if r.frames < 2 {
            return Err(Error::Config(format!("render.frames must be at least 2, got {}", r.frames)));
        }
        if r.width < 16 || r.height < 16 {
            return Err(Error::Config(format!(
                "render resolution must be at least 16×16, got {}×{}",
                r.width, r.height
            )));
        }
        if !(0.0..=1.0).contains(&r.t_start) || !(0.0..=1.0).contains(&r.t_end) || r.t_start > r.t_end {
            return Err(Error::Config(format!(
                "render time range [{}, {}] must lie in [0, 1] and be ordered",
                r.t_start, r.t_end
            )));
        }
        if r.path_samples < 2 {
            return Err(Error::Config("render.path_samples must be at least 2".into()));
        }
        if self.blend.base > 1 || self.transfer.base > 1 {
            return Err(Error::Config("base image must be 0 or 1".into()));
        }
        if self.blend.mode != BlendMode::Linear && self.inputs.region.is_none() {
            return Err(Error::Config(format!("blend mode {} needs inputs.region", self.blend.mode)));
        }
        self.warp.validate()?;
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty key in {item:?}")))?;
    let mut node = table;
    for part in parts {
        node = node
            .entry(part)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {part} is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// A loaded config with every path made absolute.
#[derive(Clone, Debug)]
pub struct Project {
    pub config: ProjectConfig,
    pub out: PathBuf,
}

impl Project {
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = ProjectConfig::from_toml_with(&text, overrides).map_err(|e| match e {
            Error::Config(message) => Error::ConfigFile {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        let root = path.parent().unwrap_or(Path::new("."));
        Self::new(config, root)
    }

    /// Resolves relative paths against `root` and checks that inputs exist.
    pub fn new(mut config: ProjectConfig, root: &Path) -> Result<Self> {
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { root.join(p) };
        let inputs = &mut config.inputs;
        inputs.image0 = abs(&inputs.image0);
        inputs.image1 = abs(&inputs.image1);
        inputs.landmarks = abs(&inputs.landmarks);
        inputs.region = inputs.region.as_deref().map(abs);
        let out = abs(config.output.as_deref().unwrap_or(Path::new("out")));
        config.validate()?;
        let mut files = vec![&config.inputs.image0, &config.inputs.image1, &config.inputs.landmarks];
        files.extend(config.inputs.region.as_ref());
        for file in files {
            if !file.is_file() {
                return Err(Error::io(
                    file,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
        }
        Ok(Project { config, out })
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out.join(stage)
    }
}
