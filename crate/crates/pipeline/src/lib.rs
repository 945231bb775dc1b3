//! Project configuration, restartable training stages and frame output.
//!
//! Each stage writes into its own directory under the project's output
//! root together with a `stamp` holding a digest of its inputs. A stage
//! whose stamp still matches is skipped unless forced.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod manifest;
pub mod render;
pub mod stages;

pub use artifacts::{Db, Progress, Quiet};
pub use config::{BlendMode, Project, ProjectConfig, RenderSpec};
pub use error::{Error, Result};
pub use manifest::{FrameEntry, FrameManifest};
