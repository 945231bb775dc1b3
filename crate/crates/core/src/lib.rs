//! Neural image warping and blending with sinusoidal coordinate networks.
//!
//! Images are fitted to [`mlp::SineNet`]s, a single time-dependent network
//! `T(x, t)` encodes both the forward and inverse landmark-aligning warps,
//! and morphs are produced either by blending the aligned warps linearly or
//! by fitting a space-time network in the gradient domain.

pub mod blend;
pub mod error;
pub mod fixtures;
pub mod image;
pub mod landmarks;
pub mod metrics;
pub mod mlp;
pub mod neural_image;
pub mod region;
pub mod train;
pub mod warp;

pub use error::{Error, Result};
