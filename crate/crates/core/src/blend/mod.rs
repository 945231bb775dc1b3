//! Morphs from aligned warpings: linear blending and gradient-domain
//! blending (clone / average / mix) fitted by a space-time network.

mod train;

use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use train::{feature_transfer, feature_transfer_with, train_morph, train_morph_with, MorphConfig, TimeSampling};

use crate::error::{Error, Result};
use crate::mlp::{JetSpec, Order, SineNet, SineNetJson};
use crate::neural_image::NeuralImage;
use crate::region::RegionMask;
use crate::train::{chunk_rows, map_chunks, CHUNK_ROWS};
use crate::warp::{spacetime_rows, WarpField, WarpModel};

pub const MORPH_MODEL_VERSION: &str = "morph-model/1";

/// How the target gradient field `U` is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    /// `U` is the Jacobian of the non-base warping.
    Clone,
    /// `U = (1 − t)·Jac 𝓘₀ + t·Jac 𝓘₁`.
    Average,
    /// Whichever warped Jacobian has the larger Frobenius norm.
    Mix,
}

impl std::str::FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clone" => Ok(GradientMode::Clone),
            "average" => Ok(GradientMode::Average),
            "mix" => Ok(GradientMode::Mix),
            other => Err(Error::Invalid(format!("unknown blend mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for GradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GradientMode::Clone => "clone",
            GradientMode::Average => "average",
            GradientMode::Mix => "mix",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientFieldSpec {
    pub mode: GradientMode,
    /// Which warping supplies the boundary values `𝓘*` (0 or 1).
    pub base: u8,
    /// `Ω₀`, drawn at time zero on image 0's grid.
    pub region: RegionMask,
}

impl GradientFieldSpec {
    pub fn new(mode: GradientMode, base: u8, region: RegionMask) -> Result<Self> {
        let spec = GradientFieldSpec { mode, base, region };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base > 1 {
            return Err(Error::Invalid(format!("base must be 0 or 1, got {}", self.base)));
        }
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Invalid(format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

fn check_channels(i0: &NeuralImage, i1: &NeuralImage) -> Result<()> {
    if i0.channels() != i1.channels() {
        return Err(Error::DimensionMismatch {
            expected: i0.channels(),
            got: i1.channels(),
        });
    }
    Ok(())
}

/// `(1 − t)·𝓘₀(x, t) + t·𝓘₁(x, t)`.
pub fn linear_blend(
    warp: &WarpModel,
    i0: &NeuralImage,
    i1: &NeuralImage,
    coords: ArrayView2<f64>,
    t: f64,
) -> Result<Array2<f64>> {
    check_time(t)?;
    check_channels(i0, i1)?;
    let a = crate::warp::warped_image_sample(warp, i0, 0, coords, t)?;
    if t == 0.0 {
        return Ok(a);
    }
    let b = crate::warp::warped_image_sample(warp, i1, 1, coords, t)?;
    if t == 1.0 {
        return Ok(b);
    }
    Ok(a * (1.0 - t) + b * t)
}

/// Colors and spatial Jacobians (`N × C × 2`) of `𝓘ᵢ(x, t) = Iᵢ(T(x, i − t))`
/// at per-row times.
pub fn warped_jacobians(
    warp: &WarpModel,
    image: &NeuralImage,
    i: u8,
    coords: ArrayView2<f64>,
    times: &[f64],
) -> (Array2<f64>, Array3<f64>) {
    let mut rows = Array2::zeros((coords.nrows(), 3));
    rows.slice_mut(s![.., 0..2]).assign(&coords);
    for (r, &t) in times.iter().enumerate() {
        rows[[r, 2]] = f64::from(i) - t;
    }
    let moved = warp.warp_batch(rows.view());
    let jt = warp.spatial_jacobian_batch(rows.view());
    let colors = image.sample(moved.view());
    let grad = image.image_gradient(moved.view());
    let c = image.channels();
    let mut jac = Array3::zeros((coords.nrows(), c, 2));
    for b in 0..coords.nrows() {
        for k in 0..c {
            for d in 0..2 {
                jac[[b, k, d]] = grad[[b, k, 0]] * jt[[b, 0, d]] + grad[[b, k, 1]] * jt[[b, 1, d]];
            }
        }
    }
    (colors, jac)
}

fn frobenius(j: &Array3<f64>, b: usize) -> f64 {
    j.index_axis(Axis(0), b).iter().map(|v| v * v).sum::<f64>()
}

/// Combines the two warped Jacobians per `mode` at per-row times.
pub(crate) fn combine(mode: GradientMode, base: u8, j0: &Array3<f64>, j1: &Array3<f64>, times: &[f64]) -> Array3<f64> {
    match mode {
        GradientMode::Clone => {
            if base == 0 {
                j1.clone()
            } else {
                j0.clone()
            }
        }
        GradientMode::Average => {
            let mut u = j0.clone();
            for (b, &t) in times.iter().enumerate() {
                let row = &j0.index_axis(Axis(0), b) * (1.0 - t) + &j1.index_axis(Axis(0), b) * t;
                u.index_axis_mut(Axis(0), b).assign(&row);
            }
            u
        }
        GradientMode::Mix => {
            let mut u = j1.clone();
            for b in 0..times.len() {
                if frobenius(j0, b) > frobenius(j1, b) {
                    u.index_axis_mut(Axis(0), b).assign(&j0.index_axis(Axis(0), b));
                }
            }
            u
        }
    }
}

/// Target gradient field `U(x, t)` as `N × C × 2`.
pub fn target_gradient(
    warp: &WarpModel,
    i0: &NeuralImage,
    i1: &NeuralImage,
    spec: &GradientFieldSpec,
    coords: ArrayView2<f64>,
    t: f64,
) -> Result<Array3<f64>> {
    check_time(t)?;
    check_channels(i0, i1)?;
    spec.validate()?;
    let times = vec![t; coords.nrows()];
    let (_, j0) = warped_jacobians(warp, i0, 0, coords, &times);
    let (_, j1) = warped_jacobians(warp, i1, 1, coords, &times);
    Ok(combine(spec.mode, spec.base, &j0, &j1, &times))
}

/// Post-training measurements of a morph network.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MorphDiagnostics {
    /// Mean `|𝓘 − 𝓘*|` (clamped colors, per channel) over evaluation samples outside `Ω`.
    pub boundary_residual: f64,
    /// Mean `‖Jac 𝓘 − U‖_F` over evaluation samples inside `Ω`.
    pub cloning_residual: f64,
    /// Fraction of evaluation samples inside `Ω`.
    pub region_fraction: f64,
    pub history: Vec<MorphHistoryEntry>,
    pub steps: usize,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MorphHistoryEntry {
    pub step: usize,
    pub cloning: f64,
    pub boundary: f64,
    pub anchor: f64,
    pub total: f64,
}

/// A space-time network `𝓘(x, t)` fitted in the gradient domain.
#[derive(Clone, Debug, PartialEq)]
pub struct MorphModel {
    net: SineNet,
    spec: GradientFieldSpec,
    config: MorphConfig,
    diagnostics: Option<MorphDiagnostics>,
}

#[derive(Serialize, Deserialize)]
struct MorphModelJson {
    version: String,
    net: SineNetJson,
    spec: GradientFieldSpec,
    config: MorphConfig,
    #[serde(default)]
    diagnostics: Option<MorphDiagnostics>,
}

impl MorphModel {
    pub fn new(net: SineNet, spec: GradientFieldSpec, config: MorphConfig) -> Result<Self> {
        if net.input_dim() != 3 {
            return Err(Error::InvalidArchitecture(format!(
                "morph network must take 3 inputs, got {:?}",
                net.layer_dims()
            )));
        }
        spec.validate()?;
        Ok(MorphModel {
            net,
            spec,
            config,
            diagnostics: None,
        })
    }

    pub fn net(&self) -> &SineNet {
        &self.net
    }

    pub fn spec(&self) -> &GradientFieldSpec {
        &self.spec
    }

    pub fn config(&self) -> &MorphConfig {
        &self.config
    }

    pub fn channels(&self) -> usize {
        self.net.output_dim()
    }

    pub fn diagnostics(&self) -> Option<&MorphDiagnostics> {
        self.diagnostics.as_ref()
    }

    pub(crate) fn set_diagnostics(&mut self, d: MorphDiagnostics) {
        self.diagnostics = Some(d);
    }

    /// Unclamped colors at per-row `(x, y, t)`.
    pub(crate) fn raw_colors(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        let c = self.channels();
        let flat = map_chunks(rows.nrows(), CHUNK_ROWS, |r| {
            let o = self.net.forward_batch(rows.slice(s![r, ..]))?;
            Ok(o.iter().map(|v| (v + 1.0) / 2.0).collect())
        })
        .expect("morph network dims are validated");
        Array2::from_shape_vec((rows.nrows(), c), flat).expect("row-major chunks")
    }

    /// Spatial Jacobians of the colors at per-row `(x, y, t)`, `N × C × 2`.
    pub fn color_jacobians(&self, rows: ArrayView2<f64>) -> Array3<f64> {
        let c = self.channels();
        let spec = JetSpec::new(Order::Jacobian, 2);
        let flat = map_chunks(rows.nrows(), chunk_rows(spec.channels()), |r| {
            let jet = self.net.eval(rows.slice(s![r, ..]), spec)?;
            Ok((0..jet.batch())
                .flat_map(|b| (0..c).flat_map(move |k| [0, 1].map(|d| (b, k, d))))
                .map(|(b, k, d)| 0.5 * jet.grad(b, k, d))
                .collect())
        })
        .expect("morph network dims are validated");
        Array3::from_shape_vec((rows.nrows(), c, 2), flat).expect("row-major chunks")
    }

    pub fn to_json(&self) -> String {
        let doc = MorphModelJson {
            version: MORPH_MODEL_VERSION.into(),
            net: self.net.to_json(),
            spec: self.spec.clone(),
            config: self.config.clone(),
            diagnostics: self.diagnostics.clone(),
        };
        serde_json::to_string(&doc).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MorphModelJson = serde_json::from_str(text)?;
        if doc.version != MORPH_MODEL_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported morph model version {:?}",
                doc.version
            )));
        }
        let mut model = Self::new(SineNet::from_json(&doc.net)?, doc.spec, doc.config)?;
        model.diagnostics = doc.diagnostics;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Colors of the morph at time `t`, clamped to `[0, 1]`.
pub fn morph_sample(model: &MorphModel, coords: ArrayView2<f64>, t: f64) -> Result<Array2<f64>> {
    check_time(t)?;
    Ok(model
        .raw_colors(spacetime_rows(coords, t).view())
        .mapv(|v| v.clamp(0.0, 1.0)))
}

/// Boundary values `𝓘*(x, t)` at per-row times.
pub(crate) fn base_colors(
    warp: &WarpModel,
    i0: &NeuralImage,
    i1: &NeuralImage,
    base: u8,
    coords: ArrayView2<f64>,
    times: &[f64],
) -> Array2<f64> {
    let (img, i) = if base == 0 { (i0, 0) } else { (i1, 1) };
    let mut rows = Array2::zeros((coords.nrows(), 3));
    rows.slice_mut(s![.., 0..2]).assign(&coords);
    for (r, &t) in times.iter().enumerate() {
        rows[[r, 2]] = f64::from(i) - t;
    }
    img.sample(warp.warp_batch(rows.view()).view())
}

/// Region membership `x ∈ T_t(Ω₀)` at per-row times.
pub(crate) fn membership(warp: &WarpModel, region: &RegionMask, coords: ArrayView2<f64>, times: &[f64]) -> Vec<bool> {
    let mut rows = Array2::zeros((coords.nrows(), 3));
    rows.slice_mut(s![.., 0..2]).assign(&coords);
    for (r, &t) in times.iter().enumerate() {
        rows[[r, 2]] = -t;
    }
    let back = warp.warp_batch(rows.view());
    back.rows()
        .into_iter()
        .zip(coords.rows())
        .zip(times)
        .map(|((b, x), &t)| {
            if t == 0.0 {
                region.contains([x[0], x[1]])
            } else {
                region.contains([b[0], b[1]])
            }
        })
        .collect()
}

/// Mean `|𝓘 − 𝓘*|` over the rows outside `Ω`, with clamped colors.
pub fn boundary_residual(
    model: &MorphModel,
    warp: &WarpModel,
    i0: &NeuralImage,
    i1: &NeuralImage,
    coords: ArrayView2<f64>,
    times: &[f64],
) -> f64 {
    let inside = membership(warp, &model.spec.region, coords, times);
    let idx: Vec<usize> = (0..coords.nrows()).filter(|&r| !inside[r]).collect();
    if idx.is_empty() {
        return 0.0;
    }
    let xs = coords.select(Axis(0), &idx);
    let ts: Vec<f64> = idx.iter().map(|&r| times[r]).collect();
    let mut rows = Array2::zeros((idx.len(), 3));
    rows.slice_mut(s![.., 0..2]).assign(&xs);
    rows.column_mut(2).assign(&ndarray::Array1::from(ts.clone()));
    let got = model.raw_colors(rows.view()).mapv(|v| v.clamp(0.0, 1.0));
    let want = base_colors(warp, i0, i1, model.spec.base, xs.view(), &ts);
    (&got - &want).mapv(f64::abs).mean().unwrap()
}
