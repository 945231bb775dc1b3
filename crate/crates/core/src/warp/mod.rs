//! Time-dependent neural warping `T(x, t) = x + N(x, t)`.
//!
//! `T(·, t)` for `t ∈ [0, 1]` carries image 0 towards image 1; `T(·, -t)`
//! is trained to be its inverse.

mod loss;
mod train;

use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use loss::{loss_data, loss_identity, loss_inverse, loss_thin_plate, LossWeights, WarpTerms};
pub use train::{train_warp, train_warp_with, WarpConfig};

use crate::error::{Error, Result};
use crate::landmarks::LandmarkPairs;
use crate::mlp::{JetSpec, Order, SineNet, SineNetJson};
use crate::neural_image::NeuralImage;
use crate::region::RegionMask;
use crate::train::{chunk_rows, map_chunks, CHUNK_ROWS};

pub const WARP_MODEL_VERSION: &str = "warp-model/1";

/// A map `(x, y, t) ↦ T ∈ ℝ²` with second derivatives.
///
/// Loss functions are written against this trait so closed-form maps can
/// stand in for a trained network.
pub trait WarpField: Sync {
    fn warp(&self, p: [f64; 3]) -> [f64; 2];

    /// `H[k][i][j] = ∂²T_k / ∂p_i ∂p_j` over `(x, y, t)`.
    fn hessian(&self, p: [f64; 3]) -> [[[f64; 3]; 3]; 2];

    /// Rows of `(x, y, t)` to rows of `T`.
    fn warp_batch(&self, pts: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((pts.nrows(), 2));
        for (r, row) in pts.rows().into_iter().enumerate() {
            let w = self.warp([row[0], row[1], row[2]]);
            out[[r, 0]] = w[0];
            out[[r, 1]] = w[1];
        }
        out
    }

    /// Squared Frobenius norm of the Hessian, summed over both outputs.
    fn hessian_sq_batch(&self, pts: ArrayView2<f64>) -> Array1<f64> {
        pts.rows()
            .into_iter()
            .map(|row| {
                self.hessian([row[0], row[1], row[2]])
                    .iter()
                    .flatten()
                    .flatten()
                    .map(|h| h * h)
                    .sum()
            })
            .collect()
    }
}

/// Post-training measurements, all in domain units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WarpDiagnostics {
    /// Mean `‖T(x, 0) − x‖`.
    pub identity_residual: f64,
    /// Mean `‖T(T(x, t), −t) − x‖` over `t ∈ [−1, 1]`.
    pub inverse_residual: f64,
    /// Mean `‖T(p_j, 1) − q_j‖`.
    pub alignment_error: f64,
    /// Mean `‖T(q_j, −1) − p_j‖`.
    pub reverse_alignment_error: f64,
    /// Max over pairs and sampled `t ∈ [0, 1]` of `‖T(p_j, t) − T(q_j, t − 1)‖`.
    pub path_matching_max: f64,
    /// Mean squared Frobenius norm of the space-time Hessian.
    pub thin_plate_energy: f64,
    pub final_terms: WarpTerms,
    pub history: Vec<HistoryEntry>,
    pub steps: usize,
    pub seconds: f64,
}

impl WarpDiagnostics {
    /// Worse of the forward and reverse endpoint errors.
    pub fn endpoint_error(&self) -> f64 {
        self.alignment_error.max(self.reverse_alignment_error)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub terms: WarpTerms,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarpModel {
    net: SineNet,
    config: WarpConfig,
    diagnostics: Option<WarpDiagnostics>,
}

#[derive(Serialize, Deserialize)]
struct WarpModelJson {
    version: String,
    net: SineNetJson,
    config: WarpConfig,
    #[serde(default)]
    diagnostics: Option<WarpDiagnostics>,
}

impl WarpModel {
    pub fn new(net: SineNet, config: WarpConfig) -> Result<Self> {
        if net.input_dim() != 3 || net.output_dim() != 2 {
            return Err(Error::InvalidArchitecture(format!(
                "warp network must map 3 inputs to 2 outputs, got {:?}",
                net.layer_dims()
            )));
        }
        Ok(WarpModel {
            net,
            config,
            diagnostics: None,
        })
    }

    /// Freshly initialized network for `config`.
    pub fn init(config: &WarpConfig) -> Result<Self> {
        let net = SineNet::init(&config.layer_dims(), config.omega0, config.seed)?;
        Self::new(net, config.clone())
    }

    /// Exactly `T(x, t) = x`: the residual network's output layer is zero.
    pub fn identity(config: &WarpConfig) -> Result<Self> {
        let mut model = Self::init(config)?;
        let last = model.net.depth();
        model.net.weights_mut()[last].fill(0.0);
        model.net.biases_mut()[last].fill(0.0);
        Ok(model)
    }

    pub fn net(&self) -> &SineNet {
        &self.net
    }

    pub fn config(&self) -> &WarpConfig {
        &self.config
    }

    pub fn diagnostics(&self) -> Option<&WarpDiagnostics> {
        self.diagnostics.as_ref()
    }

    pub(crate) fn set_diagnostics(&mut self, d: WarpDiagnostics) {
        self.diagnostics = Some(d);
    }

    /// Spatial Jacobians `∂T/∂x` for each row of `(x, y, t)`, as `N × 2 × 2`.
    pub fn spatial_jacobian_batch(&self, pts: ArrayView2<f64>) -> Array3<f64> {
        let parts = map_chunks(pts.nrows(), chunk_rows(3), |r| {
            let jet = self
                .net
                .eval(pts.slice(s![r, ..]), JetSpec::new(Order::Jacobian, 2))?;
            Ok((0..jet.batch())
                .map(|b| {
                    let g = |k, i| jet.grad(b, k, i) + if k == i { 1.0 } else { 0.0 };
                    [[g(0, 0), g(0, 1)], [g(1, 0), g(1, 1)]]
                })
                .collect())
        })
        .expect("warp network dims are validated");
        let mut out = Array3::zeros((pts.nrows(), 2, 2));
        for (b, j) in parts.iter().enumerate() {
            for k in 0..2 {
                for i in 0..2 {
                    out[[b, k, i]] = j[k][i];
                }
            }
        }
        out
    }

    /// Thin-plate energy estimate over the given space-time samples.
    pub fn thin_plate_energy(&self, pts: ArrayView2<f64>) -> f64 {
        let h = self.hessian_sq_batch(pts);
        if h.is_empty() {
            0.0
        } else {
            h.mean().unwrap()
        }
    }

    pub fn to_json(&self) -> String {
        let doc = WarpModelJson {
            version: WARP_MODEL_VERSION.into(),
            net: self.net.to_json(),
            config: self.config.clone(),
            diagnostics: self.diagnostics.clone(),
        };
        serde_json::to_string(&doc).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WarpModelJson = serde_json::from_str(text)?;
        if doc.version != WARP_MODEL_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported warp model version {:?}",
                doc.version
            )));
        }
        let mut model = Self::new(SineNet::from_json(&doc.net)?, doc.config)?;
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

impl WarpField for WarpModel {
    fn warp(&self, p: [f64; 3]) -> [f64; 2] {
        let o = self.net.forward(&p).expect("warp network dims are validated");
        [p[0] + o[0], p[1] + o[1]]
    }

    fn hessian(&self, p: [f64; 3]) -> [[[f64; 3]; 3]; 2] {
        let h = self.net.input_hessian(&p).expect("warp network dims are validated");
        let mut out = [[[0.0; 3]; 3]; 2];
        for (k, m) in out.iter_mut().enumerate() {
            for (i, row) in m.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = h[[k, i, j]];
                }
            }
        }
        out
    }

    fn warp_batch(&self, pts: ArrayView2<f64>) -> Array2<f64> {
        let rows = map_chunks(pts.nrows(), CHUNK_ROWS, |r| {
            let view = pts.slice(s![r, ..]);
            let mut o = self.net.forward_batch(view)?;
            o += &view.slice(s![.., 0..2]);
            Ok(o.rows().into_iter().map(|row| [row[0], row[1]]).collect())
        })
        .expect("warp network dims are validated");
        let mut out = Array2::zeros((rows.len(), 2));
        for (r, [a, b]) in rows.into_iter().enumerate() {
            out[[r, 0]] = a;
            out[[r, 1]] = b;
        }
        out
    }

    fn hessian_sq_batch(&self, pts: ArrayView2<f64>) -> Array1<f64> {
        let spec = JetSpec::new(Order::Hessian, 3);
        let vals = map_chunks(pts.nrows(), chunk_rows(spec.channels()), |r| {
            let jet = self.net.eval(pts.slice(s![r, ..]), spec)?;
            let mut acc = Array1::<f64>::zeros(jet.batch());
            for i in 0..3 {
                for j in i..3 {
                    let w = if i == j { 1.0 } else { 2.0 };
                    acc += &(jet.hessians(i, j).map(|h| h * h).sum_axis(Axis(1)) * w);
                }
            }
            Ok(acc.to_vec())
        })
        .expect("warp network dims are validated");
        Array1::from(vals)
    }
}

fn check_time(t: f64, lo: f64) -> Result<()> {
    if !(lo..=1.0).contains(&t) {
        return Err(Error::Invalid(format!("time {t} outside [{lo}, 1]")));
    }
    Ok(())
}

/// `T(x, t)` for `t ∈ [−1, 1]`; negative times evaluate the inverse map.
pub fn warp_point(model: &impl WarpField, x: [f64; 2], t: f64) -> Result<[f64; 2]> {
    check_time(t, -1.0)?;
    Ok(model.warp([x[0], x[1], t]))
}

/// Rows of `[x, y, t]` for `coords` at a common time.
pub fn spacetime_rows(coords: ArrayView2<f64>, t: f64) -> Array2<f64> {
    let mut out = Array2::from_elem((coords.nrows(), 3), t);
    out.slice_mut(s![.., 0..2]).assign(&coords);
    out
}

/// Colors of the aligned warping `Iᵢ(T(x, i − t))`.
pub fn warped_image_sample(
    model: &impl WarpField,
    image: &NeuralImage,
    i: u8,
    coords: ArrayView2<f64>,
    t: f64,
) -> Result<Array2<f64>> {
    if i > 1 {
        return Err(Error::Invalid(format!("image index must be 0 or 1, got {i}")));
    }
    check_time(t, 0.0)?;
    let moved = model.warp_batch(spacetime_rows(coords, f64::from(i) - t).view());
    Ok(image.sample(moved.view()))
}

/// The curve `t ↦ T(point, t)` at the given times.
pub fn landmark_path(model: &impl WarpField, point: [f64; 2], times: &[f64]) -> Result<Vec<[f64; 2]>> {
    times.iter().map(|&t| warp_point(model, point, t)).collect()
}

/// Uniform times `0, 1/(n−1), …, 1`.
pub fn uniform_times(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

/// Whether `x ∈ T_t(Ω₀)`, tested as `T(x, −t) ∈ Ω₀`.
pub fn region_contains(model: &impl WarpField, mask: &RegionMask, x: [f64; 2], t: f64) -> Result<bool> {
    check_time(t, 0.0)?;
    if t == 0.0 {
        return Ok(mask.contains(x));
    }
    Ok(mask.contains(model.warp([x[0], x[1], -t])))
}

/// Batched [`region_contains`].
pub fn region_contains_batch(
    model: &impl WarpField,
    mask: &RegionMask,
    coords: ArrayView2<f64>,
    t: f64,
) -> Result<Vec<bool>> {
    check_time(t, 0.0)?;
    if t == 0.0 {
        return Ok(coords.rows().into_iter().map(|r| mask.contains([r[0], r[1]])).collect());
    }
    let back = model.warp_batch(spacetime_rows(coords, -t).view());
    Ok(back.rows().into_iter().map(|r| mask.contains([r[0], r[1]])).collect())
}

/// Evaluates the post-training diagnostics on a fixed evaluation set.
pub fn diagnose(model: &WarpModel, pairs: &LandmarkPairs, seed: u64) -> WarpDiagnostics {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = 4096;
    let xs = crate::train::uniform_rows(&mut rng, n, &[(-1.0, 1.0), (-1.0, 1.0)]);
    let st = crate::train::uniform_rows(&mut rng, n, &[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]);

    let at0 = model.warp_batch(spacetime_rows(xs.view(), 0.0).view());
    let identity_residual = row_norms(&(&at0 - &xs)).mean().unwrap();

    let fwd = model.warp_batch(st.view());
    let mut back_in = st.clone();
    back_in.slice_mut(s![.., 0..2]).assign(&fwd);
    back_in.column_mut(2).mapv_inplace(|t| -t);
    let back = model.warp_batch(back_in.view());
    let inverse_residual = row_norms(&(&back - &st.slice(s![.., 0..2]))).mean().unwrap();

    let thin_plate_energy = model.thin_plate_energy(st.view());

    let (mut alignment, mut reverse, mut path_max) = (0.0, 0.0, 0.0f64);
    let times = uniform_times(33);
    for pair in pairs.pairs() {
        let tp = model.warp([pair.p[0], pair.p[1], 1.0]);
        let tq = model.warp([pair.q[0], pair.q[1], -1.0]);
        alignment += dist(tp, pair.q);
        reverse += dist(tq, pair.p);
        for &t in &times {
            let a = model.warp([pair.p[0], pair.p[1], t]);
            let b = model.warp([pair.q[0], pair.q[1], t - 1.0]);
            path_max = path_max.max(dist(a, b));
        }
    }
    let m = pairs.len().max(1) as f64;
    WarpDiagnostics {
        identity_residual,
        inverse_residual,
        alignment_error: alignment / m,
        reverse_alignment_error: reverse / m,
        path_matching_max: path_max,
        thin_plate_energy,
        ..Default::default()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn row_norms(a: &Array2<f64>) -> Array1<f64> {
    a.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}
