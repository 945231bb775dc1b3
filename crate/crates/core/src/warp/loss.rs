//! The four warp loss terms as Monte-Carlo means over explicit sample sets.

use ndarray::{s, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{spacetime_rows, WarpField};
use crate::error::{Error, Result};
use crate::landmarks::LandmarkPairs;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub identity: f64,
    pub inverse: f64,
    pub data: f64,
    pub thin_plate: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            identity: 1.0,
            inverse: 1.0,
            data: 1.0,
            thin_plate: 1.0,
        }
    }
}

/// Unweighted term values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WarpTerms {
    pub identity: f64,
    pub inverse: f64,
    pub data: f64,
    pub thin_plate: f64,
    pub total: f64,
}

impl WarpTerms {
    pub fn weighted(identity: f64, inverse: f64, data: f64, thin_plate: f64, w: &LossWeights) -> Self {
        WarpTerms {
            identity,
            inverse,
            data,
            thin_plate,
            total: w.identity * identity + w.inverse * inverse + w.data * data + w.thin_plate * thin_plate,
        }
    }

    pub fn named(&self) -> Vec<(String, f64)> {
        vec![
            ("identity".into(), self.identity),
            ("inverse".into(), self.inverse),
            ("data".into(), self.data),
            ("thin_plate".into(), self.thin_plate),
            ("total".into(), self.total),
        ]
    }

    pub fn is_finite(&self) -> bool {
        [self.identity, self.inverse, self.data, self.thin_plate, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn mean_sq_rows(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>() / a.nrows() as f64
}

/// Mean `‖T(x, 0) − x‖²` over spatial samples (`N × 2`).
pub fn loss_identity(field: &impl WarpField, xs: ArrayView2<f64>) -> f64 {
    let w = field.warp_batch(spacetime_rows(xs, 0.0).view());
    mean_sq_rows((&w - &xs).view())
}

/// Mean `‖T(T(x, t), −t) − x‖²` over space-time samples (`N × 3`).
pub fn loss_inverse(field: &impl WarpField, pts: ArrayView2<f64>) -> f64 {
    let fwd = field.warp_batch(pts);
    let mut back_in = pts.to_owned();
    back_in.slice_mut(s![.., 0..2]).assign(&fwd);
    back_in.column_mut(2).mapv_inplace(|t| -t);
    let back = field.warp_batch(back_in.view());
    mean_sq_rows((&back - &pts.slice(s![.., 0..2])).view())
}

/// `Σ_j mean_k ‖T(p_j, t_jk) − T(q_j, t_jk − 1)‖²` with `times` laid out as
/// `J × K` (one row of time samples per pair).
pub fn loss_data(field: &impl WarpField, pairs: &LandmarkPairs, times: ArrayView2<f64>) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Invalid("data loss needs at least one landmark pair".into()));
    }
    if times.nrows() != pairs.len() {
        return Err(Error::DimensionMismatch {
            expected: pairs.len(),
            got: times.nrows(),
        });
    }
    let mut total = 0.0;
    for (pair, ts) in pairs.pairs().iter().zip(times.rows()) {
        total += pair_residual(field, pair.p, pair.q, ts);
    }
    Ok(total)
}

fn pair_residual(field: &impl WarpField, p: [f64; 2], q: [f64; 2], ts: ArrayView1<f64>) -> f64 {
    let k = ts.len() as f64;
    ts.iter()
        .map(|&t| {
            let a = field.warp([p[0], p[1], t]);
            let b = field.warp([q[0], q[1], t - 1.0]);
            (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
        })
        .sum::<f64>()
        / k
}

/// Mean `‖Hess T(x, y, t)‖²_F` (both outputs) over space-time samples.
pub fn loss_thin_plate(field: &impl WarpField, pts: ArrayView2<f64>) -> f64 {
    let h = field.hessian_sq_batch(pts);
    h.sum() / h.len() as f64
}
