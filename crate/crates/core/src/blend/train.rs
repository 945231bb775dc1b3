//! Gradient-domain fitting of the morph network.

use std::time::Instant;

use ndarray::{s, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    boundary_residual, combine, membership, warped_jacobians, GradientFieldSpec, GradientMode,
    MorphDiagnostics, MorphHistoryEntry, MorphModel,
};
use crate::error::{Error, Result};
use crate::mlp::{optimizer_step, AdamConfig, GradTape, Jet, JetSpec, OptimizerState, Order, SineNet};
use crate::neural_image::NeuralImage;
use crate::region::RegionMask;
use crate::train::{chunk_rows, notify, reduce_chunks, reduce_chunks_n, scheduled_lr, uniform_rows, Observer, Silent, TrainEvent};
use crate::warp::WarpModel;

/// How training times are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeSampling {
    /// `t ~ Uniform[0, 1]`.
    Uniform,
    /// A single time slice.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphConfig {
    pub hidden: Vec<usize>,
    pub omega0: f64,
    pub steps: usize,
    /// Samples per step, drawn from the precomputed pool.
    pub batch: usize,
    /// Space-time samples precomputed (membership, `U`, `𝓘*`) before training.
    pub pool: usize,
    /// Extra samples on the outer edge of `[-1, 1]²`, always pinned to `𝓘*`.
    pub edge_samples: usize,
    pub time: TimeSampling,
    pub cloning_weight: f64,
    pub boundary_weight: f64,
    /// Weight on matching `Jac 𝓘*` outside `Ω`. Without it the value term
    /// alone lets the fit escape the boundary condition through a thin
    /// transition band just outside the region.
    pub anchor_weight: f64,
    pub adam: AdamConfig,
    pub lr_final: Option<f64>,
    pub seed: u64,
    pub log_every: usize,
    pub eval_samples: usize,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            hidden: vec![256, 256, 256],
            omega0: 30.0,
            steps: 2000,
            batch: 4096,
            pool: 65536,
            edge_samples: 4096,
            time: TimeSampling::Uniform,
            cloning_weight: 1.0,
            boundary_weight: 1.0,
            anchor_weight: 1.0,
            adam: AdamConfig::default(),
            lr_final: None,
            seed: 0,
            log_every: 50,
            eval_samples: 4096,
        }
    }
}

impl MorphConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "morph hidden widths must be non-empty and positive, got {:?}",
                self.hidden
            )));
        }
        if self.batch == 0 || self.pool == 0 || self.eval_samples == 0 {
            return Err(Error::Invalid("morph sample counts must be positive".into()));
        }
        if let TimeSampling::Fixed(t) = self.time {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Invalid(format!("fixed time {t} outside [0, 1]")));
            }
        }
        if [self.cloning_weight, self.boundary_weight, self.anchor_weight]
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::Invalid("term weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn draw_times(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        match self.time {
            TimeSampling::Uniform => (0..n).map(|_| rng.random_range(0.0..=1.0)).collect(),
            TimeSampling::Fixed(t) => vec![t; n],
        }
    }
}

/// Points on the boundary of `[-1, 1]²`, uniform along the perimeter.
fn edge_points(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, 2));
    for mut row in out.rows_mut() {
        let s: f64 = rng.random_range(0.0..8.0);
        let u = s % 2.0 - 1.0;
        let (x, y) = match s as usize / 2 {
            0 => (u, -1.0),
            1 => (1.0, u),
            2 => (-u, 1.0),
            _ => (-1.0, -u),
        };
        row[0] = x;
        row[1] = y;
    }
    out
}

/// Precomputed training targets.
struct Pool {
    /// Rows `(x, y, t)` inside `Ω` and their target Jacobians.
    inside: Array2<f64>,
    target_grad: Array3<f64>,
    /// Rows outside `Ω` and their boundary colors.
    outside: Array2<f64>,
    target_color: Array2<f64>,
    base_grad: Array3<f64>,
}

impl Pool {
    fn len(&self) -> usize {
        self.inside.nrows() + self.outside.nrows()
    }
}

fn rows_with_times(xs: &Array2<f64>, ts: &[f64]) -> Array2<f64> {
    let mut rows = Array2::zeros((xs.nrows(), 3));
    rows.slice_mut(s![.., 0..2]).assign(xs);
    rows.column_mut(2).assign(&ndarray::Array1::from(ts.to_vec()));
    rows
}

struct Problem<'a> {
    warp: &'a WarpModel,
    i0: &'a NeuralImage,
    i1: &'a NeuralImage,
    spec: &'a GradientFieldSpec,
}

impl Problem<'_> {
    /// Splits samples by membership and computes their targets. Edge rows
    /// (the trailing `edges`) are always treated as outside.
    fn build_pool(&self, xs: Array2<f64>, ts: Vec<f64>, edges: usize) -> Pool {
        let n = xs.nrows();
        let mut inside = membership(self.warp, &self.spec.region, xs.view(), &ts);
        for flag in inside.iter_mut().skip(n - edges) {
            *flag = false;
        }
        let idx_in: Vec<usize> = (0..n).filter(|&r| inside[r]).collect();
        let idx_out: Vec<usize> = (0..n).filter(|&r| !inside[r]).collect();
        let pick = |idx: &[usize]| -> (Array2<f64>, Vec<f64>) {
            (xs.select(Axis(0), idx), idx.iter().map(|&r| ts[r]).collect())
        };
        let (x_in, t_in) = pick(&idx_in);
        let (x_out, t_out) = pick(&idx_out);
        let (_, j0) = warped_jacobians(self.warp, self.i0, 0, x_in.view(), &t_in);
        let (_, j1) = warped_jacobians(self.warp, self.i1, 1, x_in.view(), &t_in);
        let target_grad = combine(self.spec.mode, self.spec.base, &j0, &j1, &t_in);
        let (target_color, base_grad) = if self.spec.base == 0 {
            warped_jacobians(self.warp, self.i0, 0, x_out.view(), &t_out)
        } else {
            warped_jacobians(self.warp, self.i1, 1, x_out.view(), &t_out)
        };
        Pool {
            inside: rows_with_times(&x_in, &t_in),
            target_grad,
            outside: rows_with_times(&x_out, &t_out),
            target_color,
            base_grad,
        }
    }

    fn check(&self) -> Result<()> {
        if self.i0.channels() != self.i1.channels() {
            return Err(Error::DimensionMismatch {
                expected: self.i0.channels(),
                got: self.i1.channels(),
            });
        }
        self.spec.validate()?;
        if let RegionMask::Raster { width, height, .. } = &self.spec.region {
            let r = self.i0.report();
            if r.width > 0 && (r.width, r.height) != (*width, *height) {
                return Err(Error::Invalid(format!(
                    "region mask is {width}×{height} but image 0 is {}×{}",
                    r.width, r.height
                )));
            }
        }
        Ok(())
    }
}

pub fn train_morph(
    warp: &WarpModel,
    i0: &NeuralImage,
    i1: &NeuralImage,
    spec: &GradientFieldSpec,
    cfg: &MorphConfig,
) -> Result<MorphModel> {
    train_morph_with(warp, i0, i1, spec, cfg, &mut Silent)
}

/// Fits `𝓘` so that `Jac 𝓘 ≈ U` inside the transported region and `𝓘 ≈ 𝓘*`
/// outside it.
pub fn train_morph_with(
    warp: &WarpModel,
    i0: &NeuralImage,
    i1: &NeuralImage,
    spec: &GradientFieldSpec,
    cfg: &MorphConfig,
    observer: &mut dyn Observer,
) -> Result<MorphModel> {
    let problem = Problem { warp, i0, i1, spec };
    problem.check()?;
    cfg.validate()?;
    let started = Instant::now();
    let c = i0.channels();
    let mut dims = vec![3];
    dims.extend(&cfg.hidden);
    dims.push(c);
    let net = SineNet::init(&dims, cfg.omega0, cfg.seed)?;
    let mut model = MorphModel::new(net, spec.clone(), cfg.clone())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let unit = (-1.0, 1.0);
    let interior = uniform_rows(&mut rng, cfg.pool, &[unit, unit]);
    let edges = edge_points(&mut rng, cfg.edge_samples);
    let xs = ndarray::concatenate(Axis(0), &[interior.view(), edges.view()]).expect("two columns");
    let ts = cfg.draw_times(&mut rng, xs.nrows());
    let pool = problem.build_pool(xs, ts, cfg.edge_samples);

    let mut state = OptimizerState::new(&model.net, cfg.adam);
    let mut history = Vec::new();
    let log_every = cfg.log_every.max(1);
    for step in 0..cfg.steps {
        let mut pick_in = Vec::new();
        let mut pick_out = Vec::new();
        for _ in 0..cfg.batch {
            let r = rng.random_range(0..pool.len());
            if r < pool.inside.nrows() {
                pick_in.push(r);
            } else {
                pick_out.push(r - pool.inside.nrows());
            }
        }
        let (terms, tape) = step_gradient(&model.net, &pool, &pick_in, &pick_out, cfg)?;
        let [cloning, boundary, anchor] = terms;
        let total = cfg.cloning_weight * cloning + cfg.boundary_weight * boundary + cfg.anchor_weight * anchor;
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "morph loss became non-finite at step {step}: cloning={cloning} boundary={boundary} anchor={anchor}"
            )));
        }
        state.config.lr = scheduled_lr(cfg.adam.lr, cfg.lr_final, step, cfg.steps);
        optimizer_step(&mut model.net, &tape, &mut state)?;
        if step % log_every == 0 || step + 1 == cfg.steps {
            history.push(MorphHistoryEntry {
                step,
                cloning,
                boundary,
                anchor,
                total,
            });
            notify(
                observer,
                TrainEvent {
                    step,
                    total_steps: cfg.steps,
                    terms: vec![
                        ("cloning".into(), cloning),
                        ("boundary".into(), boundary),
                        ("anchor".into(), anchor),
                        ("total".into(), total),
                    ],
                },
            )?;
        }
    }

    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let ex = uniform_rows(&mut eval_rng, cfg.eval_samples, &[unit, unit]);
    let et = cfg.draw_times(&mut eval_rng, cfg.eval_samples);
    let eval = problem.build_pool(ex.clone(), et.clone(), 0);
    let cloning_residual = if eval.inside.nrows() == 0 {
        0.0
    } else {
        let j = model.color_jacobians(eval.inside.view());
        let diff = &j - &eval.target_grad;
        diff.outer_iter()
            .map(|m| m.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
            / eval.inside.nrows() as f64
    };
    let diag = MorphDiagnostics {
        boundary_residual: boundary_residual(&model, warp, i0, i1, ex.view(), &et),
        cloning_residual,
        region_fraction: eval.inside.nrows() as f64 / cfg.eval_samples as f64,
        history,
        steps: cfg.steps,
        seconds: started.elapsed().as_secs_f64(),
    };
    model.set_diagnostics(diag);
    Ok(model)
}

fn step_gradient(
    net: &SineNet,
    pool: &Pool,
    pick_in: &[usize],
    pick_out: &[usize],
    cfg: &MorphConfig,
) -> Result<([f64; 3], GradTape)> {
    let b = (pick_in.len() + pick_out.len()) as f64;
    let c = net.output_dim();
    let mut tape = GradTape::zeros_for(net);

    let cloning = if pick_in.is_empty() {
        0.0
    } else {
        let x = pool.inside.select(Axis(0), pick_in);
        let u = pool.target_grad.select(Axis(0), pick_in);
        let spec = JetSpec::new(Order::Jacobian, 2);
        let w = cfg.cloning_weight;
        let (v, t) = reduce_chunks(net, x.nrows(), chunk_rows(spec.channels()), |r, tape| {
            let (out, trace) = net.trace(x.slice(s![r.clone(), ..]), spec)?;
            let mut seeds = Jet::zeros_like(&out);
            let mut loss = 0.0;
            for d in 0..2 {
                let g = out.grads(d);
                let mut seed = Array2::zeros(g.raw_dim());
                for (row, b_idx) in r.clone().enumerate() {
                    for k in 0..c {
                        let diff = 0.5 * g[[row, k]] - u[[b_idx, k, d]];
                        loss += diff * diff / b;
                        seed[[row, k]] = w * diff / b;
                    }
                }
                *seeds.grads_mut(d) = seed;
            }
            net.backward(&trace, &seeds, tape)?;
            Ok(loss)
        })?;
        tape.add_assign(&t);
        v
    };

    let (boundary, anchor) = if pick_out.is_empty() {
        (0.0, 0.0)
    } else {
        let x = pool.outside.select(Axis(0), pick_out);
        let target = pool.target_color.select(Axis(0), pick_out);
        let grad = pool.base_grad.select(Axis(0), pick_out);
        let (w, wa) = (cfg.boundary_weight, cfg.anchor_weight);
        let spec = if wa > 0.0 {
            JetSpec::new(Order::Jacobian, 2)
        } else {
            JetSpec::value()
        };
        let ([value, anchor], t) = reduce_chunks_n(net, x.nrows(), chunk_rows(spec.channels()), |r, tape| {
            let (out, trace) = net.trace(x.slice(s![r.clone(), ..]), spec)?;
            let color = out.values().mapv(|o| (o + 1.0) / 2.0);
            let diff = color - target.slice(s![r.clone(), ..]);
            let value_loss = diff.iter().map(|v| v * v).sum::<f64>() / b;
            let mut seeds = Jet::zeros_like(&out);
            *seeds.values_mut() = diff * (w / b);
            let mut anchor_loss = 0.0;
            if wa > 0.0 {
                for d in 0..2 {
                    let g = out.grads(d);
                    let mut seed = Array2::zeros(g.raw_dim());
                    for (row, b_idx) in r.clone().enumerate() {
                        for k in 0..c {
                            let diff = 0.5 * g[[row, k]] - grad[[b_idx, k, d]];
                            anchor_loss += diff * diff / b;
                            seed[[row, k]] = wa * diff / b;
                        }
                    }
                    *seeds.grads_mut(d) = seed;
                }
            }
            net.backward(&trace, &seeds, tape)?;
            Ok([value_loss, anchor_loss])
        })?;
        tape.add_assign(&t);
        (value, anchor)
    };
    Ok(([cloning, boundary, anchor], tape))
}

/// Gradient-domain composite at `t = 1`: the selected region of the warped
/// non-base image is cloned into the base.
pub fn feature_transfer(
    warp: &WarpModel,
    i0: &NeuralImage,
    i1: &NeuralImage,
    region: &RegionMask,
    base: u8,
    cfg: &MorphConfig,
) -> Result<MorphModel> {
    feature_transfer_with(warp, i0, i1, region, base, cfg, &mut Silent)
}

pub fn feature_transfer_with(
    warp: &WarpModel,
    i0: &NeuralImage,
    i1: &NeuralImage,
    region: &RegionMask,
    base: u8,
    cfg: &MorphConfig,
    observer: &mut dyn Observer,
) -> Result<MorphModel> {
    let spec = GradientFieldSpec::new(GradientMode::Clone, base, region.clone())?;
    let cfg = MorphConfig {
        time: TimeSampling::Fixed(1.0),
        ..cfg.clone()
    };
    train_morph_with(warp, i0, i1, &spec, &cfg, observer)
}
