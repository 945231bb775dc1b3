//! Warp training loop.

use std::time::Instant;

use ndarray::{concatenate, s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{diagnose, HistoryEntry, LossWeights, WarpModel, WarpTerms};
use crate::error::{Error, Result};
use crate::landmarks::LandmarkPairs;
use crate::mlp::{optimizer_step, AdamConfig, GradTape, Jet, JetSpec, OptimizerState, Order, SineNet};
use crate::train::{chunk_rows, notify, CHUNK_ROWS, reduce_chunks, scheduled_lr, uniform_rows, Observer, Silent, TrainEvent};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpConfig {
    /// Hidden layer widths of the residual network.
    pub hidden: Vec<usize>,
    pub omega0: f64,
    pub weights: LossWeights,
    pub identity_samples: usize,
    /// Samples per step for the inverse and thin-plate terms (drawn separately).
    pub spacetime_samples: usize,
    /// Time samples per landmark pair per step.
    pub data_times: usize,
    pub steps: usize,
    pub adam: AdamConfig,
    /// When set, the learning rate decays geometrically to this value.
    pub lr_final: Option<f64>,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for WarpConfig {
    fn default() -> Self {
        WarpConfig {
            hidden: vec![128],
            omega0: 30.0,
            weights: LossWeights::default(),
            identity_samples: 4096,
            spacetime_samples: 4096,
            data_times: 64,
            steps: 5000,
            adam: AdamConfig::default(),
            lr_final: None,
            seed: 0,
            log_every: 50,
        }
    }
}

impl WarpConfig {
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![3];
        dims.extend(&self.hidden);
        dims.push(2);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "warp hidden widths must be non-empty and positive, got {:?}",
                self.hidden
            )));
        }
        let w = &self.weights;
        if [w.identity, w.inverse, w.data, w.thin_plate]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::Invalid("loss weights must be finite and non-negative".into()));
        }
        if self.identity_samples == 0 || self.spacetime_samples == 0 || self.data_times == 0 {
            return Err(Error::Invalid("sample counts must be positive".into()));
        }
        if !(self.adam.lr > 0.0) || self.lr_final.is_some_and(|v| !(v > 0.0)) {
            return Err(Error::Invalid("learning rates must be positive".into()));
        }
        Ok(())
    }
}

pub fn train_warp(pairs: &LandmarkPairs, cfg: &WarpConfig) -> Result<WarpModel> {
    train_warp_with(pairs, cfg, &mut Silent)
}

/// Trains a warp, reporting per-term losses every `cfg.log_every` steps.
pub fn train_warp_with(
    pairs: &LandmarkPairs,
    cfg: &WarpConfig,
    observer: &mut dyn Observer,
) -> Result<WarpModel> {
    if pairs.is_empty() {
        return Err(Error::Invalid("warp training needs at least one landmark pair".into()));
    }
    cfg.validate()?;
    let started = Instant::now();
    let mut model = WarpModel::init(cfg)?;
    let mut state = OptimizerState::new(&model.net, cfg.adam);
    // sample stream independent of the initialization stream
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut history = Vec::new();
    let mut last = WarpTerms::default();
    let log_every = cfg.log_every.max(1);

    for step in 0..cfg.steps {
        let logging = step % log_every == 0 || step + 1 == cfg.steps;
        let batch = Batch::draw(&mut rng, pairs, cfg);
        let (terms, tape) = step_gradient(&model.net, &batch, &cfg.weights, logging)?;
        if !terms.is_finite() {
            return Err(Error::Numeric(format!(
                "warp loss became non-finite at step {step}: identity={} inverse={} data={} thin_plate={}",
                terms.identity, terms.inverse, terms.data, terms.thin_plate
            )));
        }
        state.config.lr = scheduled_lr(cfg.adam.lr, cfg.lr_final, step, cfg.steps);
        optimizer_step(&mut model.net, &tape, &mut state).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!(
                "{msg}; last terms: identity={} inverse={} data={} thin_plate={}",
                terms.identity, terms.inverse, terms.data, terms.thin_plate
            )),
            e => e,
        })?;
        last = terms;
        if logging {
            history.push(HistoryEntry { step, terms });
            notify(
                observer,
                TrainEvent {
                    step,
                    total_steps: cfg.steps,
                    terms: terms.named(),
                },
            )?;
        }
    }

    let mut diag = diagnose(&model, pairs, cfg.seed);
    diag.final_terms = last;
    diag.history = history;
    diag.steps = cfg.steps;
    diag.seconds = started.elapsed().as_secs_f64();
    model.set_diagnostics(diag);
    Ok(model)
}

/// One step's stochastic sample sets.
pub(crate) struct Batch {
    /// `(x, y, 0)` rows.
    identity: Array2<f64>,
    inverse: Array2<f64>,
    thin_plate: Array2<f64>,
    /// `(p_j, t)` and `(q_j, t − 1)` rows and the offsets `p_j − q_j`.
    data_a: Array2<f64>,
    data_b: Array2<f64>,
    data_offset: Array2<f64>,
    data_times: usize,
}

impl Batch {
    pub(crate) fn draw(rng: &mut ChaCha8Rng, pairs: &LandmarkPairs, cfg: &WarpConfig) -> Self {
        let unit = (-1.0, 1.0);
        let mut identity = uniform_rows(rng, cfg.identity_samples, &[unit, unit, (0.0, 0.0)]);
        identity.column_mut(2).fill(0.0);
        let inverse = uniform_rows(rng, cfg.spacetime_samples, &[unit, unit, unit]);
        let thin_plate = uniform_rows(rng, cfg.spacetime_samples, &[unit, unit, unit]);
        let k = cfg.data_times;
        let times = uniform_rows(rng, pairs.len() * k, &[(0.0, 1.0)]);
        let n = pairs.len() * k;
        let mut data_a = Array2::zeros((n, 3));
        let mut data_b = Array2::zeros((n, 3));
        let mut data_offset = Array2::zeros((n, 2));
        for (j, pair) in pairs.pairs().iter().enumerate() {
            for r in j * k..(j + 1) * k {
                let t = times[[r, 0]];
                data_a.row_mut(r).assign(&ndarray::arr1(&[pair.p[0], pair.p[1], t]));
                data_b.row_mut(r).assign(&ndarray::arr1(&[pair.q[0], pair.q[1], t - 1.0]));
                data_offset[[r, 0]] = pair.p[0] - pair.q[0];
                data_offset[[r, 1]] = pair.p[1] - pair.q[1];
            }
        }
        Batch {
            identity,
            inverse,
            thin_plate,
            data_a,
            data_b,
            data_offset,
            data_times: k,
        }
    }
}

fn value_jet(values: Array2<f64>) -> Jet {
    let mut jet = Jet::zeros(JetSpec::value(), values.nrows(), values.ncols());
    *jet.values_mut() = values;
    jet
}

/// Term values and the gradient of the weighted total. Terms with zero
/// weight are skipped unless `measure_all`.
pub(crate) fn step_gradient(
    net: &SineNet,
    batch: &Batch,
    w: &LossWeights,
    measure_all: bool,
) -> Result<(WarpTerms, GradTape)> {
    let mut tape = GradTape::zeros_for(net);
    let mut run = |weight: f64, f: &dyn Fn(&SineNet, &Batch, f64) -> Result<(f64, GradTape)>| -> Result<f64> {
        if weight == 0.0 && !measure_all {
            return Ok(0.0);
        }
        let (v, t) = f(net, batch, weight)?;
        if weight != 0.0 {
            tape.add_assign(&t);
        }
        Ok(v)
    };
    let identity = run(w.identity, &identity_grad)?;
    let inverse = run(w.inverse, &inverse_grad)?;
    let data = run(w.data, &data_grad)?;
    let thin_plate = run(w.thin_plate, &thin_plate_grad)?;
    Ok((WarpTerms::weighted(identity, inverse, data, thin_plate, w), tape))
}

fn identity_grad(net: &SineNet, batch: &Batch, weight: f64) -> Result<(f64, GradTape)> {
    let pts = &batch.identity;
    let n = pts.nrows() as f64;
    reduce_chunks(net, pts.nrows(), CHUNK_ROWS, |r, tape| {
        let (out, trace) = net.trace(pts.slice(s![r, ..]), JetSpec::value())?;
        let o = out.values();
        let loss = o.iter().map(|v| v * v).sum::<f64>() / n;
        net.backward(&trace, &value_jet(o * (2.0 * weight / n)), tape)?;
        Ok(loss)
    })
}

fn inverse_grad(net: &SineNet, batch: &Batch, weight: f64) -> Result<(f64, GradTape)> {
    let pts = &batch.inverse;
    let n = pts.nrows() as f64;
    reduce_chunks(net, pts.nrows(), CHUNK_ROWS, |r, tape| {
        let x = pts.slice(s![r, ..]);
        let (o1, tr1) = net.trace(x, JetSpec::value())?;
        let y = &x.slice(s![.., 0..2]) + o1.values();
        let neg_t = x.slice(s![.., 2..3]).mapv(|t| -t);
        let second = concatenate(Axis(1), &[y.view(), neg_t.view()]).expect("shapes agree");
        let (o2, tr2) = net.trace(second.view(), JetSpec::value())?;
        let resid = &y + o2.values() - x.slice(s![.., 0..2]);
        let loss = resid.iter().map(|v| v * v).sum::<f64>() / n;
        let seed = resid * (2.0 * weight / n);
        let adj = net.backward(&tr2, &value_jet(seed.clone()), tape)?;
        let y_bar = seed + adj.slice(s![.., 0..2]);
        net.backward(&tr1, &value_jet(y_bar), tape)?;
        Ok(loss)
    })
}

fn data_grad(net: &SineNet, batch: &Batch, weight: f64) -> Result<(f64, GradTape)> {
    let k = batch.data_times as f64;
    reduce_chunks(net, batch.data_a.nrows(), CHUNK_ROWS, |r, tape| {
        let (oa, ta) = net.trace(batch.data_a.slice(s![r.clone(), ..]), JetSpec::value())?;
        let (ob, tb) = net.trace(batch.data_b.slice(s![r.clone(), ..]), JetSpec::value())?;
        let resid = &batch.data_offset.slice(s![r, ..]) + oa.values() - ob.values();
        let loss = resid.iter().map(|v| v * v).sum::<f64>() / k;
        let seed = resid * (2.0 * weight / k);
        net.backward(&tb, &value_jet(-&seed), tape)?;
        net.backward(&ta, &value_jet(seed), tape)?;
        Ok(loss)
    })
}

fn thin_plate_grad(net: &SineNet, batch: &Batch, weight: f64) -> Result<(f64, GradTape)> {
    let pts = &batch.thin_plate;
    let n = pts.nrows() as f64;
    let spec = JetSpec::new(Order::Hessian, 3);
    reduce_chunks(net, pts.nrows(), chunk_rows(spec.channels()), |r, tape| {
        let (out, trace) = net.trace(pts.slice(s![r, ..]), spec)?;
        let mut seeds = Jet::zeros_like(&out);
        let mut loss = 0.0;
        for i in 0..3 {
            for j in i..3 {
                let mult = if i == j { 1.0 } else { 2.0 };
                let h = out.hessians(i, j);
                loss += mult * h.iter().map(|v| v * v).sum::<f64>() / n;
                *seeds.hessians_mut(i, j) = h * (2.0 * mult * weight / n);
            }
        }
        net.backward(&trace, &seeds, tape)?;
        Ok(loss)
    })
}
