//! Images represented as sinusoidal networks `I_θ: ℝ² → colors`.

use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, Array3, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GridFrame, ImageGrid};
use crate::metrics::psnr;
use crate::mlp::{optimizer_step, AdamConfig, JetSpec, Jet, OptimizerState, Order, SineNet, SineNetJson};
use crate::train::{chunk_rows, map_chunks, CHUNK_ROWS, notify, reduce_chunks, scheduled_lr, Observer, Silent, TrainEvent};

pub const NEURAL_IMAGE_VERSION: &str = "neural-image/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageFitConfig {
    pub hidden: Vec<usize>,
    pub omega0: f64,
    pub steps: usize,
    /// Pixels per step; `0` uses every pixel each step.
    pub batch: usize,
    pub adam: AdamConfig,
    pub lr_final: Option<f64>,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for ImageFitConfig {
    fn default() -> Self {
        ImageFitConfig {
            hidden: vec![256, 256, 256],
            omega0: 30.0,
            steps: 2000,
            batch: 8192,
            adam: AdamConfig::default(),
            lr_final: None,
            seed: 0,
            log_every: 50,
        }
    }
}

/// Source raster facts and the outcome of fitting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// PSNR (dB) of clamped samples against the training grid.
    pub psnr: f64,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralImage {
    net: SineNet,
    report: FitReport,
}

#[derive(Serialize, Deserialize)]
struct NeuralImageJson {
    version: String,
    net: SineNetJson,
    meta: FitReport,
}

impl NeuralImage {
    pub fn new(net: SineNet, report: FitReport) -> Result<Self> {
        if net.input_dim() != 2 || net.output_dim() != report.channels {
            return Err(Error::InvalidArchitecture(format!(
                "image network must map 2 inputs to {} channels, got {:?}",
                report.channels,
                net.layer_dims()
            )));
        }
        Ok(NeuralImage { net, report })
    }

    pub fn net(&self) -> &SineNet {
        &self.net
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    pub fn channels(&self) -> usize {
        self.report.channels
    }

    /// Colors in `[0, 1]` at `N × 2` coordinates.
    pub fn sample(&self, coords: ArrayView2<f64>) -> Array2<f64> {
        let c = self.channels();
        let rows = map_chunks(coords.nrows(), CHUNK_ROWS, |r| {
            let o = self.net.forward_batch(coords.slice(s![r, ..]))?;
            Ok(o.rows().into_iter().map(|row| row.to_vec()).collect())
        })
        .expect("image network dims are validated");
        let mut out = Array2::zeros((coords.nrows(), c));
        for (r, row) in rows.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                out[[r, k]] = to_color(v);
            }
        }
        out
    }

    /// Spatial color gradients (color per domain unit), `N × channels × 2`.
    /// Not affected by clamping.
    pub fn image_gradient(&self, coords: ArrayView2<f64>) -> Array3<f64> {
        let c = self.channels();
        let spec = JetSpec::new(Order::Jacobian, 2);
        let rows = map_chunks(coords.nrows(), chunk_rows(spec.channels()), |r| {
            let jet = self.net.eval(coords.slice(s![r, ..]), spec)?;
            Ok((0..jet.batch())
                .map(|b| {
                    (0..c)
                        .flat_map(|k| [0.5 * jet.grad(b, k, 0), 0.5 * jet.grad(b, k, 1)])
                        .collect::<Vec<_>>()
                })
                .collect())
        })
        .expect("image network dims are validated");
        let mut out = Array3::zeros((coords.nrows(), c, 2));
        for (r, row) in rows.into_iter().enumerate() {
            for k in 0..c {
                out[[r, k, 0]] = row[2 * k];
                out[[r, k, 1]] = row[2 * k + 1];
            }
        }
        out
    }

    /// Renders onto a `width × height` grid of pixel centers.
    pub fn render(&self, width: usize, height: usize) -> Result<ImageGrid> {
        let colors = self.sample(GridFrame::new(width, height).centers().view());
        ImageGrid::from_array(width, height, &colors)
    }

    pub fn to_json(&self) -> String {
        let doc = NeuralImageJson {
            version: NEURAL_IMAGE_VERSION.into(),
            net: self.net.to_json(),
            meta: self.report.clone(),
        };
        serde_json::to_string(&doc).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NeuralImageJson = serde_json::from_str(text)?;
        if doc.version != NEURAL_IMAGE_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported neural image version {:?}",
                doc.version
            )));
        }
        Self::new(SineNet::from_json(&doc.net)?, doc.meta)
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

fn to_color(v: f64) -> f64 {
    ((v + 1.0) / 2.0).clamp(0.0, 1.0)
}

pub fn fit_image(grid: &ImageGrid, cfg: &ImageFitConfig) -> Result<NeuralImage> {
    fit_image_with(grid, cfg, &mut Silent)
}

/// Fits `grid` by minibatch mean squared error on pixel centers, with colors
/// mapped to `[-1, 1]`.
pub fn fit_image_with(grid: &ImageGrid, cfg: &ImageFitConfig, observer: &mut dyn Observer) -> Result<NeuralImage> {
    let started = Instant::now();
    let c = grid.channels();
    let mut dims = vec![2];
    dims.extend(&cfg.hidden);
    dims.push(c);
    let mut net = SineNet::init(&dims, cfg.omega0, cfg.seed)?;
    let coords = grid.frame().centers();
    let targets = grid.to_array().mapv(|v| 2.0 * v - 1.0);
    let n = coords.nrows();
    let mut state = OptimizerState::new(&net, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let log_every = cfg.log_every.max(1);

    for step in 0..cfg.steps {
        let (xb, yb) = if cfg.batch == 0 || cfg.batch >= n {
            (coords.clone(), targets.clone())
        } else {
            let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.random_range(0..n)).collect();
            (coords.select(ndarray::Axis(0), &idx), targets.select(ndarray::Axis(0), &idx))
        };
        let denom = (xb.nrows() * c) as f64;
        let (loss, tape) = reduce_chunks(&net, xb.nrows(), CHUNK_ROWS, |r, tape| {
            let (out, trace) = net.trace(xb.slice(s![r.clone(), ..]), JetSpec::value())?;
            let resid = out.values() - &yb.slice(s![r, ..]);
            let loss = resid.iter().map(|v| v * v).sum::<f64>() / denom;
            let mut seed = Jet::zeros(JetSpec::value(), resid.nrows(), c);
            *seed.values_mut() = resid * (2.0 / denom);
            net.backward(&trace, &seed, tape)?;
            Ok(loss)
        })?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("image fit loss became non-finite at step {step}")));
        }
        state.config.lr = scheduled_lr(cfg.adam.lr, cfg.lr_final, step, cfg.steps);
        optimizer_step(&mut net, &tape, &mut state)?;
        if step % log_every == 0 || step + 1 == cfg.steps {
            notify(
                observer,
                TrainEvent {
                    step,
                    total_steps: cfg.steps,
                    terms: vec![("mse".into(), loss)],
                },
            )?;
        }
    }

    let report = FitReport {
        width: grid.width(),
        height: grid.height(),
        channels: c,
        psnr: 0.0,
        steps: cfg.steps,
        seed: cfg.seed,
        seconds: 0.0,
    };
    let mut image = NeuralImage::new(net, report)?;
    let fitted = image.sample(coords.view());
    image.report.psnr = psnr(fitted.view(), grid.to_array().view());
    image.report.seconds = started.elapsed().as_secs_f64();
    Ok(image)
}
