//! Forward-mode derivative jets through a [`SineNet`] and the reverse sweep
//! that turns a loss over those jets into parameter gradients.
//!
//! A jet over `B` samples carries one `B × width` block per channel: the
//! value, one first derivative per differentiated input, and one second
//! derivative per unordered input pair `(i, j)`, `i <= j`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::net::SineNet;
use super::trig::sin_cos;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    Value = 0,
    Jacobian = 1,
    Hessian = 2,
}

/// Which derivatives a jet carries: up to `order`, with respect to the
/// leading `diff_dims` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JetSpec {
    pub order: Order,
    pub diff_dims: usize,
}

impl JetSpec {
    pub fn new(order: Order, diff_dims: usize) -> Self {
        let diff_dims = if order == Order::Value { 0 } else { diff_dims };
        JetSpec { order, diff_dims }
    }

    pub fn value() -> Self {
        JetSpec::new(Order::Value, 0)
    }

    pub fn channels(&self) -> usize {
        let k = self.diff_dims;
        match self.order {
            Order::Value => 1,
            Order::Jacobian => 1 + k,
            Order::Hessian => 1 + k + k * (k + 1) / 2,
        }
    }

    pub fn grad_channel(&self, i: usize) -> usize {
        debug_assert!(self.order >= Order::Jacobian && i < self.diff_dims);
        1 + i
    }

    pub fn hess_channel(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.order == Order::Hessian);
        1 + self.diff_dims + pair_index(self.diff_dims, i, j)
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let k = if self.order == Order::Hessian { self.diff_dims } else { 0 };
        (0..k).flat_map(move |i| (i..k).map(move |j| (i, j)))
    }
}

/// Index of the unordered pair `{i, j}` among the `k(k+1)/2` upper-triangle
/// entries, row-major.
pub fn pair_index(k: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * k - i + 1) / 2 + (j - i)
}

/// Values and input derivatives of a network (or seeds for them).
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    spec: JetSpec,
    batch: usize,
    channels: Vec<Array2<f64>>,
}

impl Jet {
    pub fn zeros(spec: JetSpec, batch: usize, width: usize) -> Self {
        Jet {
            spec,
            batch,
            channels: (0..spec.channels())
                .map(|_| Array2::zeros((batch, width)))
                .collect(),
        }
    }

    pub fn zeros_like(other: &Jet) -> Self {
        Jet::zeros(other.spec, other.batch, other.width())
    }

    pub fn spec(&self) -> JetSpec {
        self.spec
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn width(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn channel(&self, c: usize) -> &Array2<f64> {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut Array2<f64> {
        &mut self.channels[c]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.channels[0]
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.channels[0]
    }

    /// First derivatives with respect to input `i`, one row per sample.
    pub fn grads(&self, i: usize) -> &Array2<f64> {
        &self.channels[self.spec.grad_channel(i)]
    }

    pub fn grads_mut(&mut self, i: usize) -> &mut Array2<f64> {
        let c = self.spec.grad_channel(i);
        &mut self.channels[c]
    }

    pub fn hessians(&self, i: usize, j: usize) -> &Array2<f64> {
        &self.channels[self.spec.hess_channel(i, j)]
    }

    pub fn hessians_mut(&mut self, i: usize, j: usize) -> &mut Array2<f64> {
        let c = self.spec.hess_channel(i, j);
        &mut self.channels[c]
    }

    pub fn value(&self, b: usize, k: usize) -> f64 {
        self.channels[0][[b, k]]
    }

    pub fn value_row(&self, b: usize) -> Vec<f64> {
        self.channels[0].row(b).to_vec()
    }

    pub fn grad(&self, b: usize, k: usize, i: usize) -> f64 {
        self.grads(i)[[b, k]]
    }

    pub fn hess(&self, b: usize, k: usize, i: usize, j: usize) -> f64 {
        self.hessians(i, j)[[b, k]]
    }

    pub fn into_values(mut self) -> Array2<f64> {
        self.channels.swap_remove(0)
    }

    pub(crate) fn into_data(self) -> Array2<f64> {
        self.into_values()
    }

    fn input(inputs: ArrayView2<f64>, spec: JetSpec) -> Self {
        let (batch, n0) = inputs.dim();
        let mut jet = Jet::zeros(spec, batch, n0);
        jet.channels[0].assign(&inputs);
        if spec.order >= Order::Jacobian {
            for i in 0..spec.diff_dims {
                jet.grads_mut(i).column_mut(i).fill(1.0);
            }
        }
        jet
    }
}

struct SineLayerTrace {
    input: Vec<Array2<f64>>,
    z: Vec<Array2<f64>>,
    sin0: Array2<f64>,
    cos0: Array2<f64>,
}

/// Intermediate activations recorded by [`SineNet::trace`], consumed by
/// [`SineNet::backward`].
pub struct Trace {
    spec: JetSpec,
    batch: usize,
    hidden: Vec<SineLayerTrace>,
    last_input: Vec<Array2<f64>>,
}

impl Trace {
    pub fn spec(&self) -> JetSpec {
        self.spec
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Accumulated `∂loss/∂θ`, shaped like the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradTape {
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
}

impl GradTape {
    pub fn zeros_for(net: &SineNet) -> Self {
        GradTape {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn zero(&mut self) {
        self.weights.iter_mut().for_each(|w| w.fill(0.0));
        self.biases.iter_mut().for_each(|b| b.fill(0.0));
    }

    pub fn len(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same layout as [`SineNet::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &GradTape) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
        self.biases.iter_mut().for_each(|b| *b *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl SineNet {
    /// Evaluates values and requested input derivatives for `B × n0` inputs.
    pub fn eval(&self, inputs: ArrayView2<f64>, spec: JetSpec) -> Result<Jet> {
        self.propagate(inputs, spec, false).map(|(jet, _)| jet)
    }

    /// Like [`SineNet::eval`] but records what [`SineNet::backward`] needs.
    pub fn trace(&self, inputs: ArrayView2<f64>, spec: JetSpec) -> Result<(Jet, Trace)> {
        self.propagate(inputs, spec, true)
            .map(|(jet, trace)| (jet, trace.expect("trace recorded")))
    }

    fn propagate(
        &self,
        inputs: ArrayView2<f64>,
        spec: JetSpec,
        record: bool,
    ) -> Result<(Jet, Option<Trace>)> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        if spec.diff_dims > self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: spec.diff_dims,
            });
        }
        let batch = inputs.nrows();
        let omega = self.omega0();
        let layers = self.weights.len();
        let mut act = Jet::input(inputs, spec).channels;
        let mut hidden = Vec::new();

        for l in 0..layers - 1 {
            let w = &self.weights[l];
            let mut z: Vec<Array2<f64>> = act.iter().map(|a| a.dot(&w.t())).collect();
            z[0] += &self.biases[l];
            z.iter_mut().for_each(|zc| *zc *= omega);
            let mut sin0 = Array2::zeros(z[0].raw_dim());
            let mut cos0 = Array2::zeros(z[0].raw_dim());
            Zip::from(&mut sin0)
                .and(&mut cos0)
                .and(&z[0])
                .for_each(|s, c, &v| (*s, *c) = sin_cos(v));
            let out = sine_forward(&z, &sin0, &cos0, spec);
            let input = std::mem::replace(&mut act, out);
            if record {
                hidden.push(SineLayerTrace {
                    input,
                    z,
                    sin0,
                    cos0,
                });
            }
        }

        let w = &self.weights[layers - 1];
        let mut out: Vec<Array2<f64>> = act.iter().map(|a| a.dot(&w.t())).collect();
        out[0] += &self.biases[layers - 1];
        let jet = Jet {
            spec,
            batch,
            channels: out,
        };
        let trace = record.then(|| Trace {
            spec,
            batch,
            hidden,
            last_input: act,
        });
        Ok((jet, trace))
    }

    /// Reverse sweep: accumulates `∂loss/∂θ` into `tape` given `seeds`, the
    /// loss adjoints of every output channel, and returns the adjoint of the
    /// input values (`B × n0`).
    pub fn backward(&self, trace: &Trace, seeds: &Jet, tape: &mut GradTape) -> Result<Array2<f64>> {
        let spec = trace.spec;
        if seeds.spec.order > spec.order
            || (seeds.spec.order > Order::Value && seeds.spec.diff_dims != spec.diff_dims)
        {
            return Err(Error::UnsupportedPrimitive(format!(
                "seed of order {:?} over {} inputs on a trace of order {:?} over {} inputs",
                seeds.spec.order, seeds.spec.diff_dims, spec.order, spec.diff_dims
            )));
        }
        if seeds.batch != trace.batch || seeds.width() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: trace.batch * self.output_dim(),
                got: seeds.batch * seeds.width(),
            });
        }
        if tape.weights.len() != self.weights.len() {
            return Err(Error::InvalidArchitecture("tape does not match network".into()));
        }

        let channels = spec.channels();
        let layers = self.weights.len();
        let out_w = self.output_dim();
        let mut grad: Vec<Array2<f64>> = (0..channels)
            .map(|c| {
                seeds
                    .channels
                    .get(c)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros((trace.batch, out_w)))
            })
            .collect();

        // final affine layer
        let last = layers - 1;
        for (g, a) in grad.iter().zip(&trace.last_input) {
            general_mat_mul(1.0, &g.t(), a, 1.0, &mut tape.weights[last]);
        }
        tape.biases[last] += &grad[0].sum_axis(Axis(0));
        let mut upstream: Vec<Array2<f64>> = grad.iter().map(|g| g.dot(&self.weights[last])).collect();

        let omega = self.omega0();
        for l in (0..last).rev() {
            let lt = &trace.hidden[l];
            let mut zbar = sine_backward(&upstream, lt, spec);
            zbar.iter_mut().for_each(|z| *z *= omega);
            for (zb, a) in zbar.iter().zip(&lt.input) {
                general_mat_mul(1.0, &zb.t(), a, 1.0, &mut tape.weights[l]);
            }
            tape.biases[l] += &zbar[0].sum_axis(Axis(0));
            let w = &self.weights[l];
            upstream = if l == 0 {
                vec![zbar[0].dot(w)]
            } else {
                zbar.iter().map(|zb| zb.dot(w)).collect()
            };
            grad = zbar;
        }
        drop(grad);
        Ok(upstream.swap_remove(0))
    }
}

fn sine_forward(
    z: &[Array2<f64>],
    sin0: &Array2<f64>,
    cos0: &Array2<f64>,
    spec: JetSpec,
) -> Vec<Array2<f64>> {
    let mut out = Vec::with_capacity(z.len());
    out.push(sin0.clone());
    if spec.order >= Order::Jacobian {
        for i in 0..spec.diff_dims {
            out.push(cos0 * &z[spec.grad_channel(i)]);
        }
    }
    for (a, b) in spec.pairs() {
        let za = &z[spec.grad_channel(a)];
        let zb = &z[spec.grad_channel(b)];
        let zab = &z[spec.hess_channel(a, b)];
        let mut h = Array2::zeros(sin0.raw_dim());
        Zip::from(&mut h)
            .and(sin0)
            .and(cos0)
            .and(za)
            .and(zb)
            .and(zab)
            .for_each(|h, &s, &c, &za, &zb, &zab| *h = c * zab - s * za * zb);
        out.push(h);
    }
    out
}

/// Adjoint of the pre-activation channels given the adjoint of the
/// activation channels (before the `omega0` scaling).
fn sine_backward(gbar: &[Array2<f64>], lt: &SineLayerTrace, spec: JetSpec) -> Vec<Array2<f64>> {
    let (sin0, cos0, z) = (&lt.sin0, &lt.cos0, &lt.z);
    let mut zbar: Vec<Array2<f64>> = gbar.iter().map(|g| g * cos0).collect();
    if spec.order >= Order::Jacobian {
        for i in 0..spec.diff_dims {
            let ci = spec.grad_channel(i);
            Zip::from(&mut zbar[0])
                .and(&gbar[ci])
                .and(sin0)
                .and(&z[ci])
                .for_each(|o, &g, &s, &zi| *o -= g * s * zi);
        }
    }
    for (a, b) in spec.pairs() {
        let ca = spec.grad_channel(a);
        let cb = spec.grad_channel(b);
        let cab = spec.hess_channel(a, b);
        let g = &gbar[cab];
        Zip::from(&mut zbar[0])
            .and(g)
            .and(cos0)
            .and(&z[ca])
            .and(&z[cb])
            .for_each(|o, &g, &c, &za, &zb| *o -= g * c * za * zb);
        Zip::from(&mut zbar[0])
            .and(g)
            .and(sin0)
            .and(&z[cab])
            .for_each(|o, &g, &s, &zab| *o -= g * s * zab);
        if a == b {
            Zip::from(&mut zbar[ca])
                .and(g)
                .and(sin0)
                .and(&z[ca])
                .for_each(|o, &g, &s, &za| *o -= 2.0 * g * s * za);
        } else {
            Zip::from(&mut zbar[ca])
                .and(g)
                .and(sin0)
                .and(&z[cb])
                .for_each(|o, &g, &s, &zb| *o -= g * s * zb);
            Zip::from(&mut zbar[cb])
                .and(g)
                .and(sin0)
                .and(&z[ca])
                .for_each(|o, &g, &s, &za| *o -= g * s * za);
        }
    }
    zbar
}

/// Evaluates `net` on `inputs`, lets `loss` compute a scalar and its adjoint
/// seeds from the resulting jet, and returns the loss with `∂loss/∂θ`.
pub fn loss_backward<F>(
    net: &SineNet,
    inputs: ArrayView2<f64>,
    spec: JetSpec,
    loss: F,
) -> Result<(f64, GradTape)>
where
    F: FnOnce(&Jet) -> Result<(f64, Jet)>,
{
    let (jet, trace) = net.trace(inputs, spec)?;
    let (value, seeds) = loss(&jet)?;
    let mut tape = GradTape::zeros_for(net);
    net.backward(&trace, &seeds, &mut tape)?;
    Ok((value, tape))
}
