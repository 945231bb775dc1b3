use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::jet::{Jet, JetSpec, Order};
use crate::error::{Error, Result};

pub const SINE_NET_VERSION: &str = "sine-net/1";

#[derive(Clone, Debug, PartialEq)]
pub struct SineNet {
    layer_dims: Vec<usize>,
    omega0: f64,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
}

impl SineNet {
    /// Initializes a network with `layer_dims = [n0, hidden.., m]`.
    ///
    /// First-layer weights are uniform in `±1/n0`, every later layer in
    /// `±sqrt(6/n_i)/omega0`. Biases start at zero.
    pub fn init(layer_dims: &[usize], omega0: f64, seed: u64) -> Result<Self> {
        validate_dims(layer_dims, omega0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for (i, pair) in layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = if i == 0 {
                1.0 / fan_in as f64
            } else {
                (6.0 / fan_in as f64).sqrt() / omega0
            };
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(SineNet {
            layer_dims: layer_dims.to_vec(),
            omega0,
            weights,
            biases,
        })
    }

    /// Builds a network from explicit parameters.
    pub fn from_parts(
        omega0: f64,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArchitecture("no layers".into()));
        }
        let mut dims = vec![weights[0].ncols()];
        for w in &weights {
            dims.push(w.nrows());
        }
        validate_dims(&dims, omega0)?;
        if biases.len() != weights.len() {
            return Err(Error::InvalidArchitecture(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != dims[i] || b.len() != dims[i + 1] {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {i}: shapes do not chain"
                )));
            }
        }
        let net = SineNet {
            layer_dims: dims,
            omega0,
            weights,
            biases,
        };
        if !net.is_finite() {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Number of sinusoidal layers.
    pub fn depth(&self) -> usize {
        self.layer_dims.len() - 2
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Parameters flattened layer by layer: weights row-major, then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
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

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let jet = self.eval_point(x, JetSpec::value())?;
        Ok(jet.value_row(0))
    }

    /// `m × n0` Jacobian of the outputs with respect to the inputs.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Array2<f64>> {
        self.check_input(x.len())?;
        let n0 = self.input_dim();
        let jet = self.eval_point(x, JetSpec::new(Order::Jacobian, n0))?;
        Ok(Array2::from_shape_fn((self.output_dim(), n0), |(k, i)| {
            jet.grad(0, k, i)
        }))
    }

    /// `m × n0 × n0` second derivatives, symmetric in the last two indices.
    pub fn input_hessian(&self, x: &[f64]) -> Result<Array3<f64>> {
        self.check_input(x.len())?;
        let n0 = self.input_dim();
        let jet = self.eval_point(x, JetSpec::new(Order::Hessian, n0))?;
        Ok(Array3::from_shape_fn(
            (self.output_dim(), n0, n0),
            |(k, i, j)| jet.hess(0, k, i, j),
        ))
    }

    fn eval_point(&self, x: &[f64], spec: JetSpec) -> Result<Jet> {
        let input = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        self.eval(input, spec)
    }

    /// Forward values for a batch of inputs (`B × n0`), without a trace.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let jet = self.eval(inputs, JetSpec::value())?;
        let b = jet.batch();
        Ok(jet.into_data().slice_move(s![..b, ..]))
    }

    pub fn to_json(&self) -> SineNetJson {
        SineNetJson {
            version: SINE_NET_VERSION.to_string(),
            layer_dims: self.layer_dims.clone(),
            omega0: self.omega0,
            weights: self.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }

    pub fn from_json(doc: &SineNetJson) -> Result<Self> {
        if doc.version != SINE_NET_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported network version {:?}",
                doc.version
            )));
        }
        validate_dims(&doc.layer_dims, doc.omega0)?;
        let layers = doc.layer_dims.len() - 1;
        if doc.weights.len() != layers || doc.biases.len() != layers {
            return Err(Error::InvalidArchitecture(
                "layer count does not match layer_dims".into(),
            ));
        }
        let mut weights = Vec::with_capacity(layers);
        for (i, w) in doc.weights.iter().enumerate() {
            let shape = (doc.layer_dims[i + 1], doc.layer_dims[i]);
            let arr = Array2::from_shape_vec(shape, w.clone()).map_err(|_| {
                Error::InvalidArchitecture(format!("layer {i}: weight count mismatch"))
            })?;
            weights.push(arr);
        }
        let biases = doc.biases.iter().map(|b| Array1::from_vec(b.clone())).collect();
        Self::from_parts(doc.omega0, weights, biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_json())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

/// On-disk form of a [`SineNet`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SineNetJson {
    pub version: String,
    pub layer_dims: Vec<usize>,
    pub omega0: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

fn validate_dims(dims: &[usize], omega0: f64) -> Result<()> {
    if dims.len() < 3 {
        return Err(Error::InvalidArchitecture(format!(
            "need input, at least one hidden layer and output, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArchitecture(format!(
            "zero-width layer in {dims:?}"
        )));
    }
    if !(omega0 > 0.0 && omega0.is_finite()) {
        return Err(Error::InvalidArchitecture(format!(
            "omega0 must be positive, got {omega0}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use ndarray::{arr1, arr2};

    use super::*;

    /// d=1, dims [1,1,1], omega0=1, W0=1, b0=0, W1=2, b1=0.5.
    fn hand_net() -> SineNet {
        SineNet::from_parts(
            1.0,
            vec![arr2(&[[1.0]]), arr2(&[[2.0]])],
            vec![arr1(&[0.0]), arr1(&[0.5])],
        )
        .unwrap()
    }

    #[test]
    fn init_bounds_first_layer() {
        let net = SineNet::init(&[2, 128, 2], 30.0, 7).unwrap();
        assert!(net.weights()[0].iter().all(|w| w.abs() <= 0.5));
        assert!(net.biases().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_bounds_later_layer() {
        let net = SineNet::init(&[3, 128, 3], 30.0, 1).unwrap();
        let bound = (6.0f64 / 128.0).sqrt() / 30.0;
        assert!((bound - 0.00722).abs() < 1e-5);
        assert!(net.weights()[1].iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_is_deterministic() {
        let a = SineNet::init(&[3, 64, 64, 2], 30.0, 42).unwrap();
        let b = SineNet::init(&[3, 64, 64, 2], 30.0, 42).unwrap();
        let c = SineNet::init(&[3, 64, 64, 2], 30.0, 43).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        assert_ne!(a.params_flat(), c.params_flat());
    }

    #[test]
    fn invalid_architectures() {
        for dims in [&[][..], &[2][..], &[2, 3][..], &[2, 0, 2][..]] {
            assert!(matches!(
                SineNet::init(dims, 30.0, 0),
                Err(Error::InvalidArchitecture(_))
            ));
        }
        assert!(SineNet::init(&[2, 4, 2], 0.0, 0).is_err());
    }

    #[test]
    fn hand_net_forward() {
        let net = hand_net();
        assert_eq!(net.forward(&[0.0]).unwrap(), vec![0.5]);
        assert!((net.forward(&[PI / 2.0]).unwrap()[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn hand_net_jacobian() {
        let net = hand_net();
        assert_eq!(net.input_jacobian(&[0.0]).unwrap()[[0, 0]], 2.0);
        assert!((net.input_jacobian(&[PI / 3.0]).unwrap()[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_net_hessian() {
        let net = hand_net();
        assert_eq!(net.input_hessian(&[0.0]).unwrap()[[0, 0, 0]], 0.0);
        let h = net.input_hessian(&[0.7]).unwrap()[[0, 0, 0]];
        assert!((h + 2.0 * 0.7f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn affine_equivalent_net_has_zero_hessian() {
        let mut net = SineNet::init(&[3, 16, 16, 2], 30.0, 3).unwrap();
        net.weights_mut()[0].fill(0.0);
        net.biases_mut()[0].fill(0.3);
        let h = net.input_hessian(&[0.2, -0.4, 0.9]).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let net = hand_net();
        assert!(matches!(
            net.forward(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(net.input_jacobian(&[]).is_err());
        assert!(net.input_hessian(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let net = SineNet::init(&[3, 32, 2], 30.0, 11).unwrap();
        let text = serde_json::to_string(&net.to_json()).unwrap();
        assert!(text.contains("\"version\":\"sine-net/1\""));
        let back = SineNet::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(net, back);
        let bits = |n: &SineNet| n.params_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&net), bits(&back));
    }

    #[test]
    fn json_rejects_wrong_version() {
        let mut doc = SineNet::init(&[2, 4, 1], 30.0, 0).unwrap().to_json();
        doc.version = "sine-net/0".into();
        assert!(SineNet::from_json(&doc).is_err());
    }
}
