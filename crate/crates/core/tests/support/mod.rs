#![allow(dead_code)]

use ndarray::{Array1, Array2};
use neurowarp_core::mlp::SineNet;
use neurowarp_core::neural_image::{FitReport, NeuralImage};

/// A neural image with closed-form content: channel `k` has raw output
/// `c_k + Σ a_kj sin(w_j · x + b_j)` (one hidden layer, omega0 = 1).
pub fn analytic_image(waves: &[([f64; 2], f64)], amps: &[Vec<f64>], offsets: &[f64], size: usize) -> NeuralImage {
    let h = waves.len();
    let c = offsets.len();
    let w0 = Array2::from_shape_fn((h, 2), |(j, i)| waves[j].0[i]);
    let b0 = Array1::from_shape_fn(h, |j| waves[j].1);
    let w1 = Array2::from_shape_fn((c, h), |(k, j)| amps[k][j]);
    let b1 = Array1::from(offsets.to_vec());
    let net = SineNet::from_parts(1.0, vec![w0, w1], vec![b0, b1]).unwrap();
    NeuralImage::new(
        net,
        FitReport {
            width: size,
            height: size,
            channels: c,
            ..FitReport::default()
        },
    )
    .unwrap()
}

/// Smooth single-channel image with nearly uniform gradient magnitude.
pub fn smooth_a(size: usize) -> NeuralImage {
    analytic_image(
        &[([1.3, 0.0], 0.2), ([0.0, 1.7], -0.4), ([1.0, 1.0], 0.0)],
        &[vec![0.45, 0.3, 0.1]],
        &[0.0],
        size,
    )
}

pub fn smooth_b(size: usize) -> NeuralImage {
    analytic_image(
        &[([-1.1, 2.1], 0.5), ([2.5, 0.0], -0.3), ([0.4, -0.9], 1.0)],
        &[vec![0.35, 0.3, 0.15]],
        &[-0.1],
        size,
    )
}

pub fn rgb_pair(size: usize) -> (NeuralImage, NeuralImage) {
    let waves = [([1.3, 0.2], 0.2), ([-0.4, 1.7], -0.4), ([1.0, 1.0], 0.0), ([2.0, -1.0], 0.7)];
    let a = analytic_image(
        &waves,
        &[vec![0.4, 0.3, 0.1, 0.0], vec![0.0, 0.3, 0.2, 0.2], vec![0.2, 0.0, 0.3, 0.3]],
        &[0.1, -0.1, 0.0],
        size,
    );
    let b = analytic_image(
        &waves,
        &[vec![-0.2, 0.1, 0.4, 0.1], vec![0.3, -0.3, 0.0, 0.2], vec![0.1, 0.2, -0.3, 0.2]],
        &[0.0, 0.1, -0.1],
        size,
    );
    (a, b)
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub mod poisson;

pub fn psnr(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    let mse = (a - b).mapv(|v| v * v).mean().unwrap();
    if mse == 0.0 {
        return f64::INFINITY;
    }
    -10.0 * mse.log10()
}

/// Single-channel image with features a few pixels wide at 32×32.
pub fn textured(size: usize) -> NeuralImage {
    analytic_image(
        &[([4.0, 1.0], 0.3), ([-1.5, 3.5], -0.6), ([2.5, -2.5], 1.1)],
        &[vec![0.35, 0.3, 0.25]],
        &[0.0],
        size,
    )
}
