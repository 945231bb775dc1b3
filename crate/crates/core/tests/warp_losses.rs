use ndarray::{arr2, Array2};
use neurowarp_core::landmarks::LandmarkPairs;
use neurowarp_core::mlp::SineNet;
use neurowarp_core::warp::{
    loss_data, loss_identity, loss_inverse, loss_thin_plate, WarpConfig, WarpField, WarpModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Affine;

impl WarpField for Affine {
    fn warp(&self, p: [f64; 3]) -> [f64; 2] {
        [1.1 * p[0] - 0.3 * p[1] + 0.2 * p[2] + 0.1, 0.4 * p[0] + p[1] - p[2]]
    }
    fn hessian(&self, _: [f64; 3]) -> [[[f64; 3]; 3]; 2] {
        [[[0.0; 3]; 3]; 2]
    }
}

/// `T(x, t) = x + t·δ + offset`.
struct Translate {
    delta: [f64; 2],
    offset: [f64; 2],
}

impl WarpField for Translate {
    fn warp(&self, p: [f64; 3]) -> [f64; 2] {
        [
            p[0] + p[2] * self.delta[0] + self.offset[0],
            p[1] + p[2] * self.delta[1] + self.offset[1],
        ]
    }
    fn hessian(&self, _: [f64; 3]) -> [[[f64; 3]; 3]; 2] {
        [[[0.0; 3]; 3]; 2]
    }
}

/// `T(x, y, t) = (x², y)`.
struct Square;

impl WarpField for Square {
    fn warp(&self, p: [f64; 3]) -> [f64; 2] {
        [p[0] * p[0], p[1]]
    }
    fn hessian(&self, _: [f64; 3]) -> [[[f64; 3]; 3]; 2] {
        let mut h = [[[0.0; 3]; 3]; 2];
        h[0][0][0] = 2.0;
        h[1] = [[0.0; 3]; 3];
        h
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, cols), |_| rng.random_range(lo..hi))
}

fn spatial(n: usize, seed: u64) -> Array2<f64> {
    uniform(&mut ChaCha8Rng::seed_from_u64(seed), n, 2, -1.0, 1.0)
}

fn spacetime(n: usize, seed: u64) -> Array2<f64> {
    uniform(&mut ChaCha8Rng::seed_from_u64(seed), n, 3, -1.0, 1.0)
}

fn random_model(seed: u64) -> WarpModel {
    let cfg = WarpConfig {
        hidden: vec![32],
        seed,
        ..WarpConfig::default()
    };
    WarpModel::init(&cfg).unwrap()
}

/// `x + W1 sin(ω (W0 p + b0)) + b1`, written out directly.
fn straight_line(net: &SineNet, p: [f64; 3]) -> [f64; 2] {
    let (w0, b0) = (&net.weights()[0], &net.biases()[0]);
    let (w1, b1) = (&net.weights()[1], &net.biases()[1]);
    let mut out = [p[0] + b1[0], p[1] + b1[1]];
    for h in 0..w0.nrows() {
        let mut z = b0[h];
        for i in 0..3 {
            z += w0[[h, i]] * p[i];
        }
        let a = (net.omega0() * z).sin();
        out[0] += w1[[0, h]] * a;
        out[1] += w1[[1, h]] * a;
    }
    out
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

#[test]
fn identity_rig_zeroes_every_term() {
    let model = WarpModel::identity(&WarpConfig::default()).unwrap();
    let pairs = neurowarp_core::fixtures::fixed_points();
    let times = uniform(&mut ChaCha8Rng::seed_from_u64(1), pairs.len(), 8, 0.0, 1.0);
    assert_eq!(loss_identity(&model, spatial(256, 2).view()), 0.0);
    assert_eq!(loss_inverse(&model, spacetime(256, 3).view()), 0.0);
    assert_eq!(loss_data(&model, &pairs, times.view()).unwrap(), 0.0);
    assert_eq!(loss_thin_plate(&model, spacetime(64, 4).view()), 0.0);
}

#[test]
fn constant_offset_identity_loss() {
    let field = Translate {
        delta: [0.0, 0.0],
        offset: [0.1, 0.0],
    };
    let v = loss_identity(&field, spatial(100, 5).view());
    assert!((v - 0.01).abs() < 1e-15);
}

#[test]
fn constant_velocity_translation_is_inverse_consistent() {
    for delta in [[0.2, 0.0], [-0.5, 0.3], [1.0, 1.0]] {
        let field = Translate {
            delta,
            offset: [0.0, 0.0],
        };
        assert!(loss_inverse(&field, spacetime(200, 6).view()) < 1e-30);
    }
}

#[test]
fn identity_data_loss_of_single_offset_pair() {
    let model = WarpModel::identity(&WarpConfig::default()).unwrap();
    let pairs = LandmarkPairs::from_points(&[[0.0, 0.0]], &[[0.2, 0.0]]).unwrap();
    let times = uniform(&mut ChaCha8Rng::seed_from_u64(7), 1, 64, 0.0, 1.0);
    let v = loss_data(&model, &pairs, times.view()).unwrap();
    assert!((v - 0.04).abs() < 1e-15);
}

#[test]
fn data_loss_rejects_empty_pairs() {
    let model = WarpModel::identity(&WarpConfig::default()).unwrap();
    let pairs = LandmarkPairs::default();
    assert!(loss_data(&model, &pairs, Array2::zeros((0, 4)).view()).is_err());
}

#[test]
fn thin_plate_of_affine_and_square_maps() {
    let pts = spacetime(50, 8);
    assert_eq!(loss_thin_plate(&Affine, pts.view()), 0.0);
    assert_eq!(loss_thin_plate(&Square, pts.view()), 4.0);
}

#[test]
fn losses_match_straight_line_oracle() {
    let model = random_model(11);
    let net = model.net();
    let xs = spatial(700, 12);
    let st = spacetime(700, 13);
    let pairs = neurowarp_core::fixtures::face_pairs();
    let times = uniform(&mut ChaCha8Rng::seed_from_u64(14), pairs.len(), 16, 0.0, 1.0);

    let id: f64 = xs
        .rows()
        .into_iter()
        .map(|r| sq_dist(straight_line(net, [r[0], r[1], 0.0]), [r[0], r[1]]))
        .sum::<f64>()
        / 700.0;
    assert!((loss_identity(&model, xs.view()) - id).abs() <= 1e-12 * id.max(1.0));

    let inv: f64 = st
        .rows()
        .into_iter()
        .map(|r| {
            let y = straight_line(net, [r[0], r[1], r[2]]);
            sq_dist(straight_line(net, [y[0], y[1], -r[2]]), [r[0], r[1]])
        })
        .sum::<f64>()
        / 700.0;
    assert!((loss_inverse(&model, st.view()) - inv).abs() <= 1e-12 * inv.max(1.0));

    let mut data = 0.0;
    for (pair, ts) in pairs.pairs().iter().zip(times.rows()) {
        for &t in ts {
            let a = straight_line(net, [pair.p[0], pair.p[1], t]);
            let b = straight_line(net, [pair.q[0], pair.q[1], t - 1.0]);
            data += sq_dist(a, b) / 16.0;
        }
    }
    let got = loss_data(&model, &pairs, times.view()).unwrap();
    assert!((got - data).abs() <= 1e-12 * data.max(1.0));
}

/// Mean of `‖Hess‖²_F` over a dense midpoint grid of `[-1, 1]³`.
fn quadrature(model: &WarpModel, n: usize) -> f64 {
    let mut pts = Array2::zeros((n * n * n, 3));
    let c = |k: usize| -1.0 + (2 * k + 1) as f64 / n as f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let r = (i * n + j) * n + k;
                pts[[r, 0]] = c(i);
                pts[[r, 1]] = c(j);
                pts[[r, 2]] = c(k);
            }
        }
    }
    model.hessian_sq_batch(pts.view()).mean().unwrap()
}

#[test]
fn thin_plate_monte_carlo_agrees_with_quadrature() {
    let cfg = WarpConfig {
        hidden: vec![32],
        omega0: 3.0,
        seed: 21,
        ..WarpConfig::default()
    };
    let model = WarpModel::init(&cfg).unwrap();
    let pts = spacetime(4096, 22);
    let per_sample = model.hessian_sq_batch(pts.view());
    let mean = loss_thin_plate(&model, pts.view());
    let var = per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4095.0;
    let se = (var / 4096.0).sqrt();
    let reference = quadrature(&model, 48);
    assert!(
        (mean - reference).abs() <= 3.0 * se,
        "mc {mean} quadrature {reference} se {se}"
    );
}

#[test]
fn batched_hessian_matches_pointwise() {
    let model = random_model(31);
    let pts = spacetime(100, 32);
    let batched = model.hessian_sq_batch(pts.view());
    for (r, row) in pts.rows().into_iter().enumerate() {
        let h = model.hessian([row[0], row[1], row[2]]);
        let direct: f64 = h.iter().flatten().flatten().map(|v| v * v).sum();
        assert!((batched[r] - direct).abs() <= 1e-12 * direct.max(1.0));
    }
}

#[test]
fn model_json_round_trip_is_exact() {
    let model = random_model(41);
    let back = WarpModel::from_json(&model.to_json()).unwrap();
    assert_eq!(back, model);
    let pts = arr2(&[[0.1, -0.2, 0.3]]);
    assert_eq!(back.warp_batch(pts.view()), model.warp_batch(pts.view()));
}
