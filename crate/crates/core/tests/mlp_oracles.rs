//! Finite-difference and straight-line oracles for the sinusoidal network.

use ndarray::ArrayView2;
use neurowarp_core::mlp::{
    loss_backward, optimizer_step, AdamConfig, GradTape, Jet, JetSpec, OptimizerState, Order, SineNet,
};
use neurowarp_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct re-evaluation of the composition with plain loops.
fn straight_line_forward(net: &SineNet, x: &[f64]) -> Vec<f64> {
    let layers = net.weights().len();
    let mut a = x.to_vec();
    for l in 0..layers {
        let w = &net.weights()[l];
        let b = &net.biases()[l];
        let mut next = vec![0.0; w.nrows()];
        for r in 0..w.nrows() {
            let mut acc = b[r];
            for c in 0..w.ncols() {
                acc += w[[r, c]] * a[c];
            }
            next[r] = if l + 1 < layers { (net.omega0() * acc).sin() } else { acc };
        }
        a = next;
    }
    a
}

fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max)
        / scale
}

fn random_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn fd_jacobian(net: &SineNet, x: &[f64], h: f64) -> Vec<f64> {
    let m = net.output_dim();
    let n = x.len();
    let mut out = vec![0.0; m * n];
    for i in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let fp = net.forward(&xp).unwrap();
        let fm = net.forward(&xm).unwrap();
        for k in 0..m {
            out[k * n + i] = (fp[k] - fm[k]) / (2.0 * h);
        }
    }
    out
}

fn fd_hessian(net: &SineNet, x: &[f64], h: f64) -> Vec<f64> {
    let m = net.output_dim();
    let n = x.len();
    let f = |dx: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, d) in dx {
            p[i] += d;
        }
        net.forward(&p).unwrap()
    };
    let f0 = f(&[]);
    let mut out = vec![0.0; m * n * n];
    for i in 0..n {
        for j in 0..n {
            let vals: Vec<f64> = if i == j {
                let fp = f(&[(i, h)]);
                let fm = f(&[(i, -h)]);
                (0..m).map(|k| (fp[k] - 2.0 * f0[k] + fm[k]) / (h * h)).collect()
            } else {
                let pp = f(&[(i, h), (j, h)]);
                let pm = f(&[(i, h), (j, -h)]);
                let mp = f(&[(i, -h), (j, h)]);
                let mm = f(&[(i, -h), (j, -h)]);
                (0..m)
                    .map(|k| (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h * h))
                    .collect()
            };
            for k in 0..m {
                out[k * n * n + i * n + j] = vals[k];
            }
        }
    }
    out
}

fn fd_param_grad(net: &SineNet, loss: impl Fn(&SineNet) -> f64, h: f64) -> Vec<f64> {
    let base = net.params_flat();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_params_flat(&p).unwrap();
            let lp = loss(&probe);
            p[i] = base[i] - h;
            probe.set_params_flat(&p).unwrap();
            let lm = loss(&probe);
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

fn row(x: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, x.len()), x).unwrap()
}

#[test]
fn forward_matches_straight_line_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (seed, dims) in [(1, vec![2, 64, 3]), (2, vec![3, 32, 32, 2]), (3, vec![3, 128, 64, 16, 1])] {
        let net = SineNet::init(&dims, 30.0, seed).unwrap();
        for _ in 0..20 {
            let x = random_point(&mut rng, dims[0]);
            let got = net.forward(&x).unwrap();
            let want = straight_line_forward(&net, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
            }
        }
    }
}

#[test]
fn batch_forward_matches_pointwise() {
    let net = SineNet::init(&[3, 48, 48, 2], 30.0, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<Vec<f64>> = (0..37).map(|_| random_point(&mut rng, 3)).collect();
    let flat: Vec<f64> = pts.iter().flatten().copied().collect();
    let batch = net
        .forward_batch(ArrayView2::from_shape((37, 3), &flat).unwrap())
        .unwrap();
    for (b, p) in pts.iter().enumerate() {
        let single = net.forward(p).unwrap();
        assert_eq!(batch.row(b).to_vec(), single);
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let net = SineNet::init(&[3, 64, 2], 30.0, 17).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let x = random_point(&mut rng, 3);
        let jac = net.input_jacobian(&x).unwrap();
        let fd = fd_jacobian(&net, &x, 1e-4);
        let err = jac.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-5, "max abs error {err}");
    }
}

#[test]
fn hessian_matches_second_order_differences() {
    let net = SineNet::init(&[3, 64, 2], 30.0, 23).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x = random_point(&mut rng, 3);
        let hess = net.input_hessian(&x).unwrap();
        let got: Vec<f64> = hess.iter().copied().collect();
        let fd = fd_hessian(&net, &x, 1e-4);
        let err = max_rel_err(&got, &fd);
        assert!(err <= 1e-4, "relative error {err}");
    }
}

#[test]
fn hessian_is_exactly_symmetric() {
    let net = SineNet::init(&[3, 32, 32, 3], 30.0, 4).unwrap();
    let h = net.input_hessian(&[0.1, -0.3, 0.8]).unwrap();
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h[[k, i, j]].to_bits(), h[[k, j, i]].to_bits());
            }
        }
    }
}

fn value_loss(net: &SineNet, x: &[f64], y: &[f64]) -> f64 {
    net.forward(x)
        .unwrap()
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn hessian_loss(net: &SineNet, x: &[f64]) -> f64 {
    net.input_hessian(x).unwrap().iter().map(|v| v * v).sum()
}

#[test]
fn value_loss_gradient_matches_finite_differences() {
    let net = SineNet::init(&[3, 24, 24, 2], 30.0, 31).unwrap();
    let x = [0.3, -0.2, 0.5];
    let y = [0.4, -0.1];
    let (loss, tape) = loss_backward(&net, row(&x), JetSpec::value(), |jet| {
        let mut seeds = Jet::zeros_like(jet);
        let mut loss = 0.0;
        for k in 0..2 {
            let r = jet.value(0, k) - y[k];
            loss += r * r;
            seeds.values_mut()[[0, k]] = 2.0 * r;
        }
        Ok((loss, seeds))
    })
    .unwrap();
    assert!((loss - value_loss(&net, &x, &y)).abs() < 1e-14);
    let fd = fd_param_grad(&net, |n| value_loss(n, &x, &y), 1e-6);
    let err = max_rel_err(&tape.flat(), &fd);
    assert!(err <= 1e-4, "relative error {err}");
}

fn hessian_seeds(jet: &Jet, n: usize) -> (f64, Jet) {
    let mut seeds = Jet::zeros_like(jet);
    let mut loss = 0.0;
    for b in 0..jet.batch() {
        for k in 0..jet.width() {
            for i in 0..n {
                for j in i..n {
                    let h = jet.hess(b, k, i, j);
                    let mult = if i == j { 1.0 } else { 2.0 };
                    loss += mult * h * h;
                    seeds.hessians_mut(i, j)[[b, k]] = 2.0 * mult * h;
                }
            }
        }
    }
    (loss, seeds)
}

#[test]
fn hessian_loss_gradient_matches_finite_differences() {
    for (seed, dims) in [(41, vec![3, 16, 2]), (42, vec![3, 12, 12, 2]), (43, vec![2, 8, 8, 8, 3])] {
        let net = SineNet::init(&dims, 30.0, seed).unwrap();
        let x: Vec<f64> = [0.2, -0.6, 0.35][..dims[0]].to_vec();
        let n = dims[0];
        let (loss, tape) = loss_backward(&net, row(&x), JetSpec::new(Order::Hessian, n), |jet| {
            Ok(hessian_seeds(jet, n))
        })
        .unwrap();
        assert!((loss - hessian_loss(&net, &x)).abs() <= 1e-9 * loss.abs().max(1.0));
        let fd = fd_param_grad(&net, |n| hessian_loss(n, &x), 1e-6);
        let err = max_rel_err(&tape.flat(), &fd);
        assert!(err <= 1e-3, "dims {dims:?}: relative error {err}");
    }
}

#[test]
fn mixed_jacobian_and_value_loss_through_input_adjoint() {
    // loss = |f(g(x))|^2 + (d f_0/d x_0 at x)^2, composing two passes of one net.
    let net = SineNet::init(&[2, 16, 2], 5.0, 8).unwrap();
    let x = [0.25, -0.4];
    let direct = |n: &SineNet| {
        let y = n.forward(&x).unwrap();
        let z = n.forward(&y).unwrap();
        let j = n.input_jacobian(&x).unwrap();
        z.iter().map(|v| v * v).sum::<f64>() + j[[0, 0]].powi(2)
    };
    let spec = JetSpec::new(Order::Jacobian, 2);
    let (first, trace1) = net.trace(row(&x), spec).unwrap();
    let y = first.value_row(0);
    let (second, trace2) = net.trace(row(&y), JetSpec::value()).unwrap();
    let mut tape = GradTape::zeros_for(&net);
    let mut seeds2 = Jet::zeros_like(&second);
    for k in 0..2 {
        seeds2.values_mut()[[0, k]] = 2.0 * second.value(0, k);
    }
    let adj = net.backward(&trace2, &seeds2, &mut tape).unwrap();
    let mut seeds1 = Jet::zeros_like(&first);
    for k in 0..2 {
        seeds1.values_mut()[[0, k]] = adj[[0, k]];
    }
    seeds1.grads_mut(0)[[0, 0]] = 2.0 * first.grad(0, 0, 0);
    net.backward(&trace1, &seeds1, &mut tape).unwrap();
    let fd = fd_param_grad(&net, direct, 1e-6);
    let err = max_rel_err(&tape.flat(), &fd);
    assert!(err <= 1e-5, "relative error {err}");
}

#[test]
fn constant_loss_has_zero_gradient() {
    let net = SineNet::init(&[3, 16, 2], 30.0, 1).unwrap();
    let (_, tape) = loss_backward(&net, row(&[0.1, 0.2, 0.3]), JetSpec::new(Order::Hessian, 3), |jet| {
        Ok((7.0, Jet::zeros_like(jet)))
    })
    .unwrap();
    assert!(tape.flat().iter().all(|&g| g == 0.0));
    assert_eq!(tape.len(), net.param_count());
}

#[test]
fn seeds_beyond_traced_order_are_rejected() {
    let net = SineNet::init(&[3, 16, 2], 30.0, 1).unwrap();
    let res = loss_backward(&net, row(&[0.1, 0.2, 0.3]), JetSpec::new(Order::Jacobian, 3), |jet| {
        Ok((0.0, Jet::zeros(JetSpec::new(Order::Hessian, 3), jet.batch(), jet.width())))
    });
    assert!(matches!(res, Err(Error::UnsupportedPrimitive(_))));
}

/// One-parameter toy: only the output bias of a `[1,1,1]` net is trained.
fn quadratic_toy(lr: f64, steps: usize) -> Vec<f64> {
    let mut net = SineNet::init(&[1, 1, 1], 1.0, 0).unwrap();
    net.biases_mut()[1][0] = 0.0;
    let mut state = OptimizerState::new(&net, AdamConfig { lr, ..AdamConfig::default() });
    let mut tape = GradTape::zeros_for(&net);
    let mut trajectory = Vec::new();
    for _ in 0..steps {
        let theta = net.biases()[1][0];
        let mut flat = vec![0.0; tape.len()];
        *flat.last_mut().unwrap() = 2.0 * (theta - 3.0);
        tape.set_flat(&flat).unwrap();
        optimizer_step(&mut net, &tape, &mut state).unwrap();
        trajectory.push(net.biases()[1][0]);
    }
    trajectory
}

fn with_flat(mut tape: GradTape, flat: &[f64]) -> GradTape {
    tape.set_flat(flat).unwrap();
    tape
}

#[test]
fn adam_solves_quadratic_toy() {
    let traj = quadratic_toy(0.1, 500);
    let theta = *traj.last().unwrap();
    assert!((theta - 3.0).abs() <= 1e-3, "theta = {theta}");
}

#[test]
fn adam_trajectory_is_deterministic() {
    assert_eq!(quadratic_toy(0.1, 50), quadratic_toy(0.1, 50));
}

#[test]
fn zero_gradient_leaves_parameters_unchanged() {
    let mut net = SineNet::init(&[2, 8, 2], 30.0, 3).unwrap();
    let before = net.params_flat();
    let mut state = OptimizerState::new(&net, AdamConfig::default());
    let tape = GradTape::zeros_for(&net);
    optimizer_step(&mut net, &tape, &mut state).unwrap();
    optimizer_step(&mut net, &tape, &mut state).unwrap();
    assert_eq!(before, net.params_flat());
    assert_eq!(state.step_count(), 2);
}

#[test]
fn nan_gradient_aborts() {
    let mut net = SineNet::init(&[2, 8, 2], 30.0, 3).unwrap();
    let mut state = OptimizerState::new(&net, AdamConfig::default());
    let mut flat = vec![0.0; net.param_count()];
    flat[3] = f64::NAN;
    let tape = with_flat(GradTape::zeros_for(&net), &flat);
    let err = optimizer_step(&mut net, &tape, &mut state).unwrap_err();
    assert!(err.is_numeric());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn derivatives_agree_with_finite_differences(
        seed in any::<u64>(),
        width in 4usize..48,
        depth in 1usize..3,
        omega in 1.0f64..30.0,
        x in proptest::collection::vec(-0.9f64..0.9, 3),
    ) {
        let mut dims = vec![3];
        dims.extend(std::iter::repeat_n(width, depth));
        dims.push(2);
        let net = SineNet::init(&dims, omega, seed).unwrap();
        let jac: Vec<f64> = net.input_jacobian(&x).unwrap().iter().copied().collect();
        let h = 1e-4 / omega.max(1.0).sqrt();
        prop_assert!(max_rel_err(&jac, &fd_jacobian(&net, &x, h)) <= 1e-5);
        let hess: Vec<f64> = net.input_hessian(&x).unwrap().iter().copied().collect();
        prop_assert!(max_rel_err(&hess, &fd_hessian(&net, &x, 1e-4)) <= 1e-4);
    }
}
