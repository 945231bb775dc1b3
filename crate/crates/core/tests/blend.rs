mod support;

use std::sync::OnceLock;

use ndarray::{arr2, s, Array2, Axis};
use neurowarp_core::blend::{
    boundary_residual, feature_transfer, linear_blend, morph_sample, target_gradient, train_morph, warped_jacobians,
    GradientFieldSpec, GradientMode, MorphModel, TimeSampling,
};
use neurowarp_core::fixtures::morph_config;
use neurowarp_core::image::GridFrame;
use neurowarp_core::neural_image::NeuralImage;
use neurowarp_core::region::RegionMask;
use neurowarp_core::warp::{warped_image_sample, WarpConfig, WarpModel};
use support::psnr;

const N: usize = 32;

fn identity() -> WarpModel {
    WarpModel::identity(&WarpConfig::default()).unwrap()
}

/// A freshly initialised warp: small but non-trivial residual motion.
fn wobbly() -> WarpModel {
    WarpModel::init(&WarpConfig {
        hidden: vec![16],
        omega0: 3.0,
        seed: 11,
        ..WarpConfig::default()
    })
    .unwrap()
}

fn grid(n: usize) -> Array2<f64> {
    GridFrame::new(n, n).centers()
}

fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn linear_blend_endpoints_are_exact() {
    let warp = wobbly();
    let (i0, i1) = support::rgb_pair(N);
    let x = grid(9);
    let a = linear_blend(&warp, &i0, &i1, x.view(), 0.0).unwrap();
    assert_eq!(a, warped_image_sample(&warp, &i0, 0, x.view(), 0.0).unwrap());
    let b = linear_blend(&warp, &i0, &i1, x.view(), 1.0).unwrap();
    assert_eq!(b, warped_image_sample(&warp, &i1, 1, x.view(), 1.0).unwrap());
    assert!(linear_blend(&warp, &i0, &i1, x.view(), 1.01).is_err());
}

#[test]
fn linear_blend_of_one_image_is_that_image() {
    let warp = identity();
    let img = support::smooth_a(N);
    let x = grid(11);
    let want = img.sample(x.view());
    for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
        let got = linear_blend(&warp, &img, &img, x.view(), t).unwrap();
        assert!(max_abs(&got, &want) <= 1e-12, "t={t}");
    }
}

#[test]
fn target_gradient_modes() {
    let warp = wobbly();
    let (i0, i1) = support::rgb_pair(N);
    let x = grid(9);
    let region = RegionMask::full(N, N);
    let times = vec![0.0; x.nrows()];
    let (_, j0) = warped_jacobians(&warp, &i0, 0, x.view(), &times);
    let avg = GradientFieldSpec::new(GradientMode::Average, 0, region.clone()).unwrap();
    assert_eq!(target_gradient(&warp, &i0, &i1, &avg, x.view(), 0.0).unwrap(), j0);

    let flat = support::analytic_image(&[([1.0, 0.0], 0.0)], &[vec![0.0], vec![0.0], vec![0.0]], &[0.1, 0.2, 0.3], N);
    let mix = GradientFieldSpec::new(GradientMode::Mix, 0, region.clone()).unwrap();
    let times = vec![0.4; x.nrows()];
    let (_, j0) = warped_jacobians(&warp, &i0, 0, x.view(), &times);
    assert_eq!(target_gradient(&warp, &i0, &flat, &mix, x.view(), 0.4).unwrap(), j0);

    // dominance, pointwise
    let (_, j1) = warped_jacobians(&warp, &i1, 1, x.view(), &times);
    let u = target_gradient(&warp, &i0, &i1, &mix, x.view(), 0.4).unwrap();
    let norm = |j: &ndarray::Array3<f64>, b: usize| j.index_axis(Axis(0), b).iter().map(|v| v * v).sum::<f64>();
    for b in 0..x.nrows() {
        let pick = if norm(&j0, b) > norm(&j1, b) { &j0 } else { &j1 };
        assert_eq!(u.index_axis(Axis(0), b), pick.index_axis(Axis(0), b));
    }

    let clone = GradientFieldSpec::new(GradientMode::Clone, 0, region).unwrap();
    assert_eq!(target_gradient(&warp, &i0, &i1, &clone, x.view(), 0.4).unwrap(), j1);
}

#[test]
fn chain_rule_matches_finite_differences() {
    let warp = wobbly();
    let (i0, i1) = support::rgb_pair(N);
    let h = 1e-5;
    let pts = arr2(&[[0.1, -0.3], [-0.6, 0.5], [0.4, 0.7]]);
    for (img, i) in [(&i0, 0u8), (&i1, 1u8)] {
        for t in [0.0, 0.3, 1.0] {
            let (_, jac) = warped_jacobians(&warp, img, i, pts.view(), &[t; 3]);
            for d in 0..2 {
                let mut plus = pts.clone();
                let mut minus = pts.clone();
                plus.column_mut(d).mapv_inplace(|v| v + h);
                minus.column_mut(d).mapv_inplace(|v| v - h);
                let fd = (warped_image_sample(&warp, img, i, plus.view(), t).unwrap()
                    - warped_image_sample(&warp, img, i, minus.view(), t).unwrap())
                    / (2.0 * h);
                let err = max_abs(&fd, &jac.slice(s![.., .., d]).to_owned());
                assert!(err <= 1e-3, "image {i} t={t} d={d}: {err}");
            }
        }
    }
}

fn frames_psnr(model: &MorphModel, want: impl Fn(f64) -> Array2<f64>, times: &[f64]) -> f64 {
    let x = grid(N);
    times
        .iter()
        .map(|&t| psnr(&morph_sample(model, x.view(), t).unwrap(), &want(t)))
        .fold(f64::INFINITY, f64::min)
}

const TIMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[test]
fn empty_region_regresses_onto_base() {
    let warp = wobbly();
    let (i0, i1) = (support::smooth_a(N), support::smooth_b(N));
    let spec = GradientFieldSpec::new(GradientMode::Clone, 0, RegionMask::empty(N, N)).unwrap();
    let model = train_morph(&warp, &i0, &i1, &spec, &morph_config(1500, TimeSampling::Uniform)).unwrap();
    let x = grid(N);
    let worst = frames_psnr(&model, |t| warped_image_sample(&warp, &i0, 0, x.view(), t).unwrap(), &TIMES);
    assert!(worst >= 35.0, "{worst} dB");
    assert_eq!(model.diagnostics().unwrap().region_fraction, 0.0);
}

fn same_image_clone() -> &'static (MorphModel, NeuralImage) {
    static MODEL: OnceLock<(MorphModel, NeuralImage)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let img = support::smooth_b(N);
        let spec = GradientFieldSpec::new(GradientMode::Clone, 0, RegionMask::disk(N, N, [0.1, 0.0], 0.5)).unwrap();
        let model = train_morph(&identity(), &img, &img, &spec, &morph_config(1500, TimeSampling::Uniform)).unwrap();
        (model, img)
    })
}

#[test]
fn cloning_an_image_into_itself_changes_nothing() {
    let (model, img) = same_image_clone();
    let want = img.sample(grid(N).view());
    let worst = frames_psnr(model, |_| want.clone(), &TIMES);
    assert!(worst >= 30.0, "{worst} dB");
}

#[test]
fn boundary_residual_is_consistent_with_samples() {
    let (model, img) = same_image_clone();
    let warp = identity();
    let x = grid(24);
    let times: Vec<f64> = (0..x.nrows()).map(|r| (r % 7) as f64 / 6.0).collect();
    let got = boundary_residual(model, &warp, img, img, x.view(), &times);
    let mut total = 0.0;
    let mut n = 0;
    for (r, &t) in times.iter().enumerate() {
        let p = x.slice(s![r..r + 1, ..]);
        if model.spec().region.contains([p[[0, 0]], p[[0, 1]]]) {
            continue;
        }
        let a = morph_sample(model, p, t).unwrap();
        let b = img.sample(p);
        total += (&a - &b).mapv(f64::abs).mean().unwrap();
        n += 1;
    }
    assert!((got - total / n as f64).abs() <= 1e-12);
    assert!(model.diagnostics().unwrap().boundary_residual <= 0.02);
}

fn clone_model() -> &'static MorphModel {
    static MODEL: OnceLock<MorphModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let spec = GradientFieldSpec::new(GradientMode::Clone, 0, RegionMask::disk(N, N, [0.0, 0.0], 0.5)).unwrap();
        train_morph(
            &identity(),
            &support::smooth_a(N),
            &support::textured(N),
            &spec,
            &morph_config(1500, TimeSampling::Uniform),
        )
        .unwrap()
    })
}

#[test]
fn clone_frame_is_pinned_outside_region() {
    let model = clone_model();
    let x = grid(N);
    let idx: Vec<usize> = (0..x.nrows())
        .filter(|&p| !model.spec().region.contains([x[[p, 0]], x[[p, 1]]]))
        .collect();
    let outside = x.select(Axis(0), &idx);
    let got = morph_sample(model, outside.view(), 0.0).unwrap();
    let want = support::smooth_a(N).sample(outside.view());
    let score = psnr(&got, &want);
    assert!(score >= 30.0, "{score} dB");
    assert_eq!(morph_sample(model, x.view(), 0.3).unwrap(), morph_sample(model, x.view(), 0.3).unwrap());
}

#[test]
fn training_is_deterministic() {
    let (i0, i1) = support::rgb_pair(16);
    let spec = GradientFieldSpec::new(GradientMode::Average, 1, RegionMask::disk(16, 16, [0.0, 0.0], 0.4)).unwrap();
    let cfg = morph_config(20, TimeSampling::Uniform);
    let a = train_morph(&wobbly(), &i0, &i1, &spec, &cfg).unwrap();
    let b = train_morph(&wobbly(), &i0, &i1, &spec, &cfg).unwrap();
    assert_eq!(a.net().params_flat(), b.net().params_flat());
    assert_eq!(a.diagnostics().unwrap().history, b.diagnostics().unwrap().history);
    let back = MorphModel::from_json(&a.to_json()).unwrap();
    assert_eq!(back.net().params_flat(), a.net().params_flat());
}

#[test]
fn mismatched_inputs_are_rejected() {
    let (rgb, _) = support::rgb_pair(N);
    let gray = support::smooth_a(N);
    let spec = GradientFieldSpec::new(GradientMode::Clone, 0, RegionMask::full(N, N)).unwrap();
    let cfg = morph_config(5, TimeSampling::Uniform);
    assert!(train_morph(&identity(), &rgb, &gray, &spec, &cfg).is_err());
    let small = GradientFieldSpec::new(GradientMode::Clone, 0, RegionMask::full(8, 8)).unwrap();
    assert!(train_morph(&identity(), &gray, &gray, &small, &cfg).is_err());
    assert!(GradientFieldSpec::new(GradientMode::Clone, 2, RegionMask::full(N, N)).is_err());
}

/// Largest colour step between 4-neighbours whose membership differs,
/// against the median step between neighbours on the same side.
fn jumps(frame: &Array2<f64>, inside: &[bool], n: usize) -> (f64, f64) {
    let mut across = 0.0f64;
    let mut same = Vec::new();
    for y in 0..n {
        for x in 0..n {
            let p = y * n + x;
            for q in [(x + 1 < n).then(|| p + 1), (y + 1 < n).then(|| p + n)].into_iter().flatten() {
                let step = frame.row(p).iter().zip(frame.row(q)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if inside[p] != inside[q] {
                    across = across.max(step);
                } else {
                    same.push(step);
                }
            }
        }
    }
    same.sort_by(f64::total_cmp);
    (across, same[same.len() / 2])
}

#[test]
fn gradient_blends_are_seamless() {
    let warp = identity();
    let (i0, i1) = (support::smooth_a(N), support::smooth_b(N));
    let region = RegionMask::disk(N, N, [0.0, 0.0], 0.5);
    let n = 48;
    let x = grid(n);
    let inside: Vec<bool> = x.rows().into_iter().map(|r| region.contains([r[0], r[1]])).collect();
    for mode in [GradientMode::Clone, GradientMode::Average, GradientMode::Mix] {
        let spec = GradientFieldSpec::new(mode, 0, region.clone()).unwrap();
        let model = train_morph(&warp, &i0, &i1, &spec, &morph_config(1500, TimeSampling::Fixed(0.5))).unwrap();
        let frame = morph_sample(&model, x.view(), 0.5).unwrap();
        let (across, median) = jumps(&frame, &inside, n);
        assert!(across <= 3.0 * median, "{mode}: {across} across vs median {median}");
    }
}

#[test]
fn transfer_with_empty_region_returns_base() {
    let warp = wobbly();
    let (i0, i1) = support::rgb_pair(N);
    let model = feature_transfer(&warp, &i0, &i1, &RegionMask::empty(N, N), 1, &morph_config(1500, TimeSampling::Uniform)).unwrap();
    let x = grid(N);
    let got = morph_sample(&model, x.view(), 1.0).unwrap();
    let want = warped_image_sample(&warp, &i1, 1, x.view(), 1.0).unwrap();
    let score = psnr(&got, &want);
    assert!(score >= 35.0, "{score} dB");
    assert_eq!(model.config().time, TimeSampling::Fixed(1.0));
}

#[test]
fn transfer_of_whole_domain_between_equal_images_is_identity() {
    let img = support::smooth_b(N);
    let model = feature_transfer(&identity(), &img, &img, &RegionMask::full(N, N), 0, &morph_config(1500, TimeSampling::Uniform)).unwrap();
    let x = grid(N);
    let score = psnr(&morph_sample(&model, x.view(), 1.0).unwrap(), &img.sample(x.view()));
    assert!(score >= 30.0, "{score} dB");
}
