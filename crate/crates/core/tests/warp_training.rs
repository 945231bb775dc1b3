mod support;

use std::sync::OnceLock;

use ndarray::{arr2, Array2};
use neurowarp_core::fixtures;
use neurowarp_core::image::GridFrame;
use neurowarp_core::region::RegionMask;
use neurowarp_core::warp::{
    landmark_path, region_contains, region_contains_batch, train_warp, uniform_times, warp_point,
    warped_image_sample, WarpModel,
};
use support::dist;

fn translation_model() -> &'static WarpModel {
    static MODEL: OnceLock<WarpModel> = OnceLock::new();
    MODEL.get_or_init(|| train_warp(&fixtures::translation(), &fixtures::translation_config()).unwrap())
}

fn fixed_model() -> &'static WarpModel {
    static MODEL: OnceLock<WarpModel> = OnceLock::new();
    MODEL.get_or_init(|| train_warp(&fixtures::fixed_points(), &fixtures::fixed_points_config()).unwrap())
}

fn assert_contract(model: &WarpModel) {
    let d = model.diagnostics().unwrap();
    assert!(d.identity_residual <= 1e-2, "identity {}", d.identity_residual);
    assert!(d.inverse_residual <= 2e-2, "inverse {}", d.inverse_residual);
    assert!(d.endpoint_error() <= 1e-2, "endpoint {}", d.endpoint_error());
    assert!(d.path_matching_max <= 3e-2, "path {}", d.path_matching_max);
    assert!(!d.history.is_empty());
}

#[test]
fn fixed_points_learn_identity() {
    let model = fixed_model();
    assert_contract(model);
    // mean displacement over the whole space-time domain
    let frame = GridFrame::new(15, 15);
    let mut total = 0.0;
    let mut n = 0;
    for t in uniform_times(9).iter().map(|t| 2.0 * t - 1.0) {
        for x in frame.centers().rows() {
            total += dist(warp_point(model, [x[0], x[1]], t).unwrap(), [x[0], x[1]]);
            n += 1;
        }
    }
    assert!(total / n as f64 <= 1e-2, "mean displacement {}", total / n as f64);
    for pair in fixtures::fixed_points().pairs() {
        for p in landmark_path(model, pair.p, &uniform_times(33)).unwrap() {
            assert!(dist(p, pair.p) <= 1e-2);
        }
    }
}

#[test]
fn translation_meets_contract() {
    let model = translation_model();
    assert_contract(model);
    let moved = warp_point(model, [0.0, 0.0], 1.0).unwrap();
    assert!(dist(moved, [0.2, 0.0]) <= 1e-2, "{moved:?}");
}

#[test]
fn translation_moves_interior_uniformly() {
    let model = translation_model();
    let probes = GridFrame::new(11, 11).centers().mapv(|v| v * 0.5);
    let mut sq = 0.0;
    for x in probes.rows() {
        let y = warp_point(model, [x[0], x[1]], 1.0).unwrap();
        sq += (y[0] - x[0] - 0.2).powi(2) + (y[1] - x[1]).powi(2);
    }
    let spread = (sq / probes.nrows() as f64).sqrt();
    assert!(spread <= 0.02, "displacement spread {spread}");
}

#[test]
fn composition_with_negative_time_is_inverse() {
    let model = translation_model();
    for &t in &[-0.8, -0.3, 0.4, 1.0] {
        for x in [[0.1, 0.2], [-0.5, 0.4], [0.6, -0.6]] {
            let y = warp_point(model, x, t).unwrap();
            let back = warp_point(model, y, -t).unwrap();
            assert!(dist(back, x) <= 2e-2, "t={t} x={x:?} back={back:?}");
        }
    }
    assert!(warp_point(model, [0.0, 0.0], 1.5).is_err());
}

#[test]
fn translated_disk_membership() {
    let model = translation_model();
    let mask = fixtures::disk_mask(64, 64);
    let frame = GridFrame::new(64, 64);
    let coords = frame.centers();
    let got = region_contains_batch(model, &mask, coords.view(), 1.0).unwrap();
    let c = fixtures::DISK_CENTER;
    let want: Vec<bool> = coords
        .rows()
        .into_iter()
        .map(|x| dist([x[0], x[1]], [c[0] + 0.2, c[1]]) <= fixtures::DISK_RADIUS)
        .collect();
    let inter = got.iter().zip(&want).filter(|(a, b)| **a && **b).count();
    let union = got.iter().zip(&want).filter(|(a, b)| **a || **b).count();
    let iou = inter as f64 / union as f64;
    assert!(iou >= 0.95, "IoU {iou}");

    let at0 = region_contains_batch(model, &mask, coords.view(), 0.0).unwrap();
    for (x, inside) in coords.rows().into_iter().zip(at0) {
        assert_eq!(inside, mask.contains([x[0], x[1]]));
    }
    let full = RegionMask::full(64, 64);
    for x in coords.rows() {
        let p = [x[0] * 0.7, x[1] * 0.7];
        assert!(region_contains(model, &full, p, 0.6).unwrap());
    }
}

#[test]
fn landmark_paths_are_continuous_and_hit_endpoints() {
    let model = translation_model();
    for pair in fixtures::translation().pairs() {
        let path = landmark_path(model, pair.p, &uniform_times(65)).unwrap();
        assert!(dist(path[0], pair.p) <= 1e-2);
        assert!(dist(path[64], pair.q) <= 1e-2);
        let segs: Vec<f64> = path.windows(2).map(|w| dist(w[0], w[1])).collect();
        let mean = segs.iter().sum::<f64>() / segs.len() as f64;
        assert!(segs.iter().all(|&s| s <= 3.0 * mean), "jumpy path");
        let coarse = landmark_path(model, pair.p, &uniform_times(9)).unwrap();
        let coarse_max = coarse.windows(2).map(|w| dist(w[0], w[1])).fold(0.0, f64::max);
        let fine_max = segs.iter().cloned().fold(0.0, f64::max);
        assert!(fine_max < coarse_max);
    }
}

#[test]
fn warped_images_at_endpoints() {
    let model = translation_model();
    let (i0, i1) = support::rgb_pair(32);
    let coords = GridFrame::new(16, 16).centers().mapv(|v| v * 0.8);
    let err = |a: &Array2<f64>, b: &Array2<f64>| (a - b).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
    // colors change by at most |∇I|·|ΔT|; these images have |∇I| < 1.5
    let tol = 1.5 * 1e-2;
    let a = warped_image_sample(model, &i0, 0, coords.view(), 0.0).unwrap();
    assert!(err(&a, &i0.sample(coords.view())) <= tol);
    let b = warped_image_sample(model, &i1, 1, coords.view(), 1.0).unwrap();
    assert!(err(&b, &i1.sample(coords.view())) <= tol);
    let pairs = fixtures::translation();
    for pair in pairs.pairs() {
        let q = arr2(&[pair.q]);
        let p = arr2(&[pair.p]);
        let at_q = warped_image_sample(model, &i0, 0, q.view(), 1.0).unwrap();
        assert!(err(&at_q, &i0.sample(p.view())) <= tol);
    }
    assert!(warped_image_sample(model, &i0, 2, coords.view(), 0.5).is_err());
    assert!(warped_image_sample(model, &i0, 0, coords.view(), -0.5).is_err());
}

#[test]
fn training_rerun_is_bit_identical() {
    let cfg = neurowarp_core::warp::WarpConfig {
        steps: 30,
        ..fixtures::translation_config()
    };
    let a = train_warp(&fixtures::translation(), &cfg).unwrap();
    let b = train_warp(&fixtures::translation(), &cfg).unwrap();
    assert_eq!(a.net().params_flat(), b.net().params_flat());
    let (da, db) = (a.diagnostics().unwrap(), b.diagnostics().unwrap());
    assert_eq!(da.history, db.history);
    assert_eq!(da.alignment_error, db.alignment_error);
}
