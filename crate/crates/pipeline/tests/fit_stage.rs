mod common;

use neurowarp_pipeline::stages::{cmd_fit, image_artifact};
use neurowarp_pipeline::Quiet;

/// Bundled rasters meet their fit thresholds under the bundled budget.
#[test]
fn bundled_corpora_reach_their_psnr_thresholds() {
    for (name, threshold) in [("constant", 50.0), ("ramp", 40.0), ("face", 30.0)] {
        let dir = tempfile::tempdir().unwrap();
        let p = common::project(name, dir.path(), &[]);
        let run = cmd_fit(&p, false, &mut Quiet).unwrap();
        for img in &run.report.images {
            assert!(img.psnr.0 >= threshold, "{name}: {} dB < {threshold}", img.psnr);
            assert!(img.ssim > 0.9, "{name}: ssim {}", img.ssim);
        }
    }
}

#[test]
fn rerun_is_skipped_and_forced_rerun_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = common::project("face_quick", dir.path(), &["fit.steps=20"]);
    let first = cmd_fit(&p, false, &mut Quiet).unwrap();
    assert!(!first.skipped);
    let report = common::read(dir.path().join("fit/report.json"));
    let net = common::read(image_artifact(&p, 0));

    let again = cmd_fit(&p, false, &mut Quiet).unwrap();
    assert!(again.skipped);
    assert_eq!(again.report, first.report);

    let forced = cmd_fit(&p, true, &mut Quiet).unwrap();
    assert!(!forced.skipped);
    assert_eq!(common::read(dir.path().join("fit/report.json")), report);
    let net_again = common::read(image_artifact(&p, 0));
    let strip_seconds = |b: &[u8]| {
        let mut v: serde_json::Value = serde_json::from_slice(b).unwrap();
        v["meta"]["seconds"] = 0.into();
        v
    };
    assert_eq!(strip_seconds(&net_again), strip_seconds(&net));
}

#[test]
fn config_change_invalidates_the_stamp() {
    let dir = tempfile::tempdir().unwrap();
    let p = common::project("face_quick", dir.path(), &["fit.steps=5"]);
    cmd_fit(&p, false, &mut Quiet).unwrap();
    let changed = common::project("face_quick", dir.path(), &["fit.steps=6"]);
    let run = cmd_fit(&changed, false, &mut Quiet).unwrap();
    assert!(!run.skipped);
    assert_eq!(run.report.config.steps, 6);
}

#[test]
fn corrupt_image_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.png");
    std::fs::write(&bad, b"not a png").unwrap();
    let p = common::project("face_quick", dir.path(), &[&format!("inputs.image1 = {:?}", bad.display().to_string())]);
    let err = cmd_fit(&p, false, &mut Quiet).unwrap_err();
    assert!(err.to_string().contains("broken.png"), "{err}");
    assert_eq!(err.exit_code(), 2);
}
