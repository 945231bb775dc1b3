mod common;

use neurowarp_core::blend::{warped_jacobians, MorphModel};
use neurowarp_core::metrics::psnr;
use neurowarp_core::region::RegionMask;
use neurowarp_core::warp::{region_contains_batch, spacetime_rows, warped_image_sample};
use neurowarp_pipeline::render::frame_coords;
use neurowarp_pipeline::stages::{cmd_fit, cmd_transfer, cmd_warp, load_images, load_warp};
use neurowarp_pipeline::Quiet;
use ndarray::Axis;

/// Eyes of face A moved onto face B: the inside follows the aligned source
/// gradients and the rest stays face B.
#[test]
fn eyes_transfer_keeps_source_gradients_and_base_elsewhere() {
    let dir = tempfile::tempdir().unwrap();
    let p = common::project("face", dir.path(), &[]);
    cmd_fit(&p, false, &mut Quiet).unwrap();
    cmd_warp(&p, false, &mut Quiet).unwrap();
    let run = cmd_transfer(&p, false, &mut Quiet).unwrap();
    let model = MorphModel::load(run.dir.join("morph.json")).unwrap();
    let (i0, i1) = load_images(&p).unwrap();
    let warp = load_warp(&p).unwrap();
    let region = RegionMask::load(p.config.inputs.region.as_ref().unwrap()).unwrap();

    let coords = frame_coords(64, 64);
    let inside = region_contains_batch(&warp, &region, coords.view(), 1.0).unwrap();
    let idx_in: Vec<usize> = (0..inside.len()).filter(|&i| inside[i]).collect();
    let idx_out: Vec<usize> = (0..inside.len()).filter(|&i| !inside[i]).collect();
    assert!(idx_in.len() > 100, "{} pixels inside", idx_in.len());

    let xin = coords.select(Axis(0), &idx_in);
    let got = model.color_jacobians(spacetime_rows(xin.view(), 1.0).view());
    let (_, want) = warped_jacobians(&warp, &i0, 0, xin.view(), &vec![1.0; idx_in.len()]);
    let dot: f64 = got.iter().zip(&want).map(|(a, b)| a * b).sum();
    let norm = |a: &ndarray::Array3<f64>| a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cosine = dot / (norm(&got) * norm(&want));

    let xout = coords.select(Axis(0), &idx_out);
    let composite = neurowarp_core::blend::morph_sample(&model, xout.view(), 1.0).unwrap();
    let base = warped_image_sample(&warp, &i1, 1, xout.view(), 1.0).unwrap();
    let outside = psnr(composite.view(), base.view());
    println!("inside gradient cosine {cosine:.4}, outside psnr {outside:.2} dB");
    assert!(cosine >= 0.9, "cosine {cosine}");
    assert!(outside >= 30.0, "outside {outside} dB");
}
