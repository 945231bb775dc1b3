mod common;

use neurowarp_core::image::ImageGrid;
use neurowarp_core::landmarks::LandmarkPairs;
use neurowarp_pipeline::render::{END_COLOR, START_COLOR};
use neurowarp_pipeline::stages::{cmd_paths, cmd_warp, PathsDocument};
use neurowarp_pipeline::Quiet;

fn has_color_near(img: &ImageGrid, at: [f64; 2], color: [f64; 3], radius: i64) -> bool {
    let (cx, cy) = (at[0].round() as i64, at[1].round() as i64);
    (-radius..=radius).any(|dy| {
        (-radius..=radius).any(|dx| {
            let (x, y) = (cx + dx, cy + dy);
            x >= 0
                && y >= 0
                && (x as usize) < img.width()
                && (y as usize) < img.height()
                && (0..3).all(|c| (img.get(x as usize, y as usize, c) - color[c]).abs() < 0.01)
        })
    })
}

#[test]
fn fixed_points_draw_dots() {
    let dir = tempfile::tempdir().unwrap();
    let p = common::project("fixed_points", dir.path(), &[]);
    cmd_warp(&p, false, &mut Quiet).unwrap();
    let run = cmd_paths(&p, false, &mut Quiet).unwrap();
    assert_eq!(run.report.landmarks, 10);
    assert!(run.report.max_extent_px <= 2.0, "path extent {} px", run.report.max_extent_px);
}

#[test]
fn translation_paths_end_on_the_landmarks() {
    let dir = tempfile::tempdir().unwrap();
    let p = common::project("translation", dir.path(), &[]);
    cmd_warp(&p, false, &mut Quiet).unwrap();
    let run = cmd_paths(&p, false, &mut Quiet).unwrap();
    let doc: PathsDocument = serde_json::from_slice(&common::read(run.dir.join("paths.json"))).unwrap();
    let pairs = LandmarkPairs::load(&p.config.inputs.landmarks).unwrap();
    let overlay = ImageGrid::load(run.dir.join("overlay.png")).unwrap();
    let frame = overlay.frame();
    assert_eq!(doc.paths.len(), pairs.len());
    assert_eq!(doc.times.len(), p.config.render.path_samples);
    for (path, pair) in doc.paths.iter().zip(pairs.pairs()) {
        let first = frame.to_pixel(path.points[0]);
        let last = frame.to_pixel(*path.points.last().unwrap());
        let (pp, qp) = (frame.to_pixel(pair.p), frame.to_pixel(pair.q));
        assert!((first[0] - pp[0]).hypot(first[1] - pp[1]) <= 2.0, "start {first:?} vs {pp:?}");
        assert!((last[0] - qp[0]).hypot(last[1] - qp[1]) <= 2.0, "end {last:?} vs {qp:?}");
        assert!(has_color_near(&overlay, pp, START_COLOR, 2), "no start marker near {pp:?}");
        assert!(has_color_near(&overlay, qp, END_COLOR, 2), "no end marker near {qp:?}");
    }
}
