//! Writes the bundled inputs and project files under `fixtures/`.
//!
//! ```text
//! cargo run -p neurowarp-pipeline --example make_fixtures [-- <dir>]
//! ```

use std::path::{Path, PathBuf};

use neurowarp_core::blend::TimeSampling;
use neurowarp_core::fixtures::{self, FaceShape, DISK_CENTER, TRANSLATION};
use neurowarp_core::image::ImageGrid;
use neurowarp_core::landmarks::LandmarkPairs;
use neurowarp_core::region::RegionMask;
use neurowarp_core::warp::WarpConfig;
use neurowarp_pipeline::config::{BlendSettings, Inputs, ProjectConfig, RenderSpec, TransferSettings};

const SIZE: usize = 64;

fn save_png(root: &Path, name: &str, img: &ImageGrid) {
    let path = root.join("images").join(name);
    img.save_png(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
}

fn save_landmarks(root: &Path, name: &str, pairs: &LandmarkPairs) {
    pairs.save(root.join("landmarks").join(name)).unwrap();
}

fn project(image0: &str, image1: &str, landmarks: &str, region: Option<&str>, warp: WarpConfig) -> ProjectConfig {
    let rel = |dir: &str, f: &str| PathBuf::from(format!("../{dir}/{f}"));
    ProjectConfig {
        inputs: Inputs {
            image0: rel("images", image0),
            image1: rel("images", image1),
            landmarks: rel("landmarks", landmarks),
            region: region.map(|r| rel("masks", r)),
        },
        output: None,
        blend: BlendSettings::default(),
        transfer: TransferSettings::default(),
        fit: fixtures::fit_config(),
        warp,
        morph: fixtures::morph_config(1500, TimeSampling::Uniform),
        render: RenderSpec {
            width: 128,
            height: 128,
            ..RenderSpec::default()
        },
    }
}

fn write_project(root: &Path, name: &str, header: &str, cfg: &ProjectConfig) {
    let text = format!("# {header}\n\n{}", cfg.to_toml());
    ProjectConfig::from_toml(&text).expect("generated project parses");
    std::fs::write(root.join("projects").join(name), text).unwrap();
}

fn main() {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    for dir in ["images", "landmarks", "masks", "projects"] {
        std::fs::create_dir_all(root.join(dir)).unwrap();
    }

    save_png(&root, "face_a.png", &FaceShape::a().render(SIZE, SIZE));
    save_png(&root, "face_b.png", &FaceShape::b().render(SIZE, SIZE));
    save_png(&root, "constant.png", &fixtures::constant_image(SIZE, SIZE));
    save_png(&root, "ramp.png", &fixtures::ramp_image(SIZE, SIZE));
    let moved = [DISK_CENTER[0] + TRANSLATION[0], DISK_CENTER[1] + TRANSLATION[1]];
    save_png(&root, "disk_a.png", &fixtures::disk_image(SIZE, SIZE, DISK_CENTER));
    save_png(&root, "disk_b.png", &fixtures::disk_image(SIZE, SIZE, moved));

    save_landmarks(&root, "face.json", &fixtures::face_pairs());
    save_landmarks(&root, "translation.json", &fixtures::translation());
    save_landmarks(&root, "fixed_points.json", &fixtures::fixed_points());
    save_landmarks(&root, "empty.json", &LandmarkPairs::default());

    let RegionMask::Polygon(eyes) = fixtures::eyes_region() else {
        unreachable!("eyes region is a polygon")
    };
    let polygon = serde_json::json!({ "polygon": eyes });
    std::fs::write(root.join("masks/eyes.json"), format!("{polygon:#}\n")).unwrap();
    let disk = fixtures::disk_mask(SIZE, SIZE);
    let values: Vec<f64> = disk.rasterize(SIZE, SIZE).iter().map(|&b| f64::from(u8::from(b))).collect();
    ImageGrid::new(SIZE, SIZE, 1, values)
        .unwrap()
        .save_png(root.join("masks/disk.png"))
        .unwrap();

    let face = project("face_a.png", "face_b.png", "face.json", Some("eyes.json"), fixtures::face_config());
    write_project(&root, "face.toml", "Synthetic face pair with 68 landmarks and an eyes region.", &face);

    let mut quick = face.clone();
    quick.warp.steps = 300;
    quick.fit.steps = 100;
    quick.morph.steps = 100;
    quick.render = RenderSpec {
        width: 32,
        height: 32,
        frames: 5,
        path_samples: 9,
        ..RenderSpec::default()
    };
    write_project(&root, "face_quick.toml", "Face pair with small budgets, for smoke tests.", &quick);

    let translation = project(
        "disk_a.png",
        "disk_b.png",
        "translation.json",
        Some("disk.png"),
        fixtures::translation_config(),
    );
    write_project(&root, "translation.toml", "A disk moved by (0.2, 0) with ten landmark pairs.", &translation);

    let fixed = project("face_a.png", "face_a.png", "fixed_points.json", None, fixtures::fixed_points_config());
    write_project(&root, "fixed_points.toml", "Ten landmarks that stay in place.", &fixed);

    for (name, image) in [("constant", "constant.png"), ("ramp", "ramp.png")] {
        let cfg = project(image, image, "fixed_points.json", None, fixtures::fixed_points_config());
        write_project(&root, &format!("{name}.toml"), &format!("Fit corpus: {name} raster."), &cfg);
    }
    println!("fixtures written to {}", root.display());
}
