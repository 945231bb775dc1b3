mod common;

use neurowarp_pipeline::config::BlendMode;
use neurowarp_pipeline::{Project, ProjectConfig};

fn face_text() -> String {
    std::fs::read_to_string(common::fixtures().join("projects/face.toml")).unwrap()
}

#[test]
fn bundled_projects_load_and_resolve_paths() {
    for name in ["face", "face_quick", "translation", "fixed_points", "constant", "ramp"] {
        let dir = tempfile::tempdir().unwrap();
        let p = common::project(name, dir.path(), &[]);
        assert!(p.config.inputs.image0.is_absolute() && p.config.inputs.image0.is_file(), "{name}");
        assert_eq!(p.out, dir.path());
    }
}

#[test]
fn toml_round_trip() {
    let cfg = ProjectConfig::from_toml(&face_text()).unwrap();
    assert_eq!(ProjectConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn overrides_take_precedence_over_the_file() {
    let sets = [
        "warp.steps=17".to_string(),
        "blend.mode=clone".to_string(),
        "render.width = 48".to_string(),
        "warp.weights.thin_plate=0.5".to_string(),
    ];
    let cfg = ProjectConfig::from_toml_with(&face_text(), &sets).unwrap();
    assert_eq!(cfg.warp.steps, 17);
    assert_eq!(cfg.blend.mode, BlendMode::Clone);
    assert_eq!(cfg.render.width, 48);
    assert_eq!(cfg.warp.weights.thin_plate, 0.5);
    assert_eq!(cfg.warp.weights.data, 1.0);
}

#[test]
fn invalid_configs_are_rejected() {
    let text = face_text();
    let bad = |sets: &[&str]| {
        let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        let cfg = ProjectConfig::from_toml_with(&text, &sets);
        cfg.and_then(|c| c.validate().map(|_| c)).unwrap_err()
    };
    assert!(bad(&["render.frames=1"]).to_string().contains("frames"));
    assert!(bad(&["render.width=8"]).to_string().contains("resolution"));
    assert!(bad(&["render.t_end=1.5"]).to_string().contains("time range"));
    assert!(bad(&["warp.bogus=1"]).to_string().contains("bogus"));
    assert!(bad(&["blend.mode=sharpen"]).to_string().contains("sharpen"));
    assert!(bad(&["warp.hidden=[]"]).to_string().contains("hidden"));
    assert!(bad(&["nonsense"]).to_string().contains("key=value"));
    for e in [bad(&["render.frames=1"]), bad(&["warp.bogus=1"])] {
        assert_eq!(e.exit_code(), 2);
    }
}

#[test]
fn gradient_modes_need_a_region() {
    let mut cfg = ProjectConfig::from_toml(&face_text()).unwrap();
    cfg.inputs.region = None;
    cfg.blend.mode = BlendMode::Mix;
    assert!(cfg.validate().unwrap_err().to_string().contains("region"));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ProjectConfig::from_toml(&face_text()).unwrap();
    cfg.inputs.image1 = "does/not/exist.png".into();
    let err = Project::new(cfg, &common::fixtures().join("projects")).unwrap_err();
    assert!(err.to_string().contains("exist.png"), "{err}");
    assert_eq!(err.exit_code(), 2);
    let err = Project::load(dir.path().join("absent.toml"), &[]).unwrap_err();
    assert!(err.to_string().contains("absent.toml"));
}
