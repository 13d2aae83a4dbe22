use std::fs;
use std::path::Path;

use surfel_avatar::geometry::Camera;
use surfel_avatar::losses::psnr;
use surfel_avatar::raster::{render_tiled_with, RenderSettings};
use surfel_avatar::skinning::{pose_to_joint_transforms, skin_surfels, PoseParams};
use surfel_avatar::synthetic::{generate_rig, rig_train_config, RigConfig};
use surfel_avatar::train::trainer::initial_surfels;
use surfel_avatar::train::{
    evaluate, load_dataset, load_or_build_weight_field, render_pose, train_on, Checkpoint, TrainConfig,
};
use surfel_avatar::Error;

fn small_rig(dir: &Path) -> RigConfig {
    let cfg = RigConfig { views: 3, frames: 2, width: 32, height: 32, ..RigConfig::default() };
    generate_rig(dir, &cfg).unwrap();
    cfg
}

fn small_config(dir: &Path, iterations: usize) -> TrainConfig {
    let mut c = rig_train_config(dir, &dir.join("run"));
    c.iterations = iterations;
    c.weight_field.resolution = [16; 3];
    c
}

#[test]
fn full_rig_loads_240_samples_and_reuses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    generate_rig(dir.path(), &RigConfig::default()).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    assert_eq!(ds.samples.len(), 240);
    assert_eq!(ds.cameras.len(), 8);
    assert_eq!(ds.poses.len(), 30);
    assert!(ds.samples.iter().all(|s| s.normals.is_some()));

    let field_cfg = small_config(dir.path(), 0).weight_field.field_config();
    let (first, hit) = load_or_build_weight_field(dir.path(), &ds.template, &field_cfg).unwrap();
    assert!(!hit);
    let (second, hit) = load_or_build_weight_field(dir.path(), &ds.template, &field_cfg).unwrap();
    assert!(hit);
    assert_eq!(first.to_bytes(), second.to_bytes());
}

#[test]
fn missing_mask_is_named() {
    let dir = tempfile::tempdir().unwrap();
    small_rig(dir.path());
    let masks = dir.path().join("masks");
    fs::remove_file(masks.join("01").join("0001.png")).unwrap();
    fs::remove_file(masks.join("02").join("0000.png")).unwrap();
    match load_dataset(dir.path()) {
        Err(Error::Load { path, .. }) => assert_eq!(path, masks.join("01").join("0001.png")),
        other => panic!("expected a load error, got {:?}", other.map(|d| d.samples.len())),
    }
}

#[test]
fn zero_iterations_returns_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    small_rig(dir.path());
    let cfg = small_config(dir.path(), 0);
    let ds = load_dataset(dir.path()).unwrap();
    let (field, _) = load_or_build_weight_field(dir.path(), &ds.template, &cfg.weight_field.field_config()).unwrap();
    let out = train_on(&cfg, &ds, &field, |_| {}).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.checkpoint.iteration, 0);
    assert_eq!(out.checkpoint.surfels, initial_surfels(&ds.template, cfg.sh_degree).unwrap());
}

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    small_rig(dir.path());
    let cfg = small_config(dir.path(), 15);
    let ds = load_dataset(dir.path()).unwrap();
    let (field, _) = load_or_build_weight_field(dir.path(), &ds.template, &cfg.weight_field.field_config()).unwrap();
    let out = train_on(&cfg, &ds, &field, |_| {}).unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    out.checkpoint.save(&a).unwrap();
    let loaded = Checkpoint::load(&a).unwrap();
    assert_eq!(loaded.iteration, 15);
    assert_eq!(loaded.surfels, out.checkpoint.surfels);
    loaded.save(&b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn rendering_matches_the_training_path_and_handles_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    small_rig(dir.path());
    let cfg = small_config(dir.path(), 40);
    let ds = load_dataset(dir.path()).unwrap();
    let (field, _) = load_or_build_weight_field(dir.path(), &ds.template, &cfg.weight_field.field_config()).unwrap();
    let ckpt = train_on(&cfg, &ds, &field, |_| {}).unwrap().checkpoint;
    let settings = RenderSettings { sh_degree: cfg.sh_degree, ..RenderSettings::default() };

    let pose = ds.pose("0000").unwrap().clone();
    let camera = ds.camera("00").unwrap().clone();
    let seq = render_pose(&ckpt, std::slice::from_ref(&pose), std::slice::from_ref(&camera), &settings).unwrap();
    assert_eq!(seq.image_count(), 1);

    // the trainer's path: weights re-queried from the field at the canonical centers
    let transforms = pose_to_joint_transforms(&ds.template, &pose).unwrap();
    let (posed, _) = skin_surfels(&ckpt.surfels, &field, &transforms);
    let direct = render_tiled_with(&posed, &camera, &settings);
    assert!(psnr(&seq.frames[0][0].color, &direct.color).unwrap() >= 40.0);

    let empty = render_pose(&ckpt, &[], &[camera.clone()], &settings).unwrap();
    assert_eq!(empty.image_count(), 0);
    empty.write(&dir.path().join("empty")).unwrap();

    let wrong = PoseParams::identity(3);
    assert!(matches!(render_pose(&ckpt, &[wrong], &[camera], &settings), Err(Error::Input(_))));
    let no_cameras: [Camera; 0] = [];
    assert_eq!(render_pose(&ckpt, &[pose], &no_cameras, &settings).unwrap().image_count(), 0);
}

#[test]
fn evaluation_covers_each_held_out_view() {
    let dir = tempfile::tempdir().unwrap();
    small_rig(dir.path());
    let cfg = small_config(dir.path(), 20);
    let ds = load_dataset(dir.path()).unwrap();
    let (field, _) = load_or_build_weight_field(dir.path(), &ds.template, &cfg.weight_field.field_config()).unwrap();
    let ckpt = train_on(&cfg, &ds, &field, |_| {}).unwrap().checkpoint;
    let settings = RenderSettings { sh_degree: cfg.sh_degree, ..RenderSettings::default() };
    let report = evaluate(&ckpt, &ds, "test", &settings).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].view, "02");
    assert_eq!(report.rows[0].frames, 2);
    assert!(report.mean_psnr.is_finite() && report.mean_psnr > 0.0);
    assert!(evaluate(&ckpt, &ds, "validation", &settings).is_err());
}
