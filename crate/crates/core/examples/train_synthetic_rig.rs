//! Generates the two-bone cylinder rig, trains on it and scores the result.
//!
//! cargo run --release --example train_synthetic_rig -- [out_dir] [iterations]

use std::path::PathBuf;
use std::time::Instant;

use surfel_avatar::io::read_gray_png;
use surfel_avatar::raster::RenderSettings;
use surfel_avatar::synthetic::{self, RigConfig};
use surfel_avatar::train::dataset::frame_path;
use surfel_avatar::train::{evaluate, load_dataset, load_or_build_weight_field, render_pose, train_on};

fn main() -> surfel_avatar::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/rig".into()));
    let iterations: usize = args.next().map(|s| s.parse().expect("iterations")).unwrap_or(3000);

    let t0 = Instant::now();
    let rig = RigConfig::default();
    let summary = synthetic::generate_rig(&out, &rig)?;
    println!("generated {summary:?} in {:.1}s", t0.elapsed().as_secs_f64());

    let mut config = synthetic::rig_train_config(&out, &out.join("run"));
    config.iterations = iterations;
    let dataset = load_dataset(&out)?;
    let (field, _) = load_or_build_weight_field(&out, &dataset.template, &config.weight_field.field_config())?;
    let t1 = Instant::now();
    let outcome = train_on(&config, &dataset, &field, |row| {
        if row.iteration % 250 == 0 || row.densify.is_some() {
            println!(
                "it {:5}  loss {:.4}  psnr {:6.2}  surfels {:5}  {:.0}s{}",
                row.iteration,
                row.loss.total,
                row.psnr,
                row.surfels,
                t1.elapsed().as_secs_f64(),
                row.densify.as_ref().map(|e| format!("  densify {e:?}")).unwrap_or_default()
            );
        }
    })?;
    println!("trained {} iterations in {:.1}s", iterations, t1.elapsed().as_secs_f64());

    let settings = RenderSettings { sh_degree: config.sh_degree, ..RenderSettings::default() };
    let report = evaluate(&outcome.checkpoint, &dataset, "test", &settings)?;
    print!("held-out views\n{}", report.to_table());
    let train_report = evaluate(&outcome.checkpoint, &dataset, "train", &settings)?;
    println!("training views mean PSNR {:.3}", train_report.mean_psnr);

    let novel = out.join("novel");
    let poses: Vec<_> = surfel_avatar::train::dataset::read_json(&novel.join("poses.json"))?;
    let cameras: Vec<_> = surfel_avatar::train::dataset::read_json(&novel.join("cameras.json"))?;
    let seq = render_pose(&outcome.checkpoint, &poses, &cameras, &settings)?;
    let mut ious = Vec::new();
    for (v, out) in seq.frames[0].iter().enumerate() {
        let mask = read_gray_png(&frame_path(&novel, "masks", &synthetic::view_name(v), synthetic::NOVEL_POSE))?;
        ious.push(synthetic::silhouette_iou(&out.alpha, &mask));
    }
    let min_iou = ious.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("novel 90 degree bend IoU per view {ious:.3?} (min {min_iou:.3})");
    println!("render throughput {:.1} images/s", seq.fps());
    Ok(())
}
