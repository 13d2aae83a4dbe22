//! Evaluates every loss term and the image metrics on a rendered scene
//! against a darkened copy of itself.
//!
//! cargo run --release --example losses_and_metrics

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surfel_avatar::geometry::Vec3;
use surfel_avatar::losses::{
    masked_psnr, masked_ssim, psnr, ssim, total_loss, LossTargets, LossWeights, NoPerceptual,
};
use surfel_avatar::raster::{blended_surfel_normals, render_tiled_with, RenderSettings};
use surfel_avatar::scenes::random_unambiguous_scene;

fn main() -> surfel_avatar::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (surfels, camera) = random_unambiguous_scene(&mut rng, 32, 64, 64, 0);
    let settings = RenderSettings { sh_degree: 0, keep_records: true, ..RenderSettings::default() };
    let out = render_tiled_with(&surfels, &camera, &settings);
    let normals = blended_surfel_normals(&out, &surfels, &camera).expect("records kept");
    let mask = out.alpha.map(|a| if *a > 0.5 { 1.0 } else { 0.0 });
    let target = out.color.map(|c| c * 0.9 + Vec3::repeat(0.02));

    let targets = LossTargets { image: &target, mask: &mask, normals: Some(&normals) };
    let loss = total_loss(&out, &targets, &surfels, &LossWeights::default(), &NoPerceptual)?;
    println!("{loss:#?}");
    println!("PSNR {:.3} dB, SSIM {:.4}", psnr(&out.color, &target)?, ssim(&out.color, &target));
    if mask.data.iter().any(|m| *m > 0.5) {
        println!(
            "inside the mask: PSNR {:.3} dB, SSIM {:.4}",
            masked_psnr(&out.color, &target, &mask)?,
            masked_ssim(&out.color, &target, &mask)?
        );
    }
    Ok(())
}
