//! Renders a random surfel scene with both rasterizers and writes the
//! color, alpha and depth-normal images.
//!
//! cargo run --release --example render_scene -- [out_dir] [seed]

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surfel_avatar::io::{write_depth_plane, write_gray_png, write_normal_png, write_rgb_png};
use surfel_avatar::raster::{render_bruteforce, render_tiled};
use surfel_avatar::scenes::random_unambiguous_scene;

fn main() -> surfel_avatar::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/render_scene".into()));
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (surfels, camera) = random_unambiguous_scene(&mut rng, 48, 128, 128, 2);
    println!("{} surfels, camera {}x{}", surfels.len(), camera.width, camera.height);

    let t = Instant::now();
    let brute = render_bruteforce(&surfels, &camera, 2);
    let t_brute = t.elapsed();
    let t = Instant::now();
    let tiled = render_tiled(&surfels, &camera, 2, 16);
    let t_tiled = t.elapsed();

    let max_diff = brute
        .color
        .data
        .iter()
        .zip(&tiled.color.data)
        .map(|(a, b)| (a - b).abs().max())
        .fold(0.0, f64::max);
    println!("brute force {t_brute:?}, tiled {t_tiled:?}, max color difference {max_diff:e}");

    std::fs::create_dir_all(&out)?;
    write_rgb_png(&out.join("color.png"), &tiled.color)?;
    write_gray_png(&out.join("alpha.png"), &tiled.alpha)?;
    write_normal_png(&out.join("normal.png"), &tiled.normal)?;
    write_depth_plane(&out.join("depth.spln"), &tiled.depth)?;
    println!("wrote {}", out.display());
    Ok(())
}
