//! Tiled versus brute-force rasterization throughput.
//!
//! cargo run --release --example benchmark_rasterizer -- [surfels] [size]

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surfel_avatar::geometry::{Camera, Surfel, Vec3};
use surfel_avatar::raster::{render_bruteforce, render_tiled, Precision, RenderSettings, render_tiled_with};

fn main() -> surfel_avatar::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse().expect("surfels")).unwrap_or(10_000);
    let size: usize = args.next().map(|s| s.parse().expect("size")).unwrap_or(256);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let camera = Camera::look_at(Vec3::new(0.0, 0.0, -4.0), Vec3::zeros(), -Vec3::y(), 45.0, size, size)?;
    let surfels: Vec<Surfel> = (0..n)
        .map(|_| {
            let c = Vec3::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(-1.0..1.0));
            let mut s = Surfel::flat(c, [rng.random_range(0.005..0.03), rng.random_range(0.005..0.03)], 0.7, 0);
            s.sh[0] = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            s
        })
        .collect();

    let t = Instant::now();
    let tiled = render_tiled(&surfels, &camera, 0, 16);
    let t_tiled = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let f32_out = render_tiled_with(&surfels, &camera, &RenderSettings { sh_degree: 0, precision: Precision::F32, ..Default::default() });
    let t_f32 = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let brute = render_bruteforce(&surfels, &camera, 0);
    let t_brute = t.elapsed().as_secs_f64();

    let px = (size * size) as f64;
    println!("{n} surfels at {size}x{size}");
    println!("  brute force  {:8.3}s  {:10.0} pixels/s", t_brute, px / t_brute);
    println!("  tiled f64    {:8.3}s  {:10.0} pixels/s  ({:.1}x)", t_tiled, px / t_tiled, t_brute / t_tiled);
    println!("  tiled f32    {:8.3}s  {:10.0} pixels/s", t_f32, px / t_f32);
    let diff = tiled.color.data.iter().zip(&brute.color.data).map(|(a, b)| (a - b).abs().max()).fold(0.0, f64::max);
    let diff32 = tiled.color.data.iter().zip(&f32_out.color.data).map(|(a, b)| (a - b).abs().max()).fold(0.0, f64::max);
    println!("  max |tiled - brute| {diff:.2e}, max |f64 - f32| {diff32:.2e}");
    Ok(())
}
