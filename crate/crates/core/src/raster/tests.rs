use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::math::sigmoid;
use crate::scenes::random_unambiguous_scene;

fn front_camera(w: usize, h: usize) -> Camera {
    Camera::look_at(Vec3::new(0.0, 0.0, -3.0), Vec3::zeros(), -Vec3::y(), 50.0, w, h).unwrap()
}

fn colored(center: Vec3, scale: f64, opacity: f64, rgb: Vec3) -> Surfel {
    let mut s = Surfel::flat(center, [scale, scale], opacity, 0);
    s.sh[0] = (rgb - Vec3::repeat(0.5)) / crate::geometry::sh::SH_Y00;
    s
}

#[test]
fn single_surfel_center_pixel() {
    let cam = front_camera(33, 33);
    let s = colored(Vec3::zeros(), 0.5, 0.8, Vec3::new(0.2, 0.6, 0.9));
    let out = render_bruteforce(&[s], &cam, 0);
    // pixel 16 has center 16.5 = cx: ray hits the splat center exactly
    let p = out.color.get(16, 16);
    assert!((out.alpha.get(16, 16) - 0.8).abs() < 1e-12);
    assert!((p - Vec3::new(0.2, 0.6, 0.9) * 0.8).norm() < 1e-12);
    assert!((out.depth.get(16, 16) - 3.0).abs() < 1e-12);
}

#[test]
fn gaussian_falloff_off_center() {
    let cam = front_camera(33, 33);
    let s = colored(Vec3::zeros(), 0.5, 0.8, Vec3::repeat(1.0));
    let out = render_bruteforce(&[s], &cam, 0);
    // the ray through pixel (20, 16) meets the z = 0 plane at x = 4 * 3 / fx
    let x = 4.0 * 3.0 / cam.fx;
    let u = x / 0.5;
    let expected = 0.8 * (-0.5 * u * u).exp();
    assert!((out.alpha.get(20, 16) - expected).abs() < 1e-12);
}

#[test]
fn two_layers_composite_front_to_back() {
    let cam = front_camera(17, 17);
    let front = colored(Vec3::new(0.0, 0.0, -0.5), 2.0, 0.6, Vec3::new(1.0, 0.0, 0.0));
    let back = colored(Vec3::zeros(), 2.0, 0.9, Vec3::new(0.0, 0.0, 1.0));
    // submission order must not matter
    let out = render_bruteforce(&[back, front], &cam, 0);
    let c = out.color.get(8, 8);
    let (a1, a2) = (0.6 * (-0.5f64 * 0.0).exp(), 0.9);
    assert!((c.x - a1).abs() < 1e-4);
    assert!((c.z - a2 * (1.0 - a1)).abs() < 1e-4);
    // transmittance 0.4 < 0.5 at the second layer: depth stays on the first
    assert!((out.depth.get(8, 8) - 2.5).abs() < 1e-3);
}

#[test]
fn low_alpha_gives_zero_depth() {
    let cam = front_camera(17, 17);
    let s = colored(Vec3::zeros(), 1.0, 0.3, Vec3::repeat(0.5));
    let out = render_bruteforce(&[s], &cam, 0);
    assert_eq!(*out.depth.get(8, 8), 0.0);
    assert_eq!(*out.normal.get(8, 8), Vec3::zeros());
}

#[test]
fn early_termination_keeps_the_crossing_record() {
    let cam = front_camera(9, 9);
    let surfels: Vec<Surfel> = (0..12)
        .map(|k| colored(Vec3::new(0.0, 0.0, k as f64 * 0.1), 5.0, 0.99, Vec3::repeat(0.5)))
        .collect();
    let settings = RenderSettings { sh_degree: 0, keep_records: true, ..Default::default() };
    let out = render_bruteforce_with(&surfels, &cam, &settings);
    let rec = out.records.unwrap();
    let px = rec.pixel(4 * 9 + 4);
    // T: 1, 1e-2 (with small falloff), then < 1e-4 after the second record
    let last = px.last().unwrap();
    assert!(last.transmittance * (1.0 - last.alpha) < 1e-4);
    for e in &px[..px.len() - 1] {
        assert!(e.transmittance * (1.0 - e.alpha) >= 1e-4);
    }
    assert!(px.len() < 12);
}

#[test]
fn surfels_behind_camera_are_ignored() {
    let cam = front_camera(16, 16);
    let s = colored(Vec3::new(0.0, 0.0, -4.0), 1.0, 0.9, Vec3::repeat(1.0));
    let out = render_tiled(&[s.clone()], &cam, 0, 8);
    assert!(out.alpha.data.iter().all(|a| *a == 0.0));
    let out = render_bruteforce(&[s], &cam, 0);
    assert!(out.alpha.data.iter().all(|a| *a == 0.0));
}

#[test]
fn edge_on_surfel_is_invisible() {
    let cam = front_camera(16, 16);
    let s = Surfel::from_frame(Vec3::zeros(), Vec3::x(), Vec3::z(), [0.5, 0.5], 0.9, vec![Vec3::zeros()]);
    let out = render_bruteforce(&[s], &cam, 0);
    assert!(out.alpha.data.iter().all(|a| *a < 1e-3));
}

#[test]
fn tiled_matches_bruteforce_on_unambiguous_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let (surfels, cam) = random_unambiguous_scene(&mut rng, 40, 32, 32, 2);
        let a = render_bruteforce(&surfels, &cam, 2);
        for ts in [8, 16, 13] {
            let b = render_tiled(&surfels, &cam, 2, ts);
            for (x, y) in a.color.data.iter().zip(&b.color.data) {
                assert!((x - y).abs().max() <= 1e-12);
            }
            assert_eq!(a.depth.data, b.depth.data);
        }
    }
}

#[test]
fn records_reproduce_the_blend() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (surfels, cam) = random_unambiguous_scene(&mut rng, 30, 24, 20, 1);
    let settings = RenderSettings { sh_degree: 1, keep_records: true, tile_size: 8, ..Default::default() };
    let out = render_tiled_with(&surfels, &cam, &settings);
    let rec = out.records.as_ref().unwrap();
    let splats = out.splats.as_ref().unwrap();
    assert_eq!(rec.offsets.len(), 24 * 20 + 1);
    for p in 0..24 * 20 {
        let mut c = Vec3::zeros();
        for e in rec.pixel(p) {
            c += splats[e.surfel as usize].color * (e.alpha * e.transmittance);
            assert!((e.alpha - sigmoid(surfels[e.surfel as usize].opacity_logit) * e.gaussian).abs() < 1e-12);
        }
        assert!((c - out.color.data[p]).norm() < 1e-12);
    }
}

#[test]
fn f32_kernel_close_to_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (surfels, cam) = random_unambiguous_scene(&mut rng, 40, 32, 32, 3);
    let a = render_tiled(&surfels, &cam, 3, 16);
    let settings = RenderSettings { sh_degree: 3, precision: Precision::F32, ..Default::default() };
    let b = render_tiled_with(&surfels, &cam, &settings);
    let worst = a.color.data.iter().zip(&b.color.data).map(|(x, y)| (x - y).abs().max()).fold(0.0, f64::max);
    assert!(worst <= 5e-4, "{worst}");
}

#[test]
fn blended_normals_of_facing_surfel() {
    let cam = front_camera(16, 16);
    let s = colored(Vec3::zeros(), 1.0, 0.95, Vec3::repeat(0.5));
    let settings = RenderSettings { sh_degree: 0, keep_records: true, ..Default::default() };
    let out = render_bruteforce_with(&[s.clone()], &cam, &settings);
    let n = blended_surfel_normals(&out, &[s], &cam).unwrap();
    assert!((n.get(8, 8) - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
}
