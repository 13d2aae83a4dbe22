//! Normals from the depth map by finite differences of backprojected points.

use crate::geometry::image::{ColorImage, ScalarImage};
use crate::geometry::{Camera, ImagePlane, Vec3};

/// Flip `n` so it faces against the viewing ray `ray` (camera space).
pub fn orient_towards_camera(n: Vec3, ray: &Vec3) -> Vec3 {
    if n.dot(ray) > 0.0 {
        -n
    } else {
        n
    }
}

struct Stencil {
    a: Vec3,
    b: Vec3,
    c: Vec3,
    sign: f64,
    r: Vec3,
    rx: Vec3,
    ry: Vec3,
}

fn stencil(depth: &ScalarImage, camera: &Camera, i: usize, j: usize) -> Option<Stencil> {
    if i + 1 >= depth.width || j + 1 >= depth.height {
        return None;
    }
    let (z, zx, zy) = (*depth.get(i, j), *depth.get(i + 1, j), *depth.get(i, j + 1));
    if z <= 0.0 || zx <= 0.0 || zy <= 0.0 {
        return None;
    }
    let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
    let r = camera.ray_dir(x, y);
    let rx = camera.ray_dir(x + 1.0, y);
    let ry = camera.ray_dir(x, y + 1.0);
    let p = r * z;
    let a = p - rx * zx;
    let b = p - ry * zy;
    let c = a.cross(&b);
    if c.norm() < 1e-300 {
        return None;
    }
    let sign = if c.dot(&p) > 0.0 { -1.0 } else { 1.0 };
    Some(Stencil { a, b, c, sign, r, rx, ry })
}

/// Unit camera-space normals; zero where the pixel, its right or its lower
/// neighbour has no depth, and along the last row and column.
pub fn normals_from_depth(depth: &ScalarImage, camera: &Camera) -> ColorImage {
    ImagePlane::from_fn(depth.width, depth.height, |i, j| match stencil(depth, camera, i, j) {
        Some(s) => s.c.normalize() * s.sign,
        None => Vec3::zeros(),
    })
}

/// Pulls a gradient on the normal map back onto the depth map.
pub fn normals_backward(depth: &ScalarImage, camera: &Camera, grad: &ColorImage) -> ScalarImage {
    let mut out = ImagePlane::filled(depth.width, depth.height, 0.0);
    for j in 0..depth.height {
        for i in 0..depth.width {
            let g = grad.get(i, j);
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let Some(s) = stencil(depth, camera, i, j) else { continue };
            let len = s.c.norm();
            let n = s.c / len;
            let gs = g * s.sign;
            let gc = (gs - n * n.dot(&gs)) / len;
            let ga = s.b.cross(&gc);
            let gb = gc.cross(&s.a);
            *out.get_mut(i, j) += s.r.dot(&(ga + gb));
            *out.get_mut(i + 1, j) -= s.rx.dot(&ga);
            *out.get_mut(i, j + 1) -= s.ry.dot(&gb);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::look_at(Vec3::zeros(), Vec3::z(), -Vec3::y(), 60.0, 12, 10).unwrap()
    }

    #[test]
    fn fronto_parallel_plane_faces_camera() {
        let c = cam();
        let d = ImagePlane::filled(12, 10, 2.5);
        let n = normals_from_depth(&d, &c);
        for j in 0..9 {
            for i in 0..11 {
                assert!((n.get(i, j) - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
            }
        }
        assert_eq!(*n.get(11, 3), Vec3::zeros());
        assert_eq!(*n.get(3, 9), Vec3::zeros());
    }

    #[test]
    fn sentinel_neighbour_gives_zero() {
        let c = cam();
        let mut d = ImagePlane::filled(12, 10, 2.0);
        *d.get_mut(5, 5) = 0.0;
        let n = normals_from_depth(&d, &c);
        assert_eq!(*n.get(5, 5), Vec3::zeros());
        assert_eq!(*n.get(4, 5), Vec3::zeros());
        assert_eq!(*n.get(5, 4), Vec3::zeros());
        assert!(n.get(6, 6).norm() > 0.5);
    }

    #[test]
    fn tilted_plane_normal() {
        let c = cam();
        // plane through (0,0,3) with normal (0.3,-0.2,-1)
        let pn = Vec3::new(0.3, -0.2, -1.0).normalize();
        let p0 = Vec3::new(0.0, 0.0, 3.0);
        let d = ImagePlane::from_fn(12, 10, |i, j| {
            let r = c.ray_dir(i as f64 + 0.5, j as f64 + 0.5);
            pn.dot(&p0) / pn.dot(&r)
        });
        let n = normals_from_depth(&d, &c);
        assert!((n.get(4, 4) - pn).norm() < 1e-9);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let c = cam();
        let d = ImagePlane::from_fn(12, 10, |i, j| 2.0 + 0.05 * (i as f64).sin() + 0.03 * (j as f64 * 0.7).cos());
        let g = ImagePlane::from_fn(12, 10, |i, j| Vec3::new((i as f64 * 0.3).sin(), 0.2, (j as f64).cos()));
        let loss = |d: &ScalarImage| -> f64 {
            let n = normals_from_depth(d, &c);
            n.data.iter().zip(&g.data).map(|(a, b)| a.dot(b)).sum()
        };
        let an = normals_backward(&d, &c, &g);
        let h = 1e-6;
        for p in [0usize, 13, 27, 50, 77, 99] {
            let mut dp = d.clone();
            dp.data[p] += h;
            let mut dm = d.clone();
            dm.data[p] -= h;
            let fd = (loss(&dp) - loss(&dm)) / (2.0 * h);
            assert!((fd - an.data[p]).abs() < 1e-5 * (1.0 + fd.abs()), "{p}: {fd} vs {}", an.data[p]);
        }
    }
}
