//! Random scenes for tests, examples and benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::math::{quat_from_matrix, Quat};
use crate::geometry::sh::coeff_count;
use crate::geometry::{Camera, Surfel, Vec3};
use crate::raster::prepare_splat;

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Quat {
    let q = Quat::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    if q.norm() < 1e-6 {
        Quat::identity()
    } else {
        q.normalize()
    }
}

/// Camera on a sphere of radius 3..5 looking at the origin.
pub fn random_camera<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> Camera {
    loop {
        let dir = random_unit(rng);
        let up = random_unit(rng);
        if dir.cross(&up).norm() < 0.3 {
            continue;
        }
        let eye = dir * rng.random_range(3.0..5.0);
        let target = Vec3::new(
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
        );
        let fov = rng.random_range(35.0..65.0);
        return Camera::look_at(eye, target, up, fov, width, height).expect("valid camera");
    }
}

/// Surfel with random placement, frame, scale, opacity and SH.
pub fn random_surfel<R: Rng + ?Sized>(rng: &mut R, sh_degree: usize) -> Surfel {
    let center = random_unit(rng) * rng.random_range(0.0f64..1.0).cbrt();
    let mut sh: Vec<Vec3> = (0..coeff_count(sh_degree))
        .map(|k| {
            let amp = if k == 0 { 1.0 } else { 0.25 };
            Vec3::new(
                rng.random_range(-amp..amp),
                rng.random_range(-amp..amp),
                rng.random_range(-amp..amp),
            )
        })
        .collect();
    sh[0] += Vec3::repeat(0.3);
    Surfel {
        center,
        rotation: random_rotation(rng),
        log_scale: [rng.random_range(-2.8f64..-1.2), rng.random_range(-2.8f64..-1.2)],
        opacity_logit: rng.random_range(-1.5..2.5),
        sh,
    }
}

/// Camera-space depth range `[lo, hi]` swept by the cutoff square of a surfel.
fn depth_range(s: &Surfel, camera: &Camera, cutoff: f64) -> [f64; 2] {
    let rc = camera.rotation();
    let r = s.rotation_matrix();
    let [su, sv] = s.scale();
    let c = camera.world_to_cam(&s.center);
    let du = (rc * r.column(0)).z * su;
    let dv = (rc * r.column(1)).z * sv;
    let span = cutoff * (du.abs() + dv.abs());
    [c.z - span, c.z + span]
}

fn overlaps(a: [f64; 4], b: [f64; 4]) -> bool {
    a[0] <= b[1] && b[0] <= a[1] && a[2] <= b[3] && b[2] <= a[3]
}

/// True when, for every pair of surfels whose screen footprints overlap,
/// their depth ranges are disjoint: per-pixel and per-splat depth orders
/// then agree everywhere.
pub fn is_order_unambiguous(surfels: &[Surfel], camera: &Camera, cutoff: f64) -> bool {
    let info: Vec<_> = surfels
        .iter()
        .map(|s| (prepare_splat(s, camera, 0, cutoff).bbox, depth_range(s, camera, cutoff)))
        .collect();
    for (i, (bi, zi)) in info.iter().enumerate() {
        for (bj, zj) in &info[..i] {
            if let (Some(bi), Some(bj)) = (bi, bj) {
                if overlaps(*bi, *bj) && zi[0] <= zj[1] && zj[0] <= zi[1] {
                    return false;
                }
            }
        }
    }
    true
}

/// A camera and up to `max_surfels` random surfels, drawn by rejection so
/// that the scene has no depth-order ambiguity. Surfel frames are tilted at
/// most ~50 degrees from facing the camera.
pub fn random_unambiguous_scene<R: Rng + ?Sized>(
    rng: &mut R,
    max_surfels: usize,
    width: usize,
    height: usize,
    sh_degree: usize,
) -> (Vec<Surfel>, Camera) {
    let camera = random_camera(rng, width, height);
    let rc_t = camera.rotation().transpose();
    let mut surfels: Vec<Surfel> = Vec::new();
    for _ in 0..max_surfels * 40 {
        if surfels.len() == max_surfels {
            break;
        }
        let mut s = random_surfel(rng, sh_degree);
        // facing frame, then a bounded tilt
        let tilt = random_unit(rng) * rng.random_range(0.0..0.85);
        let facing = rc_t * crate::geometry::math::axis_angle_to_matrix(&tilt);
        let spin = crate::geometry::math::axis_angle_to_matrix(&(Vec3::z() * rng.random_range(0.0..6.3)));
        s.rotation = quat_from_matrix(&(facing * spin));
        surfels.push(s);
        if !is_order_unambiguous(&surfels, &camera, 3.0) {
            surfels.pop();
        }
    }
    (surfels, camera)
}

/// Small posed scene with supervision, for gradient checks.
pub struct GradientScene {
    pub camera: Camera,
    pub surfels: Vec<Surfel>,
    pub weight_rows: Vec<crate::skinning::WeightRow>,
    pub transforms: crate::skinning::JointTransforms,
    pub target: crate::geometry::image::ColorImage,
    pub mask: crate::geometry::image::ScalarImage,
    pub normals: crate::geometry::image::ColorImage,
}

impl GradientScene {
    /// `n` surfels near the origin, two joints with a non-rigid blend, and
    /// targets rendered from a perturbed copy of the scene.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, width: usize, height: usize, sh_degree: usize) -> Self {
        use crate::geometry::math::{axis_angle_to_matrix, rigid};
        use crate::skinning::{JointTransforms, WeightRow};

        let camera = loop {
            let dir = random_unit(rng);
            let up = random_unit(rng);
            if dir.cross(&up).norm() > 0.3 {
                break Camera::look_at(dir * 4.0, Vec3::zeros(), up, 35.0, width, height).expect("camera");
            }
        };
        let surfels: Vec<Surfel> = (0..n)
            .map(|_| {
                let mut s = random_surfel(rng, sh_degree);
                s.center *= 0.6;
                s.log_scale = [rng.random_range(-1.7..-0.9), rng.random_range(-1.7..-0.9)];
                s
            })
            .collect();
        let g1 = rigid(
            &axis_angle_to_matrix(&(random_unit(rng) * 0.4)),
            &(random_unit(rng) * 0.1),
        );
        let transforms = JointTransforms(vec![crate::geometry::Mat4::identity(), g1]);
        let weight_rows: Vec<WeightRow> = (0..n)
            .map(|_| {
                let a = rng.random_range(0.0..1.0);
                WeightRow { entries: vec![(0, a), (1, 1.0 - a)] }
            })
            .collect();

        let perturbed: Vec<Surfel> = surfels
            .iter()
            .map(|s| {
                let mut t = s.clone();
                t.center += random_unit(rng) * 0.05;
                for c in &mut t.sh {
                    *c += Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
                }
                t.opacity_logit += 0.5;
                t
            })
            .collect();
        let posed: Vec<Surfel> = perturbed
            .iter()
            .zip(&weight_rows)
            .map(|(s, w)| crate::skinning::skin_surfel_with_weights(s, w, &transforms).0)
            .collect();
        let out = crate::raster::render_bruteforce(&posed, &camera, sh_degree);
        let mask = out.alpha.map(|a| if *a > 0.5 { 1.0 } else { 0.0 });
        let target = out.color.map(|c| c.map(|v| v.clamp(0.0, 1.0)));
        GradientScene { camera, surfels, weight_rows, transforms, target, mask, normals: out.normal }
    }

    pub fn problem<'a>(
        &'a self,
        loss_weights: crate::losses::LossWeights,
        perceptual: &'a dyn crate::losses::PerceptualProvider,
        sh_degree: usize,
    ) -> crate::gradients::Problem<'a> {
        crate::gradients::Problem {
            camera: &self.camera,
            weight_rows: &self.weight_rows,
            transforms: &self.transforms,
            targets: crate::losses::LossTargets { image: &self.target, mask: &self.mask, normals: Some(&self.normals) },
            loss_weights,
            settings: crate::raster::RenderSettings { sh_degree, tile_size: 8, ..Default::default() },
            perceptual,
            normal_depth_path: true,
        }
    }
}
