//! Per-camera preprocessing of posed surfels.

use crate::geometry::sh::{coeff_count, eval_raw};
use crate::geometry::{Camera, Mat3, Surfel, Vec3};

/// Camera-dependent quantities of one surfel.
///
/// `m = K [s_u R r_u | s_v R r_v | c]` maps homogeneous splat coordinates
/// `(u, v, 1)` to homogeneous pixel coordinates `(x z, y z, z)`.
#[derive(Clone, Debug)]
pub struct PreparedSplat {
    pub m: Mat3,
    pub normal_cam: Vec3,
    pub center_cam: Vec3,
    pub color: Vec3,
    /// Channels whose SH value was not clamped at zero.
    pub color_active: [bool; 3],
    /// World-space unit direction from the camera center to the splat center.
    pub view_dir: Vec3,
    pub view_dist: f64,
    pub opacity: f64,
    /// `[xmin, xmax, ymin, ymax]` in continuous pixel coordinates; `None` when culled.
    pub bbox: Option<[f64; 4]>,
}

/// Minimum projected footprint radius, pixels.
pub const MIN_FOOTPRINT_RADIUS: f64 = 0.5;

pub fn prepare_splat(surfel: &Surfel, camera: &Camera, sh_degree: usize, cutoff: f64) -> PreparedSplat {
    let rc = camera.rotation();
    let r = surfel.rotation_matrix();
    let [su, sv] = surfel.scale();
    let a_u = rc * r.column(0) * su;
    let a_v = rc * r.column(1) * sv;
    let c = camera.world_to_cam(&surfel.center);
    let k = camera.intrinsics();
    let m = k * Mat3::from_columns(&[a_u, a_v, c]);
    let n = a_u.cross(&a_v);
    let normal_cam = if n.norm() > 0.0 { n.normalize() } else { Vec3::z() };

    let offset = surfel.center - camera.center();
    let view_dist = offset.norm();
    let view_dir = if view_dist > 0.0 { offset / view_dist } else { Vec3::z() };
    let degree = sh_degree.min(crate::geometry::sh::degree_of(surfel.sh.len()));
    let raw = if surfel.sh.len() >= coeff_count(0) {
        eval_raw(&surfel.sh, &view_dir, degree)
    } else {
        Vec3::zeros()
    };
    let shifted = raw + Vec3::repeat(0.5);
    let color_active = [shifted.x > 0.0, shifted.y > 0.0, shifted.z > 0.0];
    let color = shifted.map(|v| v.max(0.0));

    let bbox = footprint(camera, &c, &a_u, &a_v, cutoff);
    PreparedSplat {
        m,
        normal_cam,
        center_cam: c,
        color,
        color_active,
        view_dir,
        view_dist,
        opacity: surfel.opacity(),
        bbox,
    }
}

/// Conservative screen bounds of the `cutoff`-sigma disc: the bbox of the
/// projected corners of its bounding square, or the whole image when the
/// square straddles the near plane.
fn footprint(camera: &Camera, c: &Vec3, a_u: &Vec3, a_v: &Vec3, cutoff: f64) -> Option<[f64; 4]> {
    let (w, h) = (camera.width as f64, camera.height as f64);
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .map(|(a, b)| c + a_u * (a * cutoff) + a_v * (b * cutoff));
    let in_front = corners.iter().filter(|p| p.z > camera.near).count();
    let mut bb = if in_front == 0 {
        return None;
    } else if in_front < 4 {
        [0.0, w, 0.0, h]
    } else {
        let mut bb = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in &corners {
            let (x, y) = camera.project_cam(p);
            bb = [bb[0].min(x), bb[1].max(x), bb[2].min(y), bb[3].max(y)];
        }
        if c.z > camera.near {
            let (x, y) = camera.project_cam(c);
            bb = [
                bb[0].min(x - MIN_FOOTPRINT_RADIUS),
                bb[1].max(x + MIN_FOOTPRINT_RADIUS),
                bb[2].min(y - MIN_FOOTPRINT_RADIUS),
                bb[3].max(y + MIN_FOOTPRINT_RADIUS),
            ];
        }
        bb
    };
    let pad = 1e-6;
    bb = [bb[0] - pad, bb[1] + pad, bb[2] - pad, bb[3] + pad];
    if bb[1] < 0.0 || bb[0] > w || bb[3] < 0.0 || bb[2] > h || !bb.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(bb)
}
