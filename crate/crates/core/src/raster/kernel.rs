//! Ray-splat intersection and front-to-back blending, generic over the
//! float type so the hot loop can run in `f32`.

use num_traits::Float;

use super::prepare::PreparedSplat;
use super::{BlendEntry, RenderSettings};
use crate::geometry::{Camera, Vec3};

/// Below this |cos| between ray and splat normal the splat is treated as edge-on.
pub const GRAZING_COS: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
pub struct KernelSplat<F> {
    pub m: [F; 9],
    pub normal: [F; 3],
    pub color: [F; 3],
    pub opacity: F,
}

impl<F: Float> KernelSplat<F> {
    pub fn from_prepared(p: &PreparedSplat) -> Self {
        let c = |v: f64| F::from(v).unwrap();
        let mut m = [F::zero(); 9];
        for r in 0..3 {
            for k in 0..3 {
                m[r * 3 + k] = c(p.m[(r, k)]);
            }
        }
        KernelSplat {
            m,
            normal: [c(p.normal_cam.x), c(p.normal_cam.y), c(p.normal_cam.z)],
            color: [c(p.color.x), c(p.color.y), c(p.color.z)],
            opacity: c(p.opacity),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PixelRay<F> {
    pub x: F,
    pub y: F,
    pub dir: [F; 3],
    pub near: F,
    pub far: F,
    pub cutoff2: F,
    pub grazing: F,
}

impl<F: Float> PixelRay<F> {
    pub fn new(camera: &Camera, i: usize, j: usize, cutoff: f64) -> Self {
        let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
        let d = camera.ray_dir(x, y).normalize();
        let c = |v: f64| F::from(v).unwrap();
        PixelRay {
            x: c(x),
            y: c(y),
            dir: [c(d.x), c(d.y), c(d.z)],
            near: c(camera.near),
            far: c(camera.far),
            cutoff2: c(cutoff * cutoff),
            grazing: c(GRAZING_COS),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Hit<F> {
    pub u: F,
    pub v: F,
    pub z: F,
    pub rho: F,
}

/// Homogeneous two-plane intersection: the pixel ray is the meet of the
/// planes `x·w - X = 0` and `y·w - Y = 0`; pulled back through `m` each is a
/// line in splat coordinates, and their cross product is the hit point.
#[inline]
pub fn intersect<F: Float>(s: &KernelSplat<F>, ray: &PixelRay<F>) -> Option<Hit<F>> {
    let m = &s.m;
    let hx = [ray.x * m[6] - m[0], ray.x * m[7] - m[1], ray.x * m[8] - m[2]];
    let hy = [ray.y * m[6] - m[3], ray.y * m[7] - m[4], ray.y * m[8] - m[5]];
    let k0 = hx[1] * hy[2] - hx[2] * hy[1];
    let k1 = hx[2] * hy[0] - hx[0] * hy[2];
    let k2 = hx[0] * hy[1] - hx[1] * hy[0];
    if k2 == F::zero() {
        return None;
    }
    let cosine = s.normal[0] * ray.dir[0] + s.normal[1] * ray.dir[1] + s.normal[2] * ray.dir[2];
    if cosine.abs() < ray.grazing {
        return None;
    }
    let u = k0 / k2;
    let v = k1 / k2;
    let rho = u * u + v * v;
    if rho > ray.cutoff2 {
        return None;
    }
    let z = m[6] * u + m[7] * v + m[8];
    if z < ray.near || z > ray.far {
        return None;
    }
    Some(Hit { u, v, z, rho })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PixelResult {
    pub color: Vec3,
    pub alpha: f64,
    pub depth: f64,
    /// Offset into the pixel's entry list of the record defining the depth.
    pub depth_record: Option<usize>,
}

/// Blends hits in the given order; appends one entry per contributing hit.
pub fn blend<F: Float>(
    hits: impl IntoIterator<Item = (u32, Hit<F>)>,
    splats: &[KernelSplat<F>],
    settings: &RenderSettings,
    entries: &mut Vec<BlendEntry>,
) -> PixelResult {
    let one = F::one();
    let t_min = F::from(settings.t_min).unwrap();
    let half = F::from(0.5).unwrap();
    let mut t = one;
    let mut col = [F::zero(); 3];
    let mut acc = F::zero();
    let mut depth_record = None;
    let mut depth = F::zero();
    let start = entries.len();
    for (id, hit) in hits {
        let s = &splats[id as usize];
        let g = (-hit.rho * half).exp();
        let a = s.opacity * g;
        let w = a * t;
        for ch in 0..3 {
            col[ch] = col[ch] + s.color[ch] * w;
        }
        acc = acc + w;
        if t > half {
            depth_record = Some(entries.len() - start);
            depth = hit.z;
        }
        entries.push(BlendEntry {
            surfel: id,
            gaussian: g.to_f64().unwrap(),
            alpha: a.to_f64().unwrap(),
            transmittance: t.to_f64().unwrap(),
            depth: hit.z.to_f64().unwrap(),
            u: hit.u.to_f64().unwrap(),
            v: hit.v.to_f64().unwrap(),
        });
        t = t * (one - a);
        if t < t_min {
            break;
        }
    }
    let alpha = acc.to_f64().unwrap();
    let (depth, depth_record) = if alpha >= 0.5 {
        (depth.to_f64().unwrap(), depth_record)
    } else {
        (0.0, None)
    };
    PixelResult {
        color: Vec3::new(col[0].to_f64().unwrap(), col[1].to_f64().unwrap(), col[2].to_f64().unwrap()),
        alpha,
        depth,
        depth_record,
    }
}
