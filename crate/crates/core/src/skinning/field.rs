//! Volumetric skinning-weight field over canonical space.
//!
//! Each voxel is seeded from the nearest template vertex. Voxels farther
//! than half a voxel diagonal from every vertex are then relaxed with
//! Jacobi iterations of the 6-neighbour average, renormalized each step,
//! while the surface shell stays fixed.

use rayon::prelude::*;

use super::kdtree::KdTree;
use super::template::{ByteReader, SkinnedTemplate, WeightRow, MAX_INFLUENCES};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

const EMPTY: u16 = u16::MAX;
const MAGIC: &[u8; 4] = b"WFLD";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldConfig {
    pub resolution: [usize; 3],
    pub diffusion_iters: usize,
    /// Dilation of the template bounding box, meters.
    pub margin: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            resolution: [128; 3],
            diffusion_iters: 50,
            margin: 0.1,
        }
    }
}

/// Compact voxel row: unused slots carry joint `u16::MAX` and weight 0.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Packed {
    joints: [u16; MAX_INFLUENCES],
    weights: [f32; MAX_INFLUENCES],
}

impl Packed {
    const ZERO: Packed = Packed {
        joints: [EMPTY; MAX_INFLUENCES],
        weights: [0.0; MAX_INFLUENCES],
    };

    fn from_row(row: &WeightRow) -> Packed {
        let mut p = Packed::ZERO;
        for (slot, &(j, w)) in row.entries.iter().take(MAX_INFLUENCES).enumerate() {
            p.joints[slot] = j as u16;
            p.weights[slot] = w as f32;
        }
        p
    }

    fn to_row(self) -> WeightRow {
        WeightRow {
            entries: self
                .joints
                .iter()
                .zip(self.weights.iter())
                .filter(|(j, w)| **j != EMPTY && **w > 0.0)
                .map(|(j, w)| (*j as usize, *w as f64))
                .collect(),
        }
    }

    fn weight_of(&self, joint: u16) -> f64 {
        self.joints
            .iter()
            .zip(self.weights.iter())
            .filter(|(j, _)| **j == joint)
            .map(|(_, w)| *w as f64)
            .sum()
    }
}

/// Blend of packed rows with coefficients; top-8, renormalized.
fn blend_packed(rows: &[(f64, Packed)]) -> Packed {
    let mut joints = [EMPTY; 64];
    let mut weights = [0.0f64; 64];
    let mut n = 0;
    for (c, row) in rows {
        if *c == 0.0 {
            continue;
        }
        for (j, w) in row.joints.iter().zip(row.weights.iter()) {
            if *j == EMPTY || *w == 0.0 {
                continue;
            }
            match joints[..n].iter().position(|x| x == j) {
                Some(k) => weights[k] += c * *w as f64,
                None => {
                    joints[n] = *j;
                    weights[n] = c * *w as f64;
                    n += 1;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if n > MAX_INFLUENCES {
        idx.sort_by(|a, b| weights[*b].total_cmp(&weights[*a]).then(joints[*a].cmp(&joints[*b])));
        idx.truncate(MAX_INFLUENCES);
    }
    idx.sort_by_key(|k| joints[*k]);
    let total: f64 = idx.iter().map(|k| weights[*k]).sum();
    let mut out = Packed::ZERO;
    if total > 0.0 {
        for (slot, k) in idx.into_iter().enumerate() {
            out.joints[slot] = joints[k];
            out.weights[slot] = (weights[k] / total) as f32;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightField {
    pub min: Vec3,
    pub max: Vec3,
    pub resolution: [usize; 3],
    rows: Vec<Packed>,
}

impl WeightField {
    pub fn voxel_size(&self) -> Vec3 {
        let e = self.max - self.min;
        Vec3::new(
            e.x / self.resolution[0] as f64,
            e.y / self.resolution[1] as f64,
            e.z / self.resolution[2] as f64,
        )
    }

    pub fn voxel_count(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution[1] + j) * self.resolution[0] + i
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let s = self.voxel_size();
        self.min + Vec3::new((i as f64 + 0.5) * s.x, (j as f64 + 0.5) * s.y, (k as f64 + 0.5) * s.z)
    }

    pub fn voxel_row(&self, i: usize, j: usize, k: usize) -> WeightRow {
        self.rows[self.flat(i, j, k)].to_row()
    }

    /// Mean squared difference between face-adjacent voxel rows (a discrete
    /// Dirichlet energy). Unlike an L1 measure this never rises under
    /// smoothing when the seed is a sharp planar step.
    pub fn roughness(&self) -> f64 {
        roughness(&self.rows, self.resolution)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.rows.len() * 48);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&1u32.to_le_bytes());
        for r in self.resolution {
            out.extend_from_slice(&(r as u32).to_le_bytes());
        }
        for v in self.min.iter().chain(self.max.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for row in &self.rows {
            for j in row.joints {
                out.extend_from_slice(&j.to_le_bytes());
            }
            for w in row.weights {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC || r.u32()? != 1 {
            return Err(Error::Input("not a weight-field cache".into()));
        }
        let resolution = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let min = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let max = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let n = resolution.iter().product::<usize>();
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut p = Packed::ZERO;
            for j in &mut p.joints {
                *j = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
            }
            for w in &mut p.weights {
                *w = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
            }
            rows.push(p);
        }
        if r.pos != bytes.len() {
            return Err(Error::Input("trailing bytes in weight-field cache".into()));
        }
        Ok(WeightField { min, max, resolution, rows })
    }
}

fn roughness(rows: &[Packed], res: [usize; 3]) -> f64 {
    let [nx, ny, nz] = res;
    let idx = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
    let sq = |a: &Packed, b: &Packed| -> f64 {
        let mut s = 0.0;
        for (j, w) in a.joints.iter().zip(a.weights.iter()) {
            if *j != EMPTY {
                let d = *w as f64 - b.weight_of(*j);
                s += d * d;
            }
        }
        for (j, w) in b.joints.iter().zip(b.weights.iter()) {
            if *j != EMPTY && !a.joints.contains(j) {
                s += (*w as f64) * (*w as f64);
            }
        }
        s
    };
    let (sum, count) = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut s = 0.0;
            let mut c = 0usize;
            for j in 0..ny {
                for i in 0..nx {
                    let a = &rows[idx(i, j, k)];
                    if i + 1 < nx {
                        s += sq(a, &rows[idx(i + 1, j, k)]);
                        c += 1;
                    }
                    if j + 1 < ny {
                        s += sq(a, &rows[idx(i, j + 1, k)]);
                        c += 1;
                    }
                    if k + 1 < nz {
                        s += sq(a, &rows[idx(i, j, k + 1)]);
                        c += 1;
                    }
                }
            }
            (s, c)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn build_weight_field(
    template: &SkinnedTemplate,
    resolution: [usize; 3],
    diffusion_iters: usize,
) -> Result<WeightField> {
    build_weight_field_with(
        template,
        &FieldConfig {
            resolution,
            diffusion_iters,
            ..FieldConfig::default()
        },
        |_, _| {},
    )
}

/// Builds the field, calling `observe(iteration, roughness)` before the
/// first and after every smoothing iteration.
pub fn build_weight_field_with(
    template: &SkinnedTemplate,
    config: &FieldConfig,
    mut observe: impl FnMut(usize, f64),
) -> Result<WeightField> {
    let res = config.resolution;
    if res.iter().any(|&n| n == 0) {
        return Err(Error::Input(format!("weight-field resolution must be nonzero, got {res:?}")));
    }
    if template.rest_vertices.is_empty() {
        return Err(Error::Input("template has no vertices".into()));
    }
    if template.joint_count() >= EMPTY as usize {
        return Err(Error::Input("too many joints for the weight field".into()));
    }
    let (lo, hi) = template.bounds();
    let margin = Vec3::repeat(config.margin.max(0.0));
    let mut field = WeightField {
        min: lo - margin,
        max: hi + margin,
        resolution: res,
        rows: Vec::new(),
    };
    // degenerate extents (planar templates) still get a finite voxel size
    for a in 0..3 {
        if field.max[a] - field.min[a] < 1e-6 {
            field.min[a] -= 0.5e-3;
            field.max[a] += 0.5e-3;
        }
    }
    let tree = KdTree::new(&template.rest_vertices);
    let half_diag = field.voxel_size().norm() / 2.0;
    let [nx, ny, nz] = res;
    let seeds: Vec<(Packed, bool)> = (0..nx * ny * nz)
        .into_par_iter()
        .map(|f| {
            let (i, j, k) = (f % nx, (f / nx) % ny, f / (nx * ny));
            let c = field.voxel_center(i, j, k);
            let (v, d2) = tree.nearest(&c).expect("template has vertices");
            (Packed::from_row(&template.vertex_weights[v]), d2.sqrt() <= half_diag)
        })
        .collect();
    let shell: Vec<bool> = seeds.iter().map(|s| s.1).collect();
    let mut rows: Vec<Packed> = seeds.into_iter().map(|s| s.0).collect();
    observe(0, roughness(&rows, res));
    let idx = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
    for it in 0..config.diffusion_iters {
        let prev = &rows;
        let next: Vec<Packed> = (0..nx * ny * nz)
            .into_par_iter()
            .map(|f| {
                if shell[f] {
                    return prev[f];
                }
                let (i, j, k) = (f % nx, (f / nx) % ny, f / (nx * ny));
                let mut nb: [(f64, Packed); 6] = [(0.0, Packed::ZERO); 6];
                let mut n = 0;
                let mut push = |g: usize| {
                    nb[n] = (1.0, prev[g]);
                    n += 1;
                };
                if i > 0 {
                    push(idx(i - 1, j, k));
                }
                if i + 1 < nx {
                    push(idx(i + 1, j, k));
                }
                if j > 0 {
                    push(idx(i, j - 1, k));
                }
                if j + 1 < ny {
                    push(idx(i, j + 1, k));
                }
                if k > 0 {
                    push(idx(i, j, k - 1));
                }
                if k + 1 < nz {
                    push(idx(i, j, k + 1));
                }
                if n == 0 {
                    return prev[f];
                }
                blend_packed(&nb[..n])
            })
            .collect();
        rows = next;
        observe(it + 1, roughness(&rows, res));
    }
    field.rows = rows;
    Ok(field)
}

/// Trilinear interpolation of the 8 surrounding voxel rows, renormalized.
/// Points outside the box clamp to the boundary voxels.
pub fn query_weights(field: &WeightField, p: &Vec3) -> WeightRow {
    let s = field.voxel_size();
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let n = field.resolution[a];
        let g = ((p[a] - field.min[a]) / s[a] - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = (g.floor() as usize).min(n.saturating_sub(2));
        base[a] = i0;
        frac[a] = if n == 1 { 0.0 } else { g - i0 as f64 };
    }
    let mut acc: Vec<(usize, f64)> = Vec::with_capacity(16);
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let c = (if dx == 1 { frac[0] } else { 1.0 - frac[0] })
                    * (if dy == 1 { frac[1] } else { 1.0 - frac[1] })
                    * (if dz == 1 { frac[2] } else { 1.0 - frac[2] });
                if c == 0.0 {
                    continue;
                }
                let (i, j, k) = (
                    (base[0] + dx).min(field.resolution[0] - 1),
                    (base[1] + dy).min(field.resolution[1] - 1),
                    (base[2] + dz).min(field.resolution[2] - 1),
                );
                let row = &field.rows[field.flat(i, j, k)];
                for (jt, w) in row.joints.iter().zip(row.weights.iter()) {
                    if *jt == EMPTY || *w == 0.0 {
                        continue;
                    }
                    let jt = *jt as usize;
                    match acc.iter_mut().find(|e| e.0 == jt) {
                        Some(e) => e.1 += c * *w as f64,
                        None => acc.push((jt, c * *w as f64)),
                    }
                }
            }
        }
    }
    let mut row = WeightRow { entries: acc };
    row.truncate_and_normalize();
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat4;
    use rand::{Rng, SeedableRng};

    fn cube_template(weights: impl Fn(&Vec3) -> WeightRow) -> SkinnedTemplate {
        let mut verts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                verts.push(Vec3::new(i as f64 * 0.25, j as f64 * 0.25, 0.0));
                verts.push(Vec3::new(i as f64 * 0.25, j as f64 * 0.25, 0.5));
            }
        }
        let w = verts.iter().map(&weights).collect();
        SkinnedTemplate {
            rest_vertices: verts,
            faces: vec![],
            joint_parents: vec![-1, 0],
            rest_joint_transforms: vec![Mat4::identity(), Mat4::identity()],
            vertex_weights: w,
        }
    }

    #[test]
    fn constant_weights_are_a_fixed_point() {
        let t = cube_template(|_| WeightRow::one_hot(0));
        let f = build_weight_field(&t, [6, 6, 5], 10).unwrap();
        for r in &f.rows {
            assert_eq!(r.to_row(), WeightRow::one_hot(0));
        }
    }

    #[test]
    fn zero_resolution_is_input_error() {
        let t = cube_template(|_| WeightRow::one_hot(0));
        assert!(matches!(build_weight_field(&t, [0, 4, 4], 1), Err(Error::Input(_))));
    }

    #[test]
    fn voxel_at_vertex_reproduces_seed_without_diffusion() {
        let t = cube_template(|v| if v.x < 0.5 { WeightRow::one_hot(0) } else { WeightRow::one_hot(1) });
        let f = build_weight_field_with(
            &t,
            &FieldConfig { resolution: [7, 7, 3], diffusion_iters: 0, margin: 0.0 },
            |_, _| {},
        )
        .unwrap();
        // voxel containing the vertex at (1, 1, 0.5)
        let p = Vec3::new(1.0, 1.0, 0.5);
        let tree = KdTree::new(&t.rest_vertices);
        let s = f.voxel_size();
        let (i, j, k) = (
            (((p.x - f.min.x) / s.x) as usize).min(6),
            (((p.y - f.min.y) / s.y) as usize).min(6),
            (((p.z - f.min.z) / s.z) as usize).min(2),
        );
        let nearest = tree.nearest(&f.voxel_center(i, j, k)).unwrap().0;
        assert_eq!(f.voxel_row(i, j, k), t.vertex_weights[nearest]);
        assert_eq!(f.voxel_row(i, j, k), WeightRow::one_hot(1));
    }

    #[test]
    fn query_at_voxel_center_is_exact_and_rows_are_convex() {
        let t = cube_template(|v| WeightRow { entries: vec![(0, 1.0 - v.x), (1, v.x)] });
        let f = build_weight_field(&t, [8, 8, 6], 5).unwrap();
        let c = f.voxel_center(3, 4, 2);
        let q = query_weights(&f, &c);
        let row = f.voxel_row(3, 4, 2);
        for (a, b) in q.entries.iter().zip(&row.entries) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-6);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let p = Vec3::new(
                rng.random_range(-0.5..1.5),
                rng.random_range(-0.5..1.5),
                rng.random_range(-0.5..1.0),
            );
            let w = query_weights(&f, &p);
            assert!((w.sum() - 1.0).abs() < 1e-5);
            assert!(w.entries.iter().all(|e| e.1 >= 0.0));
        }
    }

    #[test]
    fn query_between_centers_is_linear_blend() {
        let t = cube_template(|v| WeightRow { entries: vec![(0, 1.0 - v.x), (1, v.x)] });
        let f = build_weight_field(&t, [8, 8, 6], 3).unwrap();
        let (a, b) = (f.voxel_center(2, 3, 2), f.voxel_center(3, 3, 2));
        let (ra, rb) = (f.voxel_row(2, 3, 2), f.voxel_row(3, 3, 2));
        for t in [0.1, 0.37, 0.5, 0.9] {
            let q = query_weights(&f, &(a + (b - a) * t));
            let mut direct = WeightRow::blend([(1.0 - t, &ra), (t, &rb)]);
            direct.truncate_and_normalize();
            for j in 0..2 {
                assert!((q.weight_of(j) - direct.weight_of(j)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cache_bytes_roundtrip() {
        let t = cube_template(|v| WeightRow { entries: vec![(0, 1.0 - v.x), (1, v.x)] });
        let f = build_weight_field(&t, [4, 3, 2], 2).unwrap();
        assert_eq!(WeightField::from_bytes(&f.to_bytes()).unwrap(), f);
    }

    #[test]
    fn rig_roughness_falls_over_first_iterations() {
        let t = crate::synthetic::rig_template();
        let mut r = Vec::new();
        build_weight_field_with(
            &t,
            &FieldConfig { resolution: [20; 3], diffusion_iters: 10, ..FieldConfig::default() },
            |_, x| r.push(x),
        )
        .unwrap();
        assert_eq!(r.len(), 11);
        for w in r.windows(2) {
            assert!(w[1] < w[0], "{r:?}");
        }
    }

    #[test]
    fn rig_midpoint_is_shared_between_bones() {
        let t = crate::synthetic::rig_template();
        let f = build_weight_field(&t, [32; 3], 50).unwrap();
        let w = query_weights(&f, &Vec3::zeros());
        for j in 0..2 {
            assert!(w.weight_of(j) > 0.3 && w.weight_of(j) < 0.7, "{w:?}");
        }
    }
}
