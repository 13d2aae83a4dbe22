//! The skinned rest-pose template and its binary `.skel` container.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic            4 bytes  "SKEL"
//! version          u32      1
//! vertex_count     u32
//! face_count       u32
//! joint_count      u32
//! rest_vertices    vertex_count * 3 f64
//! faces            face_count * 3 u32
//! joint_parents    joint_count i32   (-1 marks a root)
//! rest_transforms  joint_count * 16 f64, row-major joint-to-canonical
//! vertex_weights   per vertex: u32 n (<= 8), then n * (u32 joint, f64 weight)
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Mat4, Vec3};

pub const MAX_INFLUENCES: usize = 8;
const MAGIC: &[u8; 4] = b"SKEL";
const VERSION: u32 = 1;

/// Up to [`MAX_INFLUENCES`] `(joint, weight)` pairs.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct WeightRow {
    pub entries: Vec<(usize, f64)>,
}

impl WeightRow {
    pub fn one_hot(joint: usize) -> Self {
        WeightRow { entries: vec![(joint, 1.0)] }
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn weight_of(&self, joint: usize) -> f64 {
        self.entries.iter().filter(|e| e.0 == joint).map(|e| e.1).sum()
    }

    /// Merges `sum_i c_i * row_i`, keeps the largest [`MAX_INFLUENCES`]
    /// entries and renormalizes.
    pub fn blend<'a>(rows: impl IntoIterator<Item = (f64, &'a WeightRow)>) -> WeightRow {
        let mut acc: Vec<(usize, f64)> = Vec::with_capacity(16);
        for (c, row) in rows {
            if c == 0.0 {
                continue;
            }
            for &(j, w) in &row.entries {
                match acc.iter_mut().find(|e| e.0 == j) {
                    Some(e) => e.1 += c * w,
                    None => acc.push((j, c * w)),
                }
            }
        }
        let mut row = WeightRow { entries: acc };
        row.truncate_and_normalize();
        row
    }

    pub fn truncate_and_normalize(&mut self) {
        self.entries.retain(|e| e.1 > 0.0);
        if self.entries.len() > MAX_INFLUENCES {
            self.entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            self.entries.truncate(MAX_INFLUENCES);
        }
        self.entries.sort_by_key(|e| e.0);
        let s = self.sum();
        if s > 0.0 {
            for e in &mut self.entries {
                e.1 /= s;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkinnedTemplate {
    pub rest_vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Parent joint per joint, `-1` for a root.
    pub joint_parents: Vec<i32>,
    /// Joint-to-canonical transforms in the rest pose.
    pub rest_joint_transforms: Vec<Mat4>,
    pub vertex_weights: Vec<WeightRow>,
}

impl SkinnedTemplate {
    pub fn joint_count(&self) -> usize {
        self.joint_parents.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.joint_count();
        if k == 0 {
            return Err(Error::Input("template has no joints".into()));
        }
        if self.rest_joint_transforms.len() != k {
            return Err(Error::Input(format!(
                "{} rest transforms for {k} joints",
                self.rest_joint_transforms.len()
            )));
        }
        if self.vertex_weights.len() != self.rest_vertices.len() {
            return Err(Error::Input(format!(
                "{} weight rows for {} vertices",
                self.vertex_weights.len(),
                self.rest_vertices.len()
            )));
        }
        for (j, &p) in self.joint_parents.iter().enumerate() {
            if p < -1 || p >= k as i32 || p == j as i32 {
                return Err(Error::Input(format!("joint {j} has invalid parent {p}")));
            }
        }
        self.topological_order()?;
        let nv = self.rest_vertices.len() as u32;
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i >= nv)) {
            return Err(Error::Input(format!("face {f:?} references a missing vertex")));
        }
        for (i, row) in self.vertex_weights.iter().enumerate() {
            if row.entries.len() > MAX_INFLUENCES {
                return Err(Error::Input(format!("vertex {i} has more than {MAX_INFLUENCES} influences")));
            }
            if row.entries.iter().any(|e| e.1 < 0.0 || e.0 >= k || !e.1.is_finite()) {
                return Err(Error::Input(format!("vertex {i} has an invalid weight entry")));
            }
            if (row.sum() - 1.0).abs() > 1e-6 {
                return Err(Error::Input(format!("vertex {i} weights sum to {}", row.sum())));
            }
        }
        Ok(())
    }

    /// Joints ordered so every parent precedes its children; errors on cycles.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let k = self.joint_count();
        let mut state = vec![0u8; k];
        let mut order = Vec::with_capacity(k);
        for start in 0..k {
            let mut chain = Vec::new();
            let mut j = start;
            loop {
                match state[j] {
                    2 => break,
                    1 => return Err(Error::Input(format!("joint hierarchy has a cycle through joint {j}"))),
                    _ => {}
                }
                state[j] = 1;
                chain.push(j);
                let p = self.joint_parents[j];
                if p < 0 {
                    break;
                }
                j = p as usize;
            }
            for &c in chain.iter().rev() {
                state[c] = 2;
                order.push(c);
            }
        }
        Ok(order)
    }

    /// Axis-aligned bounds of the rest vertices.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.rest_vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Per-vertex unit normals from area-weighted face normals (zero when no faces touch a vertex).
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut n = vec![Vec3::zeros(); self.rest_vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.rest_vertices[i as usize]);
            let fnrm = (b - a).cross(&(c - a));
            for &i in f {
                n[i as usize] += fnrm;
            }
        }
        n.into_iter()
            .map(|v| if v.norm() > 1e-12 { v.normalize() } else { Vec3::zeros() })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.rest_vertices.len() as u32, self.faces.len() as u32, self.joint_count() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.rest_vertices {
            for c in v.iter() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        for f in &self.faces {
            for i in f {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        for p in &self.joint_parents {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for m in &self.rest_joint_transforms {
            for r in 0..4 {
                for c in 0..4 {
                    out.extend_from_slice(&m[(r, c)].to_le_bytes());
                }
            }
        }
        for row in &self.vertex_weights {
            out.extend_from_slice(&(row.entries.len() as u32).to_le_bytes());
            for &(j, w) in &row.entries {
                out.extend_from_slice(&(j as u32).to_le_bytes());
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Input("not a .skel file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Input(format!("unsupported .skel version {version}")));
        }
        let (nv, nf, nj) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let mut rest_vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            rest_vertices.push(Vec3::new(r.f64()?, r.f64()?, r.f64()?));
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            faces.push([r.u32()?, r.u32()?, r.u32()?]);
        }
        let mut joint_parents = Vec::with_capacity(nj);
        for _ in 0..nj {
            joint_parents.push(r.i32()?);
        }
        let mut rest_joint_transforms = Vec::with_capacity(nj);
        for _ in 0..nj {
            let mut vals = [0.0; 16];
            for v in &mut vals {
                *v = r.f64()?;
            }
            rest_joint_transforms.push(Mat4::from_row_slice(&vals));
        }
        let mut vertex_weights = Vec::with_capacity(nv);
        for i in 0..nv {
            let n = r.u32()? as usize;
            if n > MAX_INFLUENCES {
                return Err(Error::Input(format!("vertex {i} declares {n} influences")));
            }
            let mut entries = Vec::with_capacity(n);
            for _ in 0..n {
                entries.push((r.u32()? as usize, r.f64()?));
            }
            vertex_weights.push(WeightRow { entries });
        }
        if r.pos != bytes.len() {
            return Err(Error::Input("trailing bytes after .skel payload".into()));
        }
        let t = SkinnedTemplate {
            rest_vertices,
            faces,
            joint_parents,
            rest_joint_transforms,
            vertex_weights,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::load(path, e))?;
        SkinnedTemplate::from_bytes(&bytes).map_err(|e| Error::load(path, e))
    }
}

pub(crate) struct ByteReader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }
    pub fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Input("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
