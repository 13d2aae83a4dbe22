//! Binary checkpoint.
//!
//! Little-endian layout:
//!
//! ```text
//! b"SACK"  u32 version
//! u64 iteration  [u8; 32] config hash
//! u32 sh coefficient count  u64 surfel count
//! f64 params[surfels * stride]            (gradient layout order)
//! u64 optimizer step  f64 m[..]  f64 v[..]
//! u32 joint count  i32 parents[joints]  f64 rest transforms[joints * 16] (row-major)
//! per surfel: u32 influence count, then (u32 joint, f64 weight) pairs
//! ```

use std::fs;
use std::path::Path;

use super::adam::{flatten_surfels, params_per_surfel, surfel_from_params, Adam};
use crate::error::{Error, Result};
use crate::geometry::{Mat4, Surfel};
use crate::skinning::template::ByteReader;
use crate::skinning::{SkinnedTemplate, WeightRow};

const MAGIC: &[u8; 4] = b"SACK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub config_hash: [u8; 32],
    pub surfels: Vec<Surfel>,
    pub optimizer: Adam,
    pub joint_parents: Vec<i32>,
    pub rest_joint_transforms: Vec<Mat4>,
    /// Skinning weights at each surfel's canonical center.
    pub weight_rows: Vec<WeightRow>,
}

impl Checkpoint {
    /// Joint hierarchy as a vertex-free template, for forward kinematics.
    pub fn skeleton(&self) -> SkinnedTemplate {
        SkinnedTemplate {
            rest_vertices: Vec::new(),
            faces: Vec::new(),
            joint_parents: self.joint_parents.clone(),
            rest_joint_transforms: self.rest_joint_transforms.clone(),
            vertex_weights: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&(self.optimizer.sh_coeffs as u32).to_le_bytes());
        out.extend_from_slice(&(self.surfels.len() as u64).to_le_bytes());
        for v in flatten_surfels(&self.surfels) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.optimizer.step.to_le_bytes());
        for v in self.optimizer.m.iter().chain(&self.optimizer.v) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.joint_parents.len() as u32).to_le_bytes());
        for p in &self.joint_parents {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for t in &self.rest_joint_transforms {
            for r in 0..4 {
                for c in 0..4 {
                    out.extend_from_slice(&t[(r, c)].to_le_bytes());
                }
            }
        }
        for row in &self.weight_rows {
            out.extend_from_slice(&(row.entries.len() as u32).to_le_bytes());
            for &(j, w) in &row.entries {
                out.extend_from_slice(&(j as u32).to_le_bytes());
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Input("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Input(format!("unsupported checkpoint version {version}")));
        }
        let iteration = r.u64()?;
        let config_hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let sh_coeffs = r.u32()? as usize;
        if sh_coeffs == 0 || sh_coeffs > 16 {
            return Err(Error::Input(format!("invalid SH coefficient count {sh_coeffs}")));
        }
        let n = r.u64()? as usize;
        let stride = params_per_surfel(sh_coeffs);
        if n.saturating_mul(stride).saturating_mul(8) > bytes.len() {
            return Err(Error::Input("checkpoint truncated".into()));
        }
        let mut surfels = Vec::with_capacity(n);
        let mut buf = vec![0.0; stride];
        for _ in 0..n {
            for v in buf.iter_mut() {
                *v = r.f64()?;
            }
            surfels.push(surfel_from_params(&buf));
        }
        let step = r.u64()?;
        let mut read_vec = |len: usize| -> Result<Vec<f64>> { (0..len).map(|_| r.f64()).collect() };
        let m = read_vec(n * stride)?;
        let v = read_vec(n * stride)?;
        let joints = r.u32()? as usize;
        if joints.saturating_mul(4) > bytes.len() {
            return Err(Error::Input("checkpoint truncated".into()));
        }
        let joint_parents = (0..joints).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
        let mut rest_joint_transforms = Vec::with_capacity(joints);
        for _ in 0..joints {
            let mut t = Mat4::zeros();
            for row in 0..4 {
                for c in 0..4 {
                    t[(row, c)] = r.f64()?;
                }
            }
            rest_joint_transforms.push(t);
        }
        let mut weight_rows = Vec::with_capacity(n);
        for _ in 0..n {
            let k = r.u32()? as usize;
            if k > crate::skinning::MAX_INFLUENCES {
                return Err(Error::Input(format!("weight row with {k} influences")));
            }
            let entries = (0..k)
                .map(|_| Ok((r.u32()? as usize, r.f64()?)))
                .collect::<Result<Vec<_>>>()?;
            weight_rows.push(WeightRow { entries });
        }
        if !r.is_empty() {
            return Err(Error::Input("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint {
            iteration,
            config_hash,
            surfels,
            optimizer: Adam { step, sh_coeffs, m, v },
            joint_parents,
            rest_joint_transforms,
            weight_rows,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::load(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::load(path, e))
    }
}
