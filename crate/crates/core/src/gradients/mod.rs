//! Reverse-mode gradients of the total loss with respect to the canonical
//! surfel parameters.
//!
//! The pass replays the blend records back to front, pulls each entry's
//! gradient through the ray-splat intersection onto the camera-space splat
//! matrix, then through the frozen per-surfel skinning frame. The weight
//! rows and blended joint transforms are constants within a step.

pub mod check;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::image::ScalarImage;
use crate::geometry::math::quat_columns_backward;
use crate::geometry::sh::{basis, basis_gradient, coeff_count, degree_of};
use crate::geometry::{Camera, Mat3, Quat, Surfel, Vec3};
use crate::losses::{total_loss_with_grad, LossBreakdown, LossGradients, LossTargets, LossWeights, PerceptualProvider};
use crate::raster::normals::normals_backward;
use crate::raster::{render_tiled_with, RenderOutputs, RenderSettings};
use crate::skinning::{blend_transforms, JointTransforms, SkinnedFrame, WeightRow};

pub use check::{central_difference, compare_gradients, fd_gradient_oracle, GradientReport, ParamLayout};

/// Gradients for every canonical surfel.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradients {
    pub center: Vec<Vec3>,
    pub rotation: Vec<Quat>,
    pub log_scale: Vec<[f64; 2]>,
    pub opacity_logit: Vec<f64>,
    pub sh: Vec<Vec<Vec3>>,
    /// Gradient with respect to the projected center in normalized device
    /// coordinates, used by densification.
    pub screen: Vec<[f64; 2]>,
    /// Surfel contributed to at least one pixel.
    pub visible: Vec<bool>,
}

impl ParamGradients {
    pub fn zeros(surfels: &[Surfel]) -> Self {
        let n = surfels.len();
        ParamGradients {
            center: vec![Vec3::zeros(); n],
            rotation: vec![Quat::new(0.0, 0.0, 0.0, 0.0); n],
            log_scale: vec![[0.0; 2]; n],
            opacity_logit: vec![0.0; n],
            sh: surfels.iter().map(|s| vec![Vec3::zeros(); s.sh.len()]).collect(),
            screen: vec![[0.0; 2]; n],
            visible: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.center.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.rotation.iter().all(|q| q.coords.iter().all(|x| x.is_finite()))
            && self.log_scale.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.opacity_logit.iter().all(|x| x.is_finite())
            && self.sh.iter().flatten().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// One supervised view with everything needed to evaluate and
/// differentiate the loss for a candidate canonical surfel set.
pub struct Problem<'a> {
    pub camera: &'a Camera,
    /// Frozen weight row per surfel.
    pub weight_rows: &'a [WeightRow],
    pub transforms: &'a JointTransforms,
    pub targets: LossTargets<'a>,
    pub loss_weights: LossWeights,
    pub settings: RenderSettings,
    pub perceptual: &'a dyn PerceptualProvider,
    /// Route the normal loss into the depth map (straight-through to the
    /// depth-defining entry). When off the normal term has no gradient.
    pub normal_depth_path: bool,
}

pub struct Evaluation {
    pub loss: LossBreakdown,
    pub outputs: RenderOutputs,
    pub posed: Vec<Surfel>,
    pub frames: Vec<SkinnedFrame>,
}

impl Problem<'_> {
    pub fn pose(&self, canonical: &[Surfel]) -> Result<(Vec<Surfel>, Vec<SkinnedFrame>)> {
        if canonical.len() != self.weight_rows.len() {
            return Err(Error::Contract(format!(
                "{} surfels but {} weight rows",
                canonical.len(),
                self.weight_rows.len()
            )));
        }
        Ok(canonical
            .par_iter()
            .zip(self.weight_rows.par_iter())
            .map(|(s, w)| {
                let frame = SkinnedFrame::from_affine(&blend_transforms(w, self.transforms));
                (frame.apply(s), frame)
            })
            .unzip())
    }

    fn render(&self, canonical: &[Surfel]) -> Result<(RenderOutputs, Vec<Surfel>, Vec<SkinnedFrame>)> {
        let (posed, frames) = self.pose(canonical)?;
        let settings = RenderSettings { keep_records: true, ..self.settings };
        Ok((render_tiled_with(&posed, self.camera, &settings), posed, frames))
    }

    pub fn evaluate(&self, canonical: &[Surfel]) -> Result<Evaluation> {
        let (outputs, posed, frames) = self.render(canonical)?;
        let loss = crate::losses::total_loss(&outputs, &self.targets, canonical, &self.loss_weights, self.perceptual)?;
        Ok(Evaluation { loss, outputs, posed, frames })
    }

    pub fn loss(&self, canonical: &[Surfel]) -> Result<f64> {
        Ok(self.evaluate(canonical)?.loss.total)
    }

    /// Forward, loss and backward in one call.
    pub fn loss_and_gradients(&self, canonical: &[Surfel]) -> Result<(Evaluation, ParamGradients)> {
        let (outputs, posed, frames) = self.render(canonical)?;
        let (loss, lg) =
            total_loss_with_grad(&outputs, &self.targets, canonical, &self.loss_weights, self.perceptual)?;
        let grads = backward(&BackwardInputs {
            canonical,
            posed: &posed,
            frames: &frames,
            camera: self.camera,
            outputs: &outputs,
            loss_grads: &lg,
            sh_degree: self.settings.sh_degree,
            normal_depth_path: self.normal_depth_path,
        })?;
        Ok((Evaluation { loss, outputs, posed, frames }, grads))
    }
}

pub struct BackwardInputs<'a> {
    pub canonical: &'a [Surfel],
    pub posed: &'a [Surfel],
    pub frames: &'a [SkinnedFrame],
    pub camera: &'a Camera,
    pub outputs: &'a RenderOutputs,
    pub loss_grads: &'a LossGradients,
    pub sh_degree: usize,
    pub normal_depth_path: bool,
}

/// Per-entry gradient with respect to the splat matrix, color and opacity.
#[derive(Clone, Copy)]
struct EntryGrad {
    surfel: u32,
    m: [f64; 9],
    color: Vec3,
    opacity: f64,
}

/// Exact gradients of the weighted total loss for the rendered view.
pub fn backward(inp: &BackwardInputs) -> Result<ParamGradients> {
    let out = inp.outputs;
    let (Some(records), Some(splats)) = (&out.records, &out.splats) else {
        return Err(Error::Contract("backward needs a render with blend records".into()));
    };
    let n = inp.canonical.len();
    if inp.posed.len() != n || inp.frames.len() != n || splats.len() != n {
        return Err(Error::Contract("surfel, posed, frame and splat counts differ".into()));
    }
    let cam = inp.camera;
    let (w, h) = (cam.width, cam.height);
    let lg = inp.loss_grads;

    let depth_grad: Option<ScalarImage> = if inp.normal_depth_path && lg.normal.data.iter().any(|g| g.norm() > 0.0) {
        Some(normals_backward(&out.depth, cam, &lg.normal))
    } else {
        None
    };

    let entry_grads: Vec<EntryGrad> = (0..w * h)
        .into_par_iter()
        .flat_map_iter(|p| {
            let entries = records.pixel(p);
            let (i, j) = (p % w, p / w);
            let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
            let gc = lg.color.data[p];
            let ga = lg.alpha.data[p];
            let gd = match (&depth_grad, records.depth_record[p]) {
                (Some(d), Some(k)) => Some((k as usize, d.data[p])),
                _ => None,
            };
            let mut res: Vec<EntryGrad> = Vec::with_capacity(entries.len());
            let (mut rc, mut ra) = (Vec3::zeros(), 0.0);
            for (k, e) in entries.iter().enumerate().rev() {
                let s = &splats[e.surfel as usize];
                let c = s.color;
                let d_alpha = e.transmittance * (gc.dot(&(c - rc)) + ga * (1.0 - ra));
                rc = c * e.alpha + rc * (1.0 - e.alpha);
                ra = e.alpha + ra * (1.0 - e.alpha);

                let mut g = EntryGrad {
                    surfel: e.surfel,
                    m: [0.0; 9],
                    color: gc * (e.alpha * e.transmittance),
                    opacity: d_alpha * e.gaussian,
                };
                let d_gauss = d_alpha * s.opacity;
                let mut du = -d_gauss * e.gaussian * e.u;
                let mut dv = -d_gauss * e.gaussian * e.v;
                let m = &s.m;
                if let Some((kd, dz)) = gd {
                    if kd == k && dz != 0.0 {
                        g.m[6] += dz * e.u;
                        g.m[7] += dz * e.v;
                        g.m[8] += dz;
                        du += dz * m[(2, 0)];
                        dv += dz * m[(2, 1)];
                    }
                }
                if du == 0.0 && dv == 0.0 {
                    res.push(g);
                    continue;
                }
                let row = |r: usize| Vec3::new(m[(r, 0)], m[(r, 1)], m[(r, 2)]);
                let (m0, m1, m2) = (row(0), row(1), row(2));
                let hx = m2 * x - m0;
                let hy = m2 * y - m1;
                let kv = hx.cross(&hy);
                let dk = Vec3::new(du / kv.z, dv / kv.z, -(du * e.u + dv * e.v) / kv.z);
                let dhx = hy.cross(&dk);
                let dhy = dk.cross(&hx);
                let dm0 = -dhx;
                let dm1 = -dhy;
                let dm2 = dhx * x + dhy * y;
                for c in 0..3 {
                    g.m[c] += dm0[c];
                    g.m[3 + c] += dm1[c];
                    g.m[6 + c] += dm2[c];
                }
                res.push(g);
            }
            res.into_iter().rev()
        })
        .collect();

    // fixed-order reduction
    let mut dm = vec![Mat3::zeros(); n];
    let mut dcolor = vec![Vec3::zeros(); n];
    let mut dopacity = vec![0.0; n];
    let mut grads = ParamGradients::zeros(inp.canonical);
    for g in &entry_grads {
        let s = g.surfel as usize;
        for r in 0..3 {
            for c in 0..3 {
                dm[s][(r, c)] += g.m[r * 3 + c];
            }
        }
        dcolor[s] += g.color;
        dopacity[s] += g.opacity;
        grads.visible[s] = true;
    }

    let k = cam.intrinsics();
    let rc = cam.rotation();
    let per_surfel: Vec<_> = (0..n)
        .into_par_iter()
        .map(|s| {
            let canon = &inp.canonical[s];
            let posed = &inp.posed[s];
            let frame = &inp.frames[s];
            let splat = &splats[s];
            let mut d_logit = 0.0;
            let mut d_log_scale = [0.0; 2];
            let mut d_center_posed = Vec3::zeros();
            let mut d_cols = [Vec3::zeros(); 2];
            let mut d_sh = vec![Vec3::zeros(); canon.sh.len()];
            let mut screen = [0.0; 2];

            if grads.visible[s] {
                let o = splat.opacity;
                d_logit = dopacity[s] * o * (1.0 - o);

                let dn = k.transpose() * dm[s];
                let r_posed = posed.rotation_matrix();
                let [su, sv] = posed.scale();
                for (a, scale) in [(0usize, su), (1, sv)] {
                    let col = dn.column(a).into_owned();
                    let r_col = r_posed.column(a).into_owned();
                    d_cols[a] = rc.transpose() * col * scale;
                    d_log_scale[a] = col.dot(&(rc * r_col)) * scale;
                }
                let dc_cam = dn.column(2).into_owned();
                d_center_posed += rc.transpose() * dc_cam;
                let c = splat.center_cam;
                if c.z > 0.0 {
                    screen = [
                        dc_cam.x * w as f64 * c.z / (2.0 * cam.fx),
                        dc_cam.y * h as f64 * c.z / (2.0 * cam.fy),
                    ];
                }

                // color through the clamp and the SH basis
                let mut dc = dcolor[s];
                for ch in 0..3 {
                    if !splat.color_active[ch] {
                        dc[ch] = 0.0;
                    }
                }
                if dc.norm() > 0.0 && !canon.sh.is_empty() {
                    let degree = inp.sh_degree.min(degree_of(canon.sh.len()));
                    let dir = splat.view_dir;
                    let b = basis(&dir, degree);
                    let bg = basis_gradient(&dir, degree);
                    let mut d_dir = Vec3::zeros();
                    for kk in 0..coeff_count(degree) {
                        d_sh[kk] = dc * b[kk];
                        d_dir += bg[kk] * dc.dot(&canon.sh[kk]);
                    }
                    if splat.view_dist > 0.0 {
                        let proj = d_dir - dir * dir.dot(&d_dir);
                        d_center_posed += proj / splat.view_dist;
                    }
                }
            }

            d_log_scale[0] += lg.log_scale.get(s).map_or(0.0, |g| g[0]);
            d_log_scale[1] += lg.log_scale.get(s).map_or(0.0, |g| g[1]);
            d_logit += lg.opacity_logit.get(s).copied().unwrap_or(0.0);

            // posed -> canonical through the frozen frame
            let d_center = frame.linear.transpose() * d_center_posed;
            let qt = frame.rotation.transpose();
            let d_rot = quat_columns_backward(&canon.rotation, &(qt * d_cols[0]), &(qt * d_cols[1]));
            (d_center, d_rot, d_log_scale, d_logit, d_sh, screen)
        })
        .collect();

    for (s, (dc, dr, dls, dl, dsh, scr)) in per_surfel.into_iter().enumerate() {
        grads.center[s] = dc;
        grads.rotation[s] = dr;
        grads.log_scale[s] = dls;
        grads.opacity_logit[s] = dl;
        grads.sh[s] = dsh;
        grads.screen[s] = scr;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests;
