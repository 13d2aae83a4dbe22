//! Finite-difference checking of the analytic gradients.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::{ParamGradients, Problem};
use crate::error::Result;
use crate::geometry::Surfel;

/// Flat indexing of all surfel parameters: per surfel, center (3),
/// quaternion (4, order w x y z), log-scales (2), opacity logit (1), then
/// SH coefficients (3 per coefficient).
#[derive(Clone, Debug)]
pub struct ParamLayout {
    offsets: Vec<usize>,
}

pub const FIXED_PARAMS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Center(usize),
    Rotation(usize),
    LogScale(usize),
    OpacityLogit,
    Sh(usize, usize),
}

impl ParamLayout {
    pub fn new(surfels: &[Surfel]) -> Self {
        let mut offsets = Vec::with_capacity(surfels.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for s in surfels {
            acc += FIXED_PARAMS + 3 * s.sh.len();
            offsets.push(acc);
        }
        ParamLayout { offsets }
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn locate(&self, index: usize) -> (usize, ParamKind) {
        let s = self.offsets.partition_point(|&o| o <= index) - 1;
        let k = index - self.offsets[s];
        let kind = match k {
            0..=2 => ParamKind::Center(k),
            3..=6 => ParamKind::Rotation(k - 3),
            7..=8 => ParamKind::LogScale(k - 7),
            9 => ParamKind::OpacityLogit,
            _ => ParamKind::Sh((k - FIXED_PARAMS) / 3, (k - FIXED_PARAMS) % 3),
        };
        (s, kind)
    }
}

fn quat_slot(kind: usize) -> usize {
    // nalgebra stores (i, j, k, w)
    [3, 0, 1, 2][kind]
}

pub fn param_mut<'a>(surfels: &'a mut [Surfel], layout: &ParamLayout, index: usize) -> &'a mut f64 {
    let (s, kind) = layout.locate(index);
    let sf = &mut surfels[s];
    match kind {
        ParamKind::Center(c) => &mut sf.center[c],
        ParamKind::Rotation(c) => &mut sf.rotation.coords[quat_slot(c)],
        ParamKind::LogScale(c) => &mut sf.log_scale[c],
        ParamKind::OpacityLogit => &mut sf.opacity_logit,
        ParamKind::Sh(k, c) => &mut sf.sh[k][c],
    }
}

impl ParamGradients {
    /// Gradients in [`ParamLayout`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in 0..self.len() {
            out.extend(self.center[s].iter());
            let q = &self.rotation[s].coords;
            out.extend([q[3], q[0], q[1], q[2]]);
            out.extend(self.log_scale[s]);
            out.push(self.opacity_logit[s]);
            for c in &self.sh[s] {
                out.extend(c.iter());
            }
        }
        out
    }
}

/// `(f(x + eps) - f(x - eps)) / (2 eps)`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Central finite difference of the total loss in one flat parameter.
pub fn fd_gradient_oracle(problem: &Problem, surfels: &[Surfel], index: usize, eps: f64) -> Result<f64> {
    let layout = ParamLayout::new(surfels);
    let eval = |delta: f64| -> Result<f64> {
        let mut s = surfels.to_vec();
        *param_mut(&mut s, &layout, index) += delta;
        problem.loss(&s)
    };
    Ok((eval(eps)? - eval(-eps)?) / (2.0 * eps))
}

/// Hash of everything piecewise-constant in the forward pass: each pixel's
/// contributing surfels in order, the depth-defining entry and the color
/// clamp state of every splat. A parameter whose perturbation changes it is
/// sitting on a truncation boundary.
pub fn structure_signature(problem: &Problem, surfels: &[Surfel]) -> Result<u64> {
    let ev = problem.evaluate(surfels)?;
    let rec = ev.outputs.records.as_ref().expect("records kept");
    let mut h = DefaultHasher::new();
    for e in &rec.entries {
        e.surfel.hash(&mut h);
    }
    rec.offsets.hash(&mut h);
    rec.depth_record.hash(&mut h);
    for s in ev.outputs.splats.as_ref().expect("splats kept") {
        s.color_active.hash(&mut h);
    }
    for (a, b) in ev.outputs.color.data.iter().zip(problem.targets.image.data.iter()) {
        for c in 0..3 {
            (a[c] > b[c]).hash(&mut h);
        }
    }
    for &a in &ev.outputs.alpha.data {
        (a < crate::losses::MASK_EPS || a > 1.0 - crate::losses::MASK_EPS).hash(&mut h);
    }
    Ok(h.finish())
}

#[derive(Clone, Debug, Default)]
pub struct GradientReport {
    pub checked: usize,
    pub excluded: usize,
    pub within_tolerance: usize,
    pub worst_relative: f64,
    pub worst_index: Option<usize>,
}

impl GradientReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.within_tolerance as f64 / self.checked as f64
        }
    }

    pub fn merge(&mut self, other: &GradientReport) {
        self.checked += other.checked;
        self.excluded += other.excluded;
        self.within_tolerance += other.within_tolerance;
        if other.worst_relative > self.worst_relative {
            self.worst_relative = other.worst_relative;
            self.worst_index = other.worst_index;
        }
    }
}

/// Compares analytic gradients with central differences on every parameter.
/// Relative error is `|a - fd| / (|fd| + 1e-6)`. Parameters whose structure
/// signature changes within `±3 eps` are excluded.
pub fn compare_gradients(problem: &Problem, surfels: &[Surfel], eps: f64, tolerance: f64) -> Result<GradientReport> {
    let (_, grads) = problem.loss_and_gradients(surfels)?;
    let analytic = grads.flatten();
    let layout = ParamLayout::new(surfels);
    let base = structure_signature(problem, surfels)?;
    let mut report = GradientReport::default();
    for (index, &a) in analytic.iter().enumerate() {
        let mut boundary = false;
        for delta in [-3.0 * eps, -eps, eps, 3.0 * eps] {
            let mut s = surfels.to_vec();
            *param_mut(&mut s, &layout, index) += delta;
            if structure_signature(problem, &s)? != base {
                boundary = true;
                break;
            }
        }
        if boundary {
            report.excluded += 1;
            continue;
        }
        let fd = fd_gradient_oracle(problem, surfels, index, eps)?;
        let rel = (a - fd).abs() / (fd.abs() + 1e-6);
        report.checked += 1;
        if rel <= tolerance {
            report.within_tolerance += 1;
        }
        if rel > report.worst_relative {
            report.worst_relative = rel;
            report.worst_index = Some(index);
        }
    }
    Ok(report)
}
