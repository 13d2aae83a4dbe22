//! Training objectives and image metrics.
//!
//! Every `*_with_grad` function returns the value together with its gradient
//! with respect to the rendered quantity (or the raw surfel parameters).

pub mod perceptual;
pub mod ssim;

use serde::{Deserialize, Serialize};

pub use perceptual::{GradientMagnitudeProxy, NoPerceptual, PerceptualProvider};
pub use ssim::{ssim, ssim_map, ssim_with_grad};

use crate::error::{Error, Result};
use crate::geometry::image::{ColorImage, ScalarImage};
use crate::geometry::{ImagePlane, Surfel, Vec3};
use crate::raster::RenderOutputs;

/// Clamp applied to predicted alpha before the logarithms of the mask loss.
pub const MASK_EPS: f64 = 1e-6;
/// PSNR reported when the MSE is below [`PSNR_MSE_FLOOR`].
pub const PSNR_CAP: f64 = 100.0;
pub const PSNR_MSE_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub dssim: f64,
    pub perceptual: f64,
    pub normal: f64,
    /// Outer weight of the self-supervised group (area + opacity).
    pub self_supervised: f64,
    pub area: f64,
    pub opacity: f64,
    pub mask: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            dssim: 0.2,
            perceptual: 0.0,
            normal: 0.05,
            self_supervised: 1.0,
            area: 0.01,
            opacity: 0.01,
            mask: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("dssim", self.dssim),
            ("perceptual", self.perceptual),
            ("normal", self.normal),
            ("self_supervised", self.self_supervised),
            ("area", self.area),
            ("opacity", self.opacity),
            ("mask", self.mask),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Unweighted terms and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub l1: f64,
    /// `(1 - SSIM) / 2`.
    pub dssim: f64,
    pub perceptual: f64,
    /// `l1 + w.dssim * dssim + w.perceptual * perceptual`.
    pub photometric: f64,
    pub normal: f64,
    pub area: f64,
    pub opacity: f64,
    pub mask: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(&mut self, w: &LossWeights) {
        self.photometric = self.l1 + w.dssim * self.dssim + w.perceptual * self.perceptual;
        self.total = self.photometric
            + w.normal * self.normal
            + w.self_supervised * (w.area * self.area + w.opacity * self.opacity)
            + w.mask * self.mask;
    }
}

/// Supervision for one view of one frame.
#[derive(Clone, Copy, Debug)]
pub struct LossTargets<'a> {
    pub image: &'a ColorImage,
    pub mask: &'a ScalarImage,
    /// Camera-space unit normals; zero vectors mark missing values.
    pub normals: Option<&'a ColorImage>,
}

pub fn l1_loss_with_grad(rendered: &ColorImage, target: &ColorImage) -> Result<(f64, ColorImage)> {
    rendered.ensure_same_size(target, "l1 loss")?;
    let n = (3 * rendered.len()) as f64;
    let mut v = 0.0;
    let grad = ImagePlane {
        width: rendered.width,
        height: rendered.height,
        data: rendered
            .data
            .iter()
            .zip(&target.data)
            .map(|(a, b)| {
                let d = a - b;
                v += d.x.abs() + d.y.abs() + d.z.abs();
                d.map(|x| sign(x) / n)
            })
            .collect(),
    };
    Ok((v / n, grad))
}

/// Returns `(l1, dssim, perceptual)` values and the weighted gradient of the
/// photometric term.
pub fn photometric_with_grad(
    rendered: &ColorImage,
    target: &ColorImage,
    weights: &LossWeights,
    provider: &dyn PerceptualProvider,
) -> Result<([f64; 3], ColorImage)> {
    let (l1, mut grad) = l1_loss_with_grad(rendered, target)?;
    let (s, gs) = ssim_with_grad(rendered, target);
    let dssim = (1.0 - s) / 2.0;
    if weights.dssim != 0.0 {
        for (g, d) in grad.data.iter_mut().zip(&gs.data) {
            *g -= d * (weights.dssim / 2.0);
        }
    }
    let mut perceptual = 0.0;
    if weights.perceptual != 0.0 {
        let (v, gp) = provider.evaluate(rendered, target);
        perceptual = v;
        for (g, d) in grad.data.iter_mut().zip(&gp.data) {
            *g += d * weights.perceptual;
        }
    }
    Ok(([l1, dssim, perceptual], grad))
}

pub fn photometric_loss(
    rendered: &ColorImage,
    target: &ColorImage,
    weights: &LossWeights,
    provider: &dyn PerceptualProvider,
) -> Result<f64> {
    let ([l1, dssim, p], _) = photometric_with_grad(rendered, target, weights, provider)?;
    Ok(l1 + weights.dssim * dssim + weights.perceptual * p)
}

/// Sign with `sign(0) = 0`.
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn is_sentinel(n: &Vec3) -> bool {
    n.x == 0.0 && n.y == 0.0 && n.z == 0.0
}

/// Mean of `1 - n_r . n_t` over foreground pixels where neither normal is
/// missing. The gradient is with respect to the rendered normals.
pub fn normal_loss_with_grad(
    rendered: &ColorImage,
    target: &ColorImage,
    mask: &ScalarImage,
) -> Result<(f64, ColorImage)> {
    rendered.ensure_same_size(target, "normal loss")?;
    rendered.ensure_same_size(mask, "normal loss mask")?;
    let valid: Vec<usize> = (0..rendered.len())
        .filter(|&p| mask.data[p] > 0.5 && !is_sentinel(&rendered.data[p]) && !is_sentinel(&target.data[p]))
        .collect();
    let mut grad = ImagePlane::filled(rendered.width, rendered.height, Vec3::zeros());
    if valid.is_empty() {
        return Ok((0.0, grad));
    }
    let n = valid.len() as f64;
    let mut v = 0.0;
    for p in valid {
        let t = target.data[p].normalize();
        v += 1.0 - rendered.data[p].dot(&t);
        grad.data[p] = -t / n;
    }
    Ok((v / n, grad))
}

pub fn normal_loss(rendered: &ColorImage, target: &ColorImage, mask: &ScalarImage) -> Result<f64> {
    Ok(normal_loss_with_grad(rendered, target, mask)?.0)
}

/// Population variance of `s_u * s_v`; gradient with respect to the log-scales.
pub fn area_loss_with_grad(surfels: &[Surfel]) -> (f64, Vec<[f64; 2]>) {
    if surfels.is_empty() {
        return (0.0, Vec::new());
    }
    let n = surfels.len() as f64;
    let prods: Vec<f64> = surfels.iter().map(|s| s.scale()[0] * s.scale()[1]).collect();
    let mean = prods.iter().sum::<f64>() / n;
    let var = prods.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    let grad = prods
        .iter()
        .map(|p| {
            let g = 2.0 * (p - mean) / n * p;
            [g, g]
        })
        .collect();
    (var, grad)
}

pub fn area_loss(surfels: &[Surfel]) -> f64 {
    area_loss_with_grad(surfels).0
}

/// Mean of `exp(-(alpha - 0.5)^2 / 0.05)`; gradient with respect to the opacity logits.
pub fn opacity_loss_with_grad(surfels: &[Surfel]) -> (f64, Vec<f64>) {
    if surfels.is_empty() {
        return (0.0, Vec::new());
    }
    let n = surfels.len() as f64;
    let mut v = 0.0;
    let grad = surfels
        .iter()
        .map(|s| {
            let a = s.opacity();
            let e = (-(a - 0.5) * (a - 0.5) / 0.05).exp();
            v += e;
            e * (-2.0 * (a - 0.5) / 0.05) * a * (1.0 - a) / n
        })
        .collect();
    (v / n, grad)
}

pub fn opacity_loss(surfels: &[Surfel]) -> f64 {
    opacity_loss_with_grad(surfels).0
}

/// Mean binary cross-entropy of the alpha map against the mask.
pub fn mask_loss_with_grad(alpha: &ScalarImage, mask: &ScalarImage) -> Result<(f64, ScalarImage)> {
    alpha.ensure_same_size(mask, "mask loss")?;
    let n = alpha.len() as f64;
    let mut v = 0.0;
    let grad = alpha
        .data
        .iter()
        .zip(&mask.data)
        .map(|(&a, &m)| {
            let c = a.clamp(MASK_EPS, 1.0 - MASK_EPS);
            v -= m * c.ln() + (1.0 - m) * (1.0 - c).ln();
            if a < MASK_EPS || a > 1.0 - MASK_EPS {
                0.0
            } else {
                (-m / c + (1.0 - m) / (1.0 - c)) / n
            }
        })
        .collect();
    Ok((v / n, ImagePlane { width: alpha.width, height: alpha.height, data: grad }))
}

pub fn mask_loss(alpha: &ScalarImage, mask: &ScalarImage) -> Result<f64> {
    Ok(mask_loss_with_grad(alpha, mask)?.0)
}

/// Weighted gradients of the total loss with respect to the rendered maps
/// and the directly penalized surfel parameters.
#[derive(Clone, Debug)]
pub struct LossGradients {
    pub color: ColorImage,
    pub alpha: ScalarImage,
    pub normal: ColorImage,
    pub log_scale: Vec<[f64; 2]>,
    pub opacity_logit: Vec<f64>,
}

pub fn total_loss_with_grad(
    outputs: &RenderOutputs,
    targets: &LossTargets,
    surfels: &[Surfel],
    weights: &LossWeights,
    provider: &dyn PerceptualProvider,
) -> Result<(LossBreakdown, LossGradients)> {
    let mut b = LossBreakdown::default();
    let ([l1, dssim, perceptual], color) = photometric_with_grad(&outputs.color, targets.image, weights, provider)?;
    b.l1 = l1;
    b.dssim = dssim;
    b.perceptual = perceptual;

    let mut normal = ImagePlane::filled(outputs.color.width, outputs.color.height, Vec3::zeros());
    if let Some(tn) = targets.normals {
        let (v, g) = normal_loss_with_grad(&outputs.normal, tn, targets.mask)?;
        b.normal = v;
        normal = g.map(|x| x * weights.normal);
    }

    let (area, ga) = area_loss_with_grad(surfels);
    let (opacity, go) = opacity_loss_with_grad(surfels);
    b.area = area;
    b.opacity = opacity;
    let (ws, wa, wo) = (weights.self_supervised, weights.area, weights.opacity);

    let (mask, gm) = mask_loss_with_grad(&outputs.alpha, targets.mask)?;
    b.mask = mask;
    b.compose(weights);

    Ok((
        b,
        LossGradients {
            color,
            alpha: gm.map(|x| x * weights.mask),
            normal,
            log_scale: ga.iter().map(|g| [g[0] * ws * wa, g[1] * ws * wa]).collect(),
            opacity_logit: go.iter().map(|g| g * ws * wo).collect(),
        },
    ))
}

pub fn total_loss(
    outputs: &RenderOutputs,
    targets: &LossTargets,
    surfels: &[Surfel],
    weights: &LossWeights,
    provider: &dyn PerceptualProvider,
) -> Result<LossBreakdown> {
    Ok(total_loss_with_grad(outputs, targets, surfels, weights, provider)?.0)
}

pub fn mse(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    a.ensure_same_size(b, "mse")?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm_squared()).sum();
    Ok(s / (3 * a.len()) as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < PSNR_MSE_FLOOR {
        PSNR_CAP
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub fn psnr(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// PSNR over pixels where `mask > 0.5`.
pub fn masked_psnr(a: &ColorImage, b: &ColorImage, mask: &ScalarImage) -> Result<f64> {
    a.ensure_same_size(b, "masked psnr")?;
    a.ensure_same_size(mask, "masked psnr mask")?;
    let (mut s, mut n) = (0.0, 0usize);
    for p in 0..a.len() {
        if mask.data[p] > 0.5 {
            s += (a.data[p] - b.data[p]).norm_squared();
            n += 3;
        }
    }
    if n == 0 {
        return Err(Error::Input("masked psnr: empty mask".into()));
    }
    Ok(psnr_from_mse(s / n as f64))
}

/// Mean of the SSIM map over pixels where `mask > 0.5`.
pub fn masked_ssim(a: &ColorImage, b: &ColorImage, mask: &ScalarImage) -> Result<f64> {
    a.ensure_same_size(b, "masked ssim")?;
    a.ensure_same_size(mask, "masked ssim mask")?;
    let map = ssim_map(a, b);
    let vals: Vec<f64> = (0..a.len()).filter(|&p| mask.data[p] > 0.5).map(|p| map.data[p]).collect();
    if vals.is_empty() {
        return Err(Error::Input("masked ssim: empty mask".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn checked_ssim(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    a.ensure_same_size(b, "ssim")?;
    Ok(ssim(a, b))
}
