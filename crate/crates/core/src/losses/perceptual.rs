//! Pluggable perceptual term.

use crate::geometry::image::ColorImage;
use crate::geometry::{ImagePlane, Vec3};

/// Scalar image-similarity term and its gradient with respect to the first image.
pub trait PerceptualProvider: Send + Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, rendered: &ColorImage, target: &ColorImage) -> (f64, ColorImage);
}

/// Disabled term: always zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoPerceptual;

impl PerceptualProvider for NoPerceptual {
    fn name(&self) -> &str {
        "none"
    }

    fn evaluate(&self, rendered: &ColorImage, _target: &ColorImage) -> (f64, ColorImage) {
        (0.0, ImagePlane::filled(rendered.width, rendered.height, Vec3::zeros()))
    }
}

/// L1 distance between gradient-magnitude maps on a 2x image pyramid,
/// averaged over levels. A cheap, network-free stand-in for learned metrics.
#[derive(Clone, Copy, Debug)]
pub struct GradientMagnitudeProxy {
    pub levels: usize,
}

impl Default for GradientMagnitudeProxy {
    fn default() -> Self {
        GradientMagnitudeProxy { levels: 3 }
    }
}

const GM_EPS: f64 = 1e-8;

fn downsample(img: &ColorImage) -> ColorImage {
    let (w, h) = (img.width / 2, img.height / 2);
    ImagePlane::from_fn(w, h, |i, j| {
        (img.get(2 * i, 2 * j) + img.get(2 * i + 1, 2 * j) + img.get(2 * i, 2 * j + 1) + img.get(2 * i + 1, 2 * j + 1)) * 0.25
    })
}

fn upsample_grad(g: &ColorImage, w: usize, h: usize) -> ColorImage {
    let mut out = ImagePlane::filled(w, h, Vec3::zeros());
    for j in 0..g.height {
        for i in 0..g.width {
            let v = g.get(i, j) * 0.25;
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                *out.get_mut(2 * i + di, 2 * j + dj) += v;
            }
        }
    }
    out
}

fn diffs(img: &ColorImage, i: usize, j: usize) -> (Vec3, Vec3) {
    let c = img.get(i, j);
    let dx = if i + 1 < img.width { img.get(i + 1, j) - c } else { Vec3::zeros() };
    let dy = if j + 1 < img.height { img.get(i, j + 1) - c } else { Vec3::zeros() };
    (dx, dy)
}

impl PerceptualProvider for GradientMagnitudeProxy {
    fn name(&self) -> &str {
        "gradient-magnitude"
    }

    fn evaluate(&self, rendered: &ColorImage, target: &ColorImage) -> (f64, ColorImage) {
        let mut pyramid = vec![(rendered.clone(), target.clone())];
        while pyramid.len() < self.levels.max(1) {
            let (a, b) = pyramid.last().unwrap();
            if a.width < 4 || a.height < 4 {
                break;
            }
            pyramid.push((downsample(a), downsample(b)));
        }
        let levels = pyramid.len() as f64;
        let mut value = 0.0;
        let mut grads = Vec::with_capacity(pyramid.len());
        for (a, b) in &pyramid {
            let n = (3 * a.len()) as f64;
            let mut g = ImagePlane::filled(a.width, a.height, Vec3::zeros());
            for j in 0..a.height {
                for i in 0..a.width {
                    let (ax, ay) = diffs(a, i, j);
                    let (bx, by) = diffs(b, i, j);
                    for c in 0..3 {
                        let ga = (ax[c] * ax[c] + ay[c] * ay[c] + GM_EPS).sqrt();
                        let gb = (bx[c] * bx[c] + by[c] * by[c] + GM_EPS).sqrt();
                        value += (ga - gb).abs() / (n * levels);
                        let s = super::sign(ga - gb) / (n * levels);
                        let (gx, gy) = (s * ax[c] / ga, s * ay[c] / ga);
                        if i + 1 < a.width {
                            g.get_mut(i + 1, j)[c] += gx;
                            g.get_mut(i, j)[c] -= gx;
                        }
                        if j + 1 < a.height {
                            g.get_mut(i, j + 1)[c] += gy;
                            g.get_mut(i, j)[c] -= gy;
                        }
                    }
                }
            }
            grads.push(g);
        }
        let mut acc = grads.pop().unwrap();
        for k in (0..grads.len()).rev() {
            let (w, h) = (grads[k].width, grads[k].height);
            let up = upsample_grad(&acc, w, h);
            acc = grads[k].clone();
            for (o, u) in acc.data.iter_mut().zip(up.data) {
                *o += u;
            }
        }
        (value, acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, phase: f64) -> ColorImage {
        ImagePlane::from_fn(w, h, |i, j| {
            let t = (i as f64 * 0.7 + j as f64 * 0.4 + phase).sin();
            Vec3::new(0.5 + 0.3 * t, 0.4 + 0.2 * (t * 1.3).cos(), 0.6 - 0.25 * t * t)
        })
    }

    #[test]
    fn identical_images_score_zero() {
        let a = img(20, 18, 0.0);
        assert_eq!(GradientMagnitudeProxy::default().evaluate(&a, &a).0, 0.0);
        assert_eq!(NoPerceptual.evaluate(&a, &img(20, 18, 1.0)).0, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = img(17, 13, 0.0);
        let b = img(17, 13, 0.9);
        let p = GradientMagnitudeProxy { levels: 3 };
        let (_, g) = p.evaluate(&a, &b);
        let h = 1e-7;
        for (k, c) in [(0usize, 0usize), (30, 1), (77, 2), (150, 0), (220, 2)] {
            let mut ap = a.clone();
            ap.data[k][c] += h;
            let mut am = a.clone();
            am.data[k][c] -= h;
            let fd = (p.evaluate(&ap, &b).0 - p.evaluate(&am, &b).0) / (2.0 * h);
            assert!((fd - g.data[k][c]).abs() < 1e-6, "{k},{c}: {fd} vs {}", g.data[k][c]);
        }
    }
}
