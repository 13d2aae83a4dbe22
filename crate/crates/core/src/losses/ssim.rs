//! SSIM with an 11x11 Gaussian window (sigma 1.5), zero-padded "same"
//! filtering, and its gradient with respect to the first image.

use crate::geometry::image::{ColorImage, ScalarImage};
use crate::geometry::{ImagePlane, Vec3};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

pub fn gaussian_taps() -> [f64; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut taps = [0.0; WINDOW];
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as f64 - r;
        *t = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.map(|t| t / s)
}

/// Separable zero-padded filter. Symmetric taps make it self-adjoint.
fn blur(src: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let ii = i as isize + k as isize - r;
                if ii >= 0 && (ii as usize) < w {
                    acc += t * src[j * w + ii as usize];
                }
            }
            tmp[j * w + i] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let jj = j as isize + k as isize - r;
                if jj >= 0 && (jj as usize) < h {
                    acc += t * tmp[jj as usize * w + i];
                }
            }
            out[j * w + i] = acc;
        }
    }
    out
}

struct Moments {
    mx: Vec<f64>,
    my: Vec<f64>,
    exx: Vec<f64>,
    eyy: Vec<f64>,
    exy: Vec<f64>,
}

fn moments(x: &[f64], y: &[f64], w: usize, h: usize, taps: &[f64; WINDOW]) -> Moments {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    Moments {
        mx: blur(x, w, h, taps),
        my: blur(y, w, h, taps),
        exx: blur(&xx, w, h, taps),
        eyy: blur(&yy, w, h, taps),
        exy: blur(&xy, w, h, taps),
    }
}

struct Terms {
    a1: f64,
    a2: f64,
    b1: f64,
    b2: f64,
}

fn terms(m: &Moments, p: usize) -> Terms {
    let (mx, my) = (m.mx[p], m.my[p]);
    Terms {
        a1: 2.0 * mx * my + C1,
        a2: 2.0 * (m.exy[p] - mx * my) + C2,
        b1: mx * mx + my * my + C1,
        b2: (m.exx[p] - mx * mx) + (m.eyy[p] - my * my) + C2,
    }
}

/// Per-pixel SSIM map of one channel.
pub fn ssim_map_scalar(x: &ScalarImage, y: &ScalarImage) -> ScalarImage {
    let taps = gaussian_taps();
    let m = moments(&x.data, &y.data, x.width, x.height, &taps);
    let data = (0..x.len())
        .map(|p| {
            let t = terms(&m, p);
            t.a1 * t.a2 / (t.b1 * t.b2)
        })
        .collect();
    ImagePlane { width: x.width, height: x.height, data }
}

/// Per-pixel SSIM averaged over the three channels.
pub fn ssim_map(a: &ColorImage, b: &ColorImage) -> ScalarImage {
    let maps: Vec<ScalarImage> = (0..3).map(|c| ssim_map_scalar(&a.channel(c), &b.channel(c))).collect();
    ImagePlane {
        width: a.width,
        height: a.height,
        data: (0..a.len()).map(|p| (maps[0].data[p] + maps[1].data[p] + maps[2].data[p]) / 3.0).collect(),
    }
}

/// Weighted sum `sum_p weight_p * S_p` for one channel and its gradient with
/// respect to `x`.
pub fn ssim_weighted_with_grad(x: &ScalarImage, y: &ScalarImage, weight: &[f64]) -> (f64, Vec<f64>) {
    let (w, h) = (x.width, x.height);
    let taps = gaussian_taps();
    let m = moments(&x.data, &y.data, w, h, &taps);
    let n = x.len();
    let (mut ga, mut gb, mut gc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut total = 0.0;
    for p in 0..n {
        let t = terms(&m, p);
        let den = t.b1 * t.b2;
        let s = t.a1 * t.a2 / den;
        total += weight[p] * s;
        let (mx, my) = (m.mx[p], m.my[p]);
        // partials with respect to the raw moments mx, E[x^2], E[xy]
        let d_mx = 2.0 * my * (t.a2 - t.a1) / den - s * (2.0 * mx / t.b1 - 2.0 * mx / t.b2);
        let d_exx = -s / t.b2;
        let d_exy = 2.0 * t.a1 / den;
        ga[p] = weight[p] * d_mx;
        gb[p] = weight[p] * d_exx;
        gc[p] = weight[p] * d_exy;
    }
    let (ba, bb, bc) = (blur(&ga, w, h, &taps), blur(&gb, w, h, &taps), blur(&gc, w, h, &taps));
    let grad = (0..n).map(|q| ba[q] + 2.0 * x.data[q] * bb[q] + y.data[q] * bc[q]).collect();
    (total, grad)
}

/// Mean SSIM over all pixels and channels.
pub fn ssim(a: &ColorImage, b: &ColorImage) -> f64 {
    let map = ssim_map(a, b);
    map.data.iter().sum::<f64>() / map.len() as f64
}

/// Mean SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &ColorImage, b: &ColorImage) -> (f64, ColorImage) {
    let n = a.len();
    let weight = vec![1.0 / (3 * n) as f64; n];
    let mut grad = ImagePlane::filled(a.width, a.height, Vec3::zeros());
    let mut total = 0.0;
    for c in 0..3 {
        let (v, g) = ssim_weighted_with_grad(&a.channel(c), &b.channel(c), &weight);
        total += v;
        for (out, gv) in grad.data.iter_mut().zip(g) {
            out[c] = gv;
        }
    }
    (total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct windowed SSIM, written without separability.
    fn naive_ssim(x: &ScalarImage, y: &ScalarImage) -> f64 {
        let (w, h) = (x.width as isize, x.height as isize);
        let g1 = gaussian_taps();
        let mut total = 0.0;
        for j in 0..h {
            for i in 0..w {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dj in -5..=5isize {
                    for di in -5..=5isize {
                        let (ii, jj) = (i + di, j + dj);
                        if ii < 0 || jj < 0 || ii >= w || jj >= h {
                            continue;
                        }
                        let g = g1[(di + 5) as usize] * g1[(dj + 5) as usize];
                        let (a, b) = (*x.get(ii as usize, jj as usize), *y.get(ii as usize, jj as usize));
                        mx += g * a;
                        my += g * b;
                        xx += g * a * a;
                        yy += g * b * b;
                        xy += g * a * b;
                    }
                }
                let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                total += (2.0 * mx * my + C1) * (2.0 * cxy + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2));
            }
        }
        total / (w * h) as f64
    }

    fn pattern(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> ScalarImage {
        ImagePlane::from_fn(w, h, f)
    }

    #[test]
    fn taps_are_normalized_and_symmetric() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for k in 0..WINDOW {
            assert_eq!(t[k], t[WINDOW - 1 - k]);
        }
    }

    #[test]
    fn agrees_with_direct_window() {
        let x = pattern(19, 14, |i, j| (0.5 + 0.4 * ((i * 7 + j * 3) as f64 * 0.37).sin()).clamp(0.0, 1.0));
        let y = pattern(19, 14, |i, j| (0.45 + 0.35 * ((i * 5 + j * 11) as f64 * 0.21).cos()).clamp(0.0, 1.0));
        let map = ssim_map_scalar(&x, &y);
        let fast = map.data.iter().sum::<f64>() / map.len() as f64;
        assert!((fast - naive_ssim(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn identical_is_one_and_symmetric() {
        let x = pattern(16, 16, |i, j| ((i ^ j) % 5) as f64 / 4.0);
        let y = pattern(16, 16, |i, j| ((i + 2 * j) % 7) as f64 / 6.0);
        let m = ssim_map_scalar(&x, &x);
        assert!(m.data.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let a = ssim_map_scalar(&x, &y);
        let b = ssim_map_scalar(&y, &x);
        for (p, q) in a.data.iter().zip(&b.data) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = pattern(13, 12, |i, j| 0.5 + 0.3 * ((i * 3 + j) as f64 * 0.5).sin());
        let y = pattern(13, 12, |i, j| 0.4 + 0.2 * ((i + j * 2) as f64 * 0.3).cos());
        let weight: Vec<f64> = (0..x.len()).map(|p| 1.0 + (p % 3) as f64).collect();
        let (_, g) = ssim_weighted_with_grad(&x, &y, &weight);
        let h = 1e-6;
        for p in [0, 7, 40, 77, 155] {
            let mut xp = x.clone();
            xp.data[p] += h;
            let mut xm = x.clone();
            xm.data[p] -= h;
            let fd = (ssim_weighted_with_grad(&xp, &y, &weight).0 - ssim_weighted_with_grad(&xm, &y, &weight).0) / (2.0 * h);
            assert!((fd - g[p]).abs() < 1e-6 * (1.0 + fd.abs()), "{p}: {fd} vs {}", g[p]);
        }
    }
}
