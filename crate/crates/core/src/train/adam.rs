//! Adam over the flat surfel parameter vector, one learning rate per group.

use crate::error::{Error, Result};
use crate::geometry::sh::coeff_count;
use crate::geometry::{Quat, Surfel, Vec3};
use crate::gradients::check::FIXED_PARAMS;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Parameters per surfel for a given SH coefficient count.
pub fn params_per_surfel(sh_coeffs: usize) -> usize {
    FIXED_PARAMS + 3 * sh_coeffs
}

/// Appends a surfel's parameters in the gradient layout order.
pub fn push_params(s: &Surfel, out: &mut Vec<f64>) {
    out.extend(s.center.iter());
    let q = &s.rotation;
    out.extend([q.w, q.i, q.j, q.k]);
    out.extend(s.log_scale);
    out.push(s.opacity_logit);
    for c in &s.sh {
        out.extend(c.iter());
    }
}

pub fn flatten_surfels(surfels: &[Surfel]) -> Vec<f64> {
    let mut out = Vec::new();
    for s in surfels {
        push_params(s, &mut out);
    }
    out
}

pub fn surfel_from_params(p: &[f64]) -> Surfel {
    let n_sh = (p.len() - FIXED_PARAMS) / 3;
    Surfel {
        center: Vec3::new(p[0], p[1], p[2]),
        rotation: Quat::new(p[3], p[4], p[5], p[6]),
        log_scale: [p[7], p[8]],
        opacity_logit: p[9],
        sh: (0..n_sh)
            .map(|k| Vec3::new(p[FIXED_PARAMS + 3 * k], p[FIXED_PARAMS + 3 * k + 1], p[FIXED_PARAMS + 3 * k + 2]))
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupRates {
    pub center: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
}

impl GroupRates {
    fn for_slot(&self, k: usize) -> f64 {
        match k {
            0..=2 => self.center,
            3..=6 => self.rotation,
            7..=8 => self.scale,
            9 => self.opacity,
            10..=12 => self.sh_dc,
            _ => self.sh_rest,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub sh_coeffs: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(surfel_count: usize, sh_degree: usize) -> Self {
        let sh_coeffs = coeff_count(sh_degree);
        let n = surfel_count * params_per_surfel(sh_coeffs);
        Adam { step: 0, sh_coeffs, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn stride(&self) -> usize {
        params_per_surfel(self.sh_coeffs)
    }

    pub fn surfel_count(&self) -> usize {
        self.m.len() / self.stride()
    }

    /// One update of `params` in place.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], rates: &GroupRates) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "optimizer holds {} values, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let stride = self.stride();
        for (idx, ((p, g), (m, v))) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .enumerate()
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let lr = rates.for_slot(idx % stride);
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + EPSILON);
        }
        Ok(())
    }

    /// Rebuilds the state after densification: `origin[i]` names the old
    /// surfel whose moments new surfel `i` keeps; `None` starts from zero.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let stride = self.stride();
        let mut m = vec![0.0; origin.len() * stride];
        let mut v = vec![0.0; origin.len() * stride];
        for (i, o) in origin.iter().enumerate() {
            if let Some(o) = o {
                m[i * stride..(i + 1) * stride].copy_from_slice(&self.m[o * stride..(o + 1) * stride]);
                v[i * stride..(i + 1) * stride].copy_from_slice(&self.v[o * stride..(o + 1) * stride]);
            }
        }
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(lr: f64) -> GroupRates {
        GroupRates { center: lr, rotation: lr, scale: lr, opacity: lr, sh_dc: lr, sh_rest: lr }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut a = Adam::new(1, 0);
        let mut p = vec![1.0; 13];
        let g: Vec<f64> = (0..13).map(|k| if k % 2 == 0 { 0.3 } else { -2.0 }).collect();
        a.update(&mut p, &g, &rates(0.01)).unwrap();
        for (k, v) in p.iter().enumerate() {
            let expected = if k % 2 == 0 { 0.99 } else { 1.01 };
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut a = Adam::new(2, 1);
        let mut p = vec![0.5; 2 * 22];
        a.update(&mut p, &vec![0.0; 44], &rates(0.1)).unwrap();
        assert!(p.iter().all(|v| *v == 0.5));
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut a = Adam::new(1, 0);
        let mut p = vec![3.0; 13];
        for _ in 0..3000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * (x - 1.0)).collect();
            a.update(&mut p, &g, &rates(0.01)).unwrap();
        }
        assert!(p.iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn remap_copies_and_zeroes() {
        let mut a = Adam::new(2, 0);
        for (k, m) in a.m.iter_mut().enumerate() {
            *m = k as f64;
        }
        a.remap(&[Some(1), None]);
        assert_eq!(a.m[0], 13.0);
        assert!(a.m[13..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn params_round_trip() {
        let s = Surfel::flat(Vec3::new(1.0, 2.0, 3.0), [0.1, 0.2], 0.3, 2);
        let mut v = Vec::new();
        push_params(&s, &mut v);
        assert_eq!(v.len(), params_per_surfel(9));
        assert_eq!(surfel_from_params(&v), s);
    }
}
