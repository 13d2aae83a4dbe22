use super::math::{logit, quat_from_matrix, quat_to_matrix, sigmoid, Mat3, Mat4, Quat, Vec3};
use super::sh::coeff_count;

/// One 2D Gaussian disc.
///
/// Parameters are stored in unconstrained form: a (not necessarily unit)
/// quaternion for the tangent frame, log-scales and an opacity logit. The
/// frame is `[r_u, r_v, r_w]` = columns of the rotation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Surfel {
    pub center: Vec3,
    pub rotation: Quat,
    pub log_scale: [f64; 2],
    pub opacity_logit: f64,
    pub sh: Vec<Vec3>,
}

impl Surfel {
    /// Surfel with an explicit tangent frame. `tangent_v` is re-orthogonalized
    /// against `tangent_u`.
    pub fn from_frame(
        center: Vec3,
        tangent_u: Vec3,
        tangent_v: Vec3,
        scale: [f64; 2],
        opacity: f64,
        sh: Vec<Vec3>,
    ) -> Self {
        let ru = tangent_u.normalize();
        let rv = (tangent_v - ru * ru.dot(&tangent_v)).normalize();
        let rw = ru.cross(&rv);
        let r = Mat3::from_columns(&[ru, rv, rw]);
        Surfel {
            center,
            rotation: quat_from_matrix(&r),
            log_scale: [scale[0].ln(), scale[1].ln()],
            opacity_logit: logit(opacity),
            sh,
        }
    }

    /// Gray surfel in the xy-plane, SH degree `sh_degree`.
    pub fn flat(center: Vec3, scale: [f64; 2], opacity: f64, sh_degree: usize) -> Self {
        Surfel::from_frame(
            center,
            Vec3::x(),
            Vec3::y(),
            scale,
            opacity,
            vec![Vec3::zeros(); coeff_count(sh_degree)],
        )
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        quat_to_matrix(&self.rotation)
    }

    pub fn tangent_u(&self) -> Vec3 {
        self.rotation_matrix().column(0).into_owned()
    }

    pub fn tangent_v(&self) -> Vec3 {
        self.rotation_matrix().column(1).into_owned()
    }

    pub fn scale(&self) -> [f64; 2] {
        [self.log_scale[0].exp(), self.log_scale[1].exp()]
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn max_scale(&self) -> f64 {
        let [a, b] = self.scale();
        a.max(b)
    }

    /// `H` mapping homogeneous local coordinates `(u, v, 1, 1)` to world space.
    pub fn transform_matrix(&self) -> Mat4 {
        let r = self.rotation_matrix();
        let [su, sv] = self.scale();
        let mut h = Mat4::zeros();
        h.fixed_view_mut::<3, 1>(0, 0).copy_from(&(r.column(0) * su));
        h.fixed_view_mut::<3, 1>(0, 1).copy_from(&(r.column(1) * sv));
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.center);
        h[(3, 3)] = 1.0;
        h
    }

    /// Renormalizes the stored quaternion.
    pub fn normalize_rotation(&mut self) {
        let n = self.rotation.norm();
        if n > 0.0 && n.is_finite() {
            self.rotation /= n;
        } else {
            self.rotation = Quat::identity();
        }
    }
}

/// World point at local coordinates `(u, v)` on the splat plane.
pub fn surfel_point(surfel: &Surfel, u: f64, v: f64) -> Vec3 {
    let [su, sv] = surfel.scale();
    surfel.center + surfel.tangent_u() * (su * u) + surfel.tangent_v() * (sv * v)
}

/// Unnormalized Gaussian falloff of the standard 2D kernel at local `(u, v)`.
pub fn gaussian_weight(u: f64, v: f64) -> f64 {
    (-(u * u + v * v) / 2.0).exp()
}

/// Unit normal `r_u × r_v`.
pub fn surfel_normal(surfel: &Surfel) -> Vec3 {
    let r = surfel.rotation_matrix();
    r.column(0).cross(&r.column(1)).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::math::Vec4;
    use proptest::prelude::*;

    fn random_surfel(seed: [f64; 9]) -> Surfel {
        let mut s = Surfel::flat(Vec3::new(seed[0], seed[1], seed[2]), [seed[3], seed[4]], 0.5, 0);
        s.rotation = Quat::new(seed[5], seed[6], seed[7], seed[8]);
        s.normalize_rotation();
        s
    }

    #[test]
    fn center_at_origin_of_chart() {
        let s = random_surfel([0.3, -1.0, 2.0, 0.5, 0.2, 0.9, 0.1, -0.3, 0.2]);
        assert!((surfel_point(&s, 0.0, 0.0) - s.center).norm() < 1e-15);
    }

    #[test]
    fn axis_aligned_point() {
        let s = Surfel::flat(Vec3::zeros(), [2.0, 3.0], 0.5, 0);
        assert!((surfel_point(&s, 1.0, 1.0) - Vec3::new(2.0, 3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn gaussian_closed_forms() {
        assert_eq!(gaussian_weight(0.0, 0.0), 1.0);
        assert!((gaussian_weight(1.0, 0.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((gaussian_weight(1.0, 0.0) - 0.60653).abs() < 1e-5);
        assert_eq!(gaussian_weight(3.0, 4.0), (-12.5f64).exp());
    }

    #[test]
    fn normal_of_xy_frame_and_swap() {
        let s = Surfel::flat(Vec3::zeros(), [1.0, 1.0], 0.5, 0);
        assert!((surfel_normal(&s) - Vec3::z()).norm() < 1e-15);
        let swapped = Surfel::from_frame(Vec3::zeros(), Vec3::y(), Vec3::x(), [1.0, 1.0], 0.5, vec![]);
        assert!((surfel_normal(&swapped) + Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn normals_are_unit_over_random_rotations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let mut s = Surfel::flat(Vec3::zeros(), [1.0, 1.0], 0.5, 0);
            s.rotation = Quat::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let r = s.rotation_matrix();
            assert!((r.column(0).cross(&r.column(1)).norm() - 1.0).abs() < 1e-12);
            assert!(r.column(0).dot(&r.column(1)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn point_matches_homogeneous_product(
            c in prop::array::uniform9(-2.0f64..2.0), u in -3.0f64..3.0, v in -3.0f64..3.0,
        ) {
            let s = random_surfel([c[0], c[1], c[2], c[3].abs() + 0.1, c[4].abs() + 0.1, c[5], c[6], c[7], c[8] + 2.5]);
            let h = s.transform_matrix() * Vec4::new(u, v, 1.0, 1.0);
            let p = surfel_point(&s, u, v);
            prop_assert!((h.xyz() / h.w - p).norm() < 1e-12);
        }

        #[test]
        fn point_is_affine_in_chart(u in -3.0f64..3.0, v in -3.0f64..3.0, a in -4.0f64..4.0) {
            let s = random_surfel([0.1, 0.2, 0.3, 0.7, 1.3, 0.4, -0.2, 0.6, 0.5]);
            let lhs = surfel_point(&s, a * u, a * v) - s.center;
            let rhs = (surfel_point(&s, u, v) - s.center) * a;
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn gaussian_is_rotation_invariant(r in 0.0f64..4.0, t1 in 0.0f64..6.3, t2 in 0.0f64..6.3) {
            let a = gaussian_weight(r * t1.cos(), r * t1.sin());
            let b = gaussian_weight(r * t2.cos(), r * t2.sin());
            prop_assert!((a - b).abs() < 1e-14);
        }
    }
}
