//! Scalar and small-matrix helpers shared by every stage.

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector4};

pub type Vec3 = Vector3<f64>;
pub type Vec4 = Vector4<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;
pub type Quat = Quaternion<f64>;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`sigmoid`], clamped away from 0 and 1.
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Rotation matrix of `q / |q|`.
pub fn quat_to_matrix(q: &Quat) -> Mat3 {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls gradients on the first two rotation columns back onto the raw
/// (possibly unnormalized) quaternion `q`.
pub fn quat_columns_backward(q: &Quat, grad_col0: &Vec3, grad_col1: &Vec3) -> Quat {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    let (a, b) = (grad_col0, grad_col1);
    let dw = a.dot(&Vec3::new(0.0, 2.0 * z, -2.0 * y)) + b.dot(&Vec3::new(-2.0 * z, 0.0, 2.0 * x));
    let dx = a.dot(&Vec3::new(0.0, 2.0 * y, 2.0 * z)) + b.dot(&Vec3::new(2.0 * y, -4.0 * x, 2.0 * w));
    let dy = a.dot(&Vec3::new(-4.0 * y, 2.0 * x, -2.0 * w)) + b.dot(&Vec3::new(2.0 * x, 0.0, 2.0 * z));
    let dz = a.dot(&Vec3::new(-4.0 * z, 2.0 * w, 2.0 * x)) + b.dot(&Vec3::new(-2.0 * w, -4.0 * z, 2.0 * y));
    let g = Vec4::new(dw, dx, dy, dz);
    let qh = Vec4::new(w, x, y, z);
    let g = (g - qh * qh.dot(&g)) / n;
    Quat::new(g[0], g[1], g[2], g[3])
}

pub fn quat_from_matrix(m: &Mat3) -> Quat {
    let r = Rotation3::from_matrix_unchecked(*m);
    UnitQuaternion::from_rotation_matrix(&r).into_inner()
}

pub fn axis_angle_to_matrix(v: &Vec3) -> Mat3 {
    Rotation3::new(*v).into_inner()
}

/// Rotation factor of the polar decomposition `A = Q·S`, or `None` when
/// `det(A) <= 1e-9`.
pub fn polar_rotation(a: &Mat3) -> Option<Mat3> {
    if a.determinant() <= 1e-9 {
        return None;
    }
    let svd = a.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut q = u * v_t;
    if q.determinant() < 0.0 {
        // det(A) > 0 so this only happens through round-off on a tiny singular value
        let mut u2 = u;
        let last = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(2);
        u2.column_mut(last).neg_mut();
        q = u2 * v_t;
    }
    Some(q)
}

pub fn rigid(rotation: &Mat3, translation: &Vec3) -> Mat4 {
    let mut m = Mat4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
    m
}

pub fn linear_part(m: &Mat4) -> Mat3 {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

pub fn translation_part(m: &Mat4) -> Vec3 {
    m.fixed_view::<3, 1>(0, 3).into_owned()
}

pub fn transform_point(m: &Mat4, p: &Vec3) -> Vec3 {
    linear_part(m) * p + translation_part(m)
}

/// Inverse of a rigid transform without a general 4x4 inversion.
pub fn rigid_inverse(m: &Mat4) -> Mat4 {
    let r_t = linear_part(m).transpose();
    rigid(&r_t, &(-(r_t * translation_part(m))))
}

/// Max deviation of `RᵀR` from identity.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).abs().max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_logit_roundtrip() {
        for p in [0.01, 0.1, 0.5, 0.9, 0.995] {
            assert!((sigmoid(logit(p)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn quaternion_matrix_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let q = Quat::new(rng.random(), rng.random(), rng.random(), rng.random::<f64>() - 0.5);
            let ours = quat_to_matrix(&q);
            let theirs = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
            assert!((ours - theirs).abs().max() < 1e-12);
        }
    }

    #[test]
    fn quaternion_backward_matches_finite_differences() {
        let q = Quat::new(0.7, -0.2, 0.4, 0.3);
        let ga = Vec3::new(0.3, -1.0, 0.2);
        let gb = Vec3::new(-0.5, 0.1, 0.9);
        let f = |q: &Quat| {
            let r = quat_to_matrix(q);
            ga.dot(&r.column(0).into_owned()) + gb.dot(&r.column(1).into_owned())
        };
        let g = quat_columns_backward(&q, &ga, &gb);
        let eps = 1e-6;
        for i in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp.coords[i] += eps;
            qm.coords[i] -= eps;
            let fd = (f(&qp) - f(&qm)) / (2.0 * eps);
            assert!((fd - g.coords[i]).abs() < 1e-8, "component {i}");
        }
    }

    #[test]
    fn polar_of_rotation_is_itself() {
        let r = axis_angle_to_matrix(&Vec3::new(0.3, -0.8, 0.5));
        let q = polar_rotation(&(r * 2.5)).unwrap();
        assert!((q - r).abs().max() < 1e-12);
        assert!(polar_rotation(&Mat3::zeros()).is_none());
    }

    #[test]
    fn rigid_inverse_inverts() {
        let m = rigid(&axis_angle_to_matrix(&Vec3::new(0.1, 0.2, 0.3)), &Vec3::new(1.0, -2.0, 0.5));
        assert!((m * rigid_inverse(&m) - Mat4::identity()).abs().max() < 1e-12);
    }
}
