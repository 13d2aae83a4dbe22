//! Linear blend skinning of points and surfels.

use rayon::prelude::*;

use super::field::{query_weights, WeightField};
use super::pose::JointTransforms;
use super::template::WeightRow;
use crate::geometry::math::{linear_part, orthonormality_error, polar_rotation, quat_from_matrix, translation_part};
use crate::geometry::{Mat3, Mat4, Surfel, Vec3};

/// The blended affine map applied to one surfel, kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SkinnedFrame {
    pub linear: Mat3,
    pub translation: Vec3,
    /// Rotation factor of `linear` (identity when degenerate).
    pub rotation: Mat3,
    /// `det(linear) <= 1e-9`; the tangent frame was left canonical.
    pub degenerate: bool,
}

impl SkinnedFrame {
    pub fn identity() -> Self {
        SkinnedFrame {
            linear: Mat3::identity(),
            translation: Vec3::zeros(),
            rotation: Mat3::identity(),
            degenerate: false,
        }
    }

    /// Frame for an arbitrary blended affine transform.
    pub fn from_affine(a: &Mat4) -> Self {
        let linear = linear_part(a);
        let (rotation, degenerate) = if orthonormality_error(&linear) < 1e-12 && linear.determinant() > 0.0 {
            (linear, false)
        } else {
            match polar_rotation(&linear) {
                Some(q) => (q, false),
                None => (Mat3::identity(), true),
            }
        };
        SkinnedFrame {
            linear,
            translation: translation_part(a),
            rotation,
            degenerate,
        }
    }

    /// Applies the frame to a canonical surfel.
    pub fn apply(&self, surfel: &Surfel) -> Surfel {
        let mut posed = surfel.clone();
        posed.center = self.linear * surfel.center + self.translation;
        let q = surfel.rotation / surfel.rotation.norm();
        posed.rotation = quat_from_matrix(&self.rotation) * q;
        posed
    }
}

/// `Σ_k w_k G_k`.
pub fn blend_transforms(weights: &WeightRow, transforms: &JointTransforms) -> Mat4 {
    weights
        .entries
        .iter()
        .fold(Mat4::zeros(), |acc, &(j, w)| acc + transforms.0[j] * w)
}

/// `p' = Σ_k w_k G_k p`.
pub fn skin_point(p: &Vec3, weights: &WeightRow, transforms: &JointTransforms) -> Vec3 {
    let a = blend_transforms(weights, transforms);
    linear_part(&a) * p + translation_part(&a)
}

pub fn skin_surfel_with_weights(
    surfel: &Surfel,
    weights: &WeightRow,
    transforms: &JointTransforms,
) -> (Surfel, SkinnedFrame) {
    let frame = SkinnedFrame::from_affine(&blend_transforms(weights, transforms));
    (frame.apply(surfel), frame)
}

/// Skins one canonical surfel, querying its weights at the current center.
pub fn skin_surfel(surfel: &Surfel, field: &WeightField, transforms: &JointTransforms) -> (Surfel, SkinnedFrame) {
    skin_surfel_with_weights(surfel, &query_weights(field, &surfel.center), transforms)
}

/// Skins a whole set, re-querying every weight row from the field.
pub fn skin_surfels(
    surfels: &[Surfel],
    field: &WeightField,
    transforms: &JointTransforms,
) -> (Vec<Surfel>, Vec<SkinnedFrame>) {
    surfels.par_iter().map(|s| skin_surfel(s, field, transforms)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::math::{axis_angle_to_matrix, rigid};

    #[test]
    fn identity_transforms_fix_points() {
        let t = JointTransforms::identity(3);
        let w = WeightRow { entries: vec![(0, 0.2), (2, 0.8)] };
        let p = Vec3::new(0.3, -2.0, 1.0);
        assert!((skin_point(&p, &w, &t) - p).norm() < 1e-15);
    }

    #[test]
    fn single_weight_applies_joint_transform() {
        let g = rigid(&axis_angle_to_matrix(&Vec3::new(0.4, 0.1, -0.7)), &Vec3::new(1.0, 2.0, 3.0));
        let t = JointTransforms(vec![Mat4::identity(), g]);
        let p = Vec3::new(0.5, 0.5, -0.1);
        let expected = linear_part(&g) * p + translation_part(&g);
        assert!((skin_point(&p, &WeightRow::one_hot(1), &t) - expected).norm() < 1e-15);
    }

    #[test]
    fn half_half_translations_average() {
        let (t1, t2) = (Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 4.0, -2.0));
        let t = JointTransforms(vec![Mat4::new_translation(&t1), Mat4::new_translation(&t2)]);
        let w = WeightRow { entries: vec![(0, 0.5), (1, 0.5)] };
        let p = Vec3::new(0.2, 0.2, 0.2);
        assert!((skin_point(&p, &w, &t) - (p + (t1 + t2) / 2.0)).norm() < 1e-15);
    }

    #[test]
    fn rigid_weight_rotates_frame_exactly() {
        let r = axis_angle_to_matrix(&Vec3::new(0.0, 1.1, 0.3));
        let t = JointTransforms(vec![rigid(&r, &Vec3::new(0.0, 1.0, 0.0))]);
        let s = Surfel::from_frame(Vec3::new(1.0, 0.0, 0.0), Vec3::x(), Vec3::z(), [0.1, 0.2], 0.5, vec![Vec3::zeros()]);
        let (posed, frame) = skin_surfel_with_weights(&s, &WeightRow::one_hot(0), &t);
        assert!(!frame.degenerate);
        assert!((posed.rotation_matrix() - r * s.rotation_matrix()).abs().max() < 1e-12);
        assert_eq!(posed.log_scale, s.log_scale);
    }

    #[test]
    fn degenerate_blend_keeps_canonical_frame() {
        let flip = rigid(&axis_angle_to_matrix(&Vec3::new(0.0, 0.0, std::f64::consts::PI)), &Vec3::zeros());
        let t = JointTransforms(vec![Mat4::identity(), flip]);
        let w = WeightRow { entries: vec![(0, 0.5), (1, 0.5)] };
        let s = Surfel::flat(Vec3::new(0.0, 0.0, 1.0), [0.1, 0.1], 0.5, 0);
        let (posed, frame) = skin_surfel_with_weights(&s, &w, &t);
        assert!(frame.degenerate);
        assert!((posed.rotation_matrix() - s.rotation_matrix()).abs().max() < 1e-12);
    }
}
