use serde::{Deserialize, Serialize};

use super::template::SkinnedTemplate;
use crate::error::{Error, Result};
use crate::geometry::math::{axis_angle_to_matrix, rigid, rigid_inverse};
use crate::geometry::{Mat4, Vec3};

/// Per-joint local rotations (axis-angle, radians) plus a root translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub rotations: Vec<[f64; 3]>,
    #[serde(default)]
    pub translation: [f64; 3],
}

impl PoseParams {
    pub fn identity(joint_count: usize) -> Self {
        PoseParams {
            rotations: vec![[0.0; 3]; joint_count],
            translation: [0.0; 3],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.rotations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.rotations.iter().flatten().chain(self.translation.iter()).all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::Input("pose contains non-finite values".into()))
        }
    }
}

/// Canonical-to-posed rigid transform of every joint.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTransforms(pub Vec<Mat4>);

impl JointTransforms {
    pub fn identity(joint_count: usize) -> Self {
        JointTransforms(vec![Mat4::identity(); joint_count])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Forward kinematics. Each joint rotates about its own rest origin; the
/// result maps canonical space to posed space: `G_k = world_k * rest_k^-1`.
pub fn pose_to_joint_transforms(template: &SkinnedTemplate, pose: &PoseParams) -> Result<JointTransforms> {
    let k = template.joint_count();
    if pose.joint_count() != k {
        return Err(Error::Input(format!(
            "pose has {} joints, template has {k}",
            pose.joint_count()
        )));
    }
    pose.validate()?;
    let order = template.topological_order()?;
    let rest = &template.rest_joint_transforms;
    let mut world = vec![Mat4::identity(); k];
    for j in order {
        let rot = rigid(&axis_angle_to_matrix(&Vec3::from(pose.rotations[j])), &Vec3::zeros());
        world[j] = match template.joint_parents[j] {
            p if p < 0 => Mat4::new_translation(&Vec3::from(pose.translation)) * rest[j] * rot,
            p => {
                let p = p as usize;
                world[p] * (rigid_inverse(&rest[p]) * rest[j]) * rot
            }
        };
    }
    Ok(JointTransforms(
        world.iter().zip(rest).map(|(w, r)| w * rigid_inverse(r)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::math::{linear_part, translation_part, transform_point};
    use crate::skinning::template::WeightRow;

    fn chain() -> SkinnedTemplate {
        SkinnedTemplate {
            rest_vertices: vec![Vec3::zeros()],
            faces: vec![],
            joint_parents: vec![-1, 0],
            rest_joint_transforms: vec![
                Mat4::new_translation(&Vec3::new(0.5, 0.0, 0.0)),
                Mat4::new_translation(&Vec3::new(1.5, 0.0, 0.0)),
            ],
            vertex_weights: vec![WeightRow::one_hot(0)],
        }
    }

    #[test]
    fn identity_pose_gives_identity_transforms() {
        let g = pose_to_joint_transforms(&chain(), &PoseParams::identity(2)).unwrap();
        for m in &g.0 {
            assert!((m - Mat4::identity()).abs().max() < 1e-15);
        }
    }

    #[test]
    fn root_rotation_pivots_whole_chain_about_root() {
        let mut pose = PoseParams::identity(2);
        pose.rotations[0] = [0.0, 0.0, std::f64::consts::FRAC_PI_2];
        let g = pose_to_joint_transforms(&chain(), &pose).unwrap();
        let r0 = axis_angle_to_matrix(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        for m in &g.0 {
            assert!((linear_part(m) - r0).abs().max() < 1e-12);
            // root pivot is fixed
            assert!((transform_point(m, &Vec3::new(0.5, 0.0, 0.0)) - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
        }
        // the elbow swings up to (0.5, 1.0, 0)
        let elbow = transform_point(&g.0[1], &Vec3::new(1.5, 0.0, 0.0));
        assert!((elbow - Vec3::new(0.5, 1.0, 0.0)).norm() < 1e-12);
        assert!((translation_part(&g.0[0]) - translation_part(&g.0[1])).norm() < 1e-12);
    }

    #[test]
    fn leaf_rotation_leaves_root_alone() {
        let mut pose = PoseParams::identity(2);
        pose.rotations[1] = [0.3, -0.2, 1.0];
        let g = pose_to_joint_transforms(&chain(), &pose).unwrap();
        assert!((g.0[0] - Mat4::identity()).abs().max() < 1e-15);
        // leaf pivots about its own origin
        let e = transform_point(&g.0[1], &Vec3::new(1.5, 0.0, 0.0));
        assert!((e - Vec3::new(1.5, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn joint_count_mismatch_is_input_error() {
        assert!(matches!(
            pose_to_joint_transforms(&chain(), &PoseParams::identity(3)),
            Err(Error::Input(_))
        ));
    }
}
