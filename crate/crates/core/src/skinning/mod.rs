//! Canonical-to-posed deformation: template, forward kinematics, the
//! diffused skinning-weight field and linear blend skinning of surfels.

pub mod field;
pub mod kdtree;
pub mod lbs;
pub mod pose;
pub mod template;

pub use field::{build_weight_field, build_weight_field_with, query_weights, FieldConfig, WeightField};
pub use lbs::{blend_transforms, skin_point, skin_surfel, skin_surfel_with_weights, skin_surfels, SkinnedFrame};
pub use pose::{pose_to_joint_transforms, JointTransforms, PoseParams};
pub use template::{SkinnedTemplate, WeightRow, MAX_INFLUENCES};
