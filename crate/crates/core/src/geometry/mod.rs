//! Vectors, rotations, cameras, spherical harmonics and the surfel primitive.

pub mod camera;
pub mod image;
pub mod math;
pub mod sh;
pub mod surfel;

pub use camera::Camera;
pub use image::ImagePlane;
pub use math::{Mat3, Mat4, Quat, Vec3, Vec4};
pub use sh::sh_to_color;
pub use surfel::{gaussian_weight, surfel_normal, surfel_point, Surfel};
