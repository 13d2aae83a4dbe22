pub mod density;
pub mod error;
pub mod geometry;
pub mod gradients;
pub mod io;
pub mod losses;
pub mod raster;
pub mod scenes;
pub mod skinning;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
