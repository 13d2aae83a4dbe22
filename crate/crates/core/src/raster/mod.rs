//! Forward splatting of posed surfels: ray-splat intersection, depth-sorted
//! alpha blending, median depth, alpha map and depth-derived normals.
//!
//! Two backends share one per-pixel kernel. [`render_bruteforce`] tests
//! every surfel against every pixel and sorts hits by their exact depth;
//! it is the reference. [`render_tiled`] bins conservative screen
//! footprints into tiles and sorts each tile by splat-center depth.

mod brute;
pub mod kernel;
pub mod normals;
pub mod prepare;
mod tiled;

use rayon::prelude::*;

pub use normals::{normals_from_depth, orient_towards_camera};
pub use prepare::{prepare_splat, PreparedSplat};

use crate::geometry::image::{ColorImage, ScalarImage};
use crate::geometry::{Camera, ImagePlane, Surfel, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(crate::Error::Config(format!("unknown precision '{s}' (expected f32 or f64)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub sh_degree: usize,
    pub tile_size: usize,
    pub precision: Precision,
    /// Keep per-pixel blend records (needed for gradients).
    pub keep_records: bool,
    /// Blending stops once transmittance falls below this.
    pub t_min: f64,
    /// Gaussian truncation radius in standard deviations.
    pub cutoff: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            sh_degree: 3,
            tile_size: 16,
            precision: Precision::F64,
            keep_records: false,
            t_min: 1e-4,
            cutoff: 3.0,
        }
    }
}

/// One contribution to a pixel, in blending order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendEntry {
    pub surfel: u32,
    pub gaussian: f64,
    /// `opacity * gaussian`.
    pub alpha: f64,
    /// Transmittance before this entry.
    pub transmittance: f64,
    pub depth: f64,
    pub u: f64,
    pub v: f64,
}

/// Flattened per-pixel blend lists in row-major pixel order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlendRecords {
    pub offsets: Vec<usize>,
    pub entries: Vec<BlendEntry>,
    /// Index into the pixel's list of the entry that set the depth.
    pub depth_record: Vec<Option<u32>>,
}

impl BlendRecords {
    pub fn pixel(&self, p: usize) -> &[BlendEntry] {
        &self.entries[self.offsets[p]..self.offsets[p + 1]]
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutputs {
    pub color: ColorImage,
    pub depth: ScalarImage,
    pub alpha: ScalarImage,
    pub normal: ColorImage,
    pub records: Option<BlendRecords>,
    /// Per-surfel camera quantities, kept together with the records.
    pub splats: Option<Vec<PreparedSplat>>,
}

pub fn prepare_all(surfels: &[Surfel], camera: &Camera, settings: &RenderSettings) -> Vec<PreparedSplat> {
    surfels
        .par_iter()
        .map(|s| prepare_splat(s, camera, settings.sh_degree, settings.cutoff))
        .collect()
}

/// Reference renderer: exact per-pixel depth ordering.
pub fn render_bruteforce(surfels: &[Surfel], camera: &Camera, sh_degree: usize) -> RenderOutputs {
    render_bruteforce_with(
        surfels,
        camera,
        &RenderSettings {
            sh_degree,
            ..RenderSettings::default()
        },
    )
}

pub fn render_bruteforce_with(surfels: &[Surfel], camera: &Camera, settings: &RenderSettings) -> RenderOutputs {
    let splats = prepare_all(surfels, camera, settings);
    let raw = match settings.precision {
        Precision::F64 => brute::render::<f64>(&splats, camera, settings),
        Precision::F32 => brute::render::<f32>(&splats, camera, settings),
    };
    assemble(raw, splats, camera, settings)
}

/// Tile-binned renderer.
pub fn render_tiled(surfels: &[Surfel], camera: &Camera, sh_degree: usize, tile_size: usize) -> RenderOutputs {
    render_tiled_with(
        surfels,
        camera,
        &RenderSettings {
            sh_degree,
            tile_size,
            ..RenderSettings::default()
        },
    )
}

pub fn render_tiled_with(surfels: &[Surfel], camera: &Camera, settings: &RenderSettings) -> RenderOutputs {
    assert!(settings.tile_size >= 8, "tile size must be at least 8");
    let splats = prepare_all(surfels, camera, settings);
    let raw = match settings.precision {
        Precision::F64 => tiled::render::<f64>(&splats, camera, settings),
        Precision::F32 => tiled::render::<f32>(&splats, camera, settings),
    };
    assemble(raw, splats, camera, settings)
}

/// Backend output in row-major pixel order.
pub(crate) struct RawFrame {
    pub pixels: Vec<kernel::PixelResult>,
    pub offsets: Vec<usize>,
    pub entries: Vec<BlendEntry>,
}

fn assemble(raw: RawFrame, splats: Vec<PreparedSplat>, camera: &Camera, settings: &RenderSettings) -> RenderOutputs {
    let (w, h) = (camera.width, camera.height);
    let color = ImagePlane { width: w, height: h, data: raw.pixels.iter().map(|p| p.color).collect() };
    let alpha = ImagePlane { width: w, height: h, data: raw.pixels.iter().map(|p| p.alpha).collect() };
    let depth = ImagePlane { width: w, height: h, data: raw.pixels.iter().map(|p| p.depth).collect() };
    let normal = normals_from_depth(&depth, camera);
    let (records, splats) = if settings.keep_records {
        (
            Some(BlendRecords {
                offsets: raw.offsets,
                entries: raw.entries,
                depth_record: raw.pixels.iter().map(|p| p.depth_record.map(|r| r as u32)).collect(),
            }),
            Some(splats),
        )
    } else {
        (None, None)
    };
    RenderOutputs { color, depth, alpha, normal, records, splats }
}

/// Alpha-blended surfel normals (camera space, oriented towards the camera),
/// zero where the alpha map is below 0.5. Requires blend records.
pub fn blended_surfel_normals(outputs: &RenderOutputs, posed: &[Surfel], camera: &Camera) -> Option<ColorImage> {
    let records = outputs.records.as_ref()?;
    let rc = camera.rotation();
    let normals: Vec<Vec3> = posed.iter().map(|s| rc * crate::geometry::surfel_normal(s)).collect();
    let (w, h) = (camera.width, camera.height);
    Some(ImagePlane::from_fn(w, h, |i, j| {
        let p = j * w + i;
        if outputs.alpha.data[p] < 0.5 {
            return Vec3::zeros();
        }
        let ray = camera.ray_dir(i as f64 + 0.5, j as f64 + 0.5);
        let mut n = Vec3::zeros();
        for e in records.pixel(p) {
            n += orient_towards_camera(normals[e.surfel as usize], &ray) * (e.alpha * e.transmittance);
        }
        if n.norm() > 1e-12 {
            n.normalize()
        } else {
            Vec3::zeros()
        }
    }))
}

#[cfg(test)]
mod tests;
