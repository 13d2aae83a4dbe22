//! Pose-driven rendering of a trained checkpoint.

use std::path::Path;
use std::time::Instant;

use super::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::geometry::{Camera, Surfel};
use crate::io::{write_gray_png, write_rgb_png};
use crate::raster::{render_tiled_with, RenderOutputs, RenderSettings};
use crate::skinning::{blend_transforms, pose_to_joint_transforms, PoseParams, SkinnedFrame};

pub struct RenderedSequence {
    /// `frames[pose][camera]`.
    pub frames: Vec<Vec<RenderOutputs>>,
    pub seconds: f64,
}

impl RenderedSequence {
    pub fn image_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// Images per second of wall-clock time, skinning included.
    pub fn fps(&self) -> f64 {
        if self.seconds > 0.0 {
            self.image_count() as f64 / self.seconds
        } else {
            0.0
        }
    }

    /// Writes `<dir>/<camera>/<pose>.png` and `<dir>/<camera>/<pose>_alpha.png`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (p, per_cam) in self.frames.iter().enumerate() {
            for (c, out) in per_cam.iter().enumerate() {
                let sub = dir.join(format!("{c:02}"));
                std::fs::create_dir_all(&sub)?;
                write_rgb_png(&sub.join(format!("{p:04}.png")), &out.color)?;
                write_gray_png(&sub.join(format!("{p:04}_alpha.png")), &out.alpha)?;
            }
        }
        Ok(())
    }
}

/// Canonical surfels of `checkpoint` posed by `pose`.
pub fn pose_surfels(checkpoint: &Checkpoint, pose: &PoseParams) -> Result<Vec<Surfel>> {
    if pose.joint_count() != checkpoint.joint_parents.len() {
        return Err(Error::Input(format!(
            "pose has {} joints, checkpoint skeleton has {}",
            pose.joint_count(),
            checkpoint.joint_parents.len()
        )));
    }
    let transforms = pose_to_joint_transforms(&checkpoint.skeleton(), pose)?;
    Ok(checkpoint
        .surfels
        .iter()
        .zip(&checkpoint.weight_rows)
        .map(|(s, w)| SkinnedFrame::from_affine(&blend_transforms(w, &transforms)).apply(s))
        .collect())
}

pub fn render_pose(
    checkpoint: &Checkpoint,
    poses: &[PoseParams],
    cameras: &[Camera],
    settings: &RenderSettings,
) -> Result<RenderedSequence> {
    for c in cameras {
        c.validate()?;
    }
    let start = Instant::now();
    let mut frames = Vec::with_capacity(poses.len());
    for pose in poses {
        let posed = pose_surfels(checkpoint, pose)?;
        frames.push(cameras.iter().map(|c| render_tiled_with(&posed, c, settings)).collect());
    }
    Ok(RenderedSequence { frames, seconds: start.elapsed().as_secs_f64() })
}
