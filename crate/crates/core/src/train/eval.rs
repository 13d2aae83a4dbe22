//! Masked PSNR and SSIM of a checkpoint against a dataset split.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::checkpoint::Checkpoint;
use super::dataset::Dataset;
use super::render::pose_surfels;
use crate::error::{Error, Result};
use crate::geometry::image::{ColorImage, ScalarImage};
use crate::losses::{masked_psnr, masked_ssim};
use crate::raster::{render_tiled_with, RenderSettings};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub view: String,
    pub frames: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// One row per view, metrics averaged over its frames.
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    /// Builds the report from `(view, prediction, target, mask)` tuples.
    pub fn from_images<'a>(
        items: impl IntoIterator<Item = (&'a str, &'a ColorImage, &'a ColorImage, &'a ScalarImage)>,
    ) -> Result<Self> {
        let mut per_view: BTreeMap<&str, (usize, f64, f64)> = BTreeMap::new();
        for (view, pred, target, mask) in items {
            let e = per_view.entry(view).or_default();
            e.0 += 1;
            e.1 += masked_psnr(pred, target, mask)?;
            e.2 += masked_ssim(pred, target, mask)?;
        }
        let rows: Vec<EvalRow> = per_view
            .into_iter()
            .map(|(v, (n, p, s))| EvalRow { view: v.to_string(), frames: n, psnr: p / n as f64, ssim: s / n as f64 })
            .collect();
        let k = rows.len().max(1) as f64;
        Ok(EvalReport {
            mean_psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / k,
            mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / k,
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("view,frames,psnr,ssim\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.view, r.frames, r.psnr, r.ssim);
        }
        let n: usize = self.rows.iter().map(|r| r.frames).sum();
        let _ = writeln!(out, "mean,{},{},{}", n, self.mean_psnr, self.mean_ssim);
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:>6} {:>9} {:>8}\n", "view", "frames", "PSNR", "SSIM");
        for r in &self.rows {
            let _ = writeln!(out, "{:<12} {:>6} {:>9.3} {:>8.4}", r.view, r.frames, r.psnr, r.ssim);
        }
        let n: usize = self.rows.iter().map(|r| r.frames).sum();
        let _ = writeln!(out, "{:<12} {:>6} {:>9.3} {:>8.4}", "mean", n, self.mean_psnr, self.mean_ssim);
        out
    }
}

/// Renders every sample of `split` and scores it inside its mask.
pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset, split: &str, settings: &RenderSettings) -> Result<EvalReport> {
    let samples = dataset.split_samples(split)?;
    let mut posed_cache = BTreeMap::new();
    let mut renders = Vec::with_capacity(samples.len());
    for s in &samples {
        if !posed_cache.contains_key(&s.frame) {
            posed_cache.insert(s.frame.clone(), pose_surfels(checkpoint, dataset.pose(&s.frame)?)?);
        }
        let out = render_tiled_with(&posed_cache[&s.frame], dataset.camera(&s.view)?, settings);
        renders.push(out.color);
    }
    EvalReport::from_images(
        samples
            .iter()
            .zip(&renders)
            .map(|(s, pred)| (s.view.as_str(), pred, &s.rgb, &s.mask)),
    )
}

/// Mean `1 - n.n_gt` between depth-derived normals and the dataset normal
/// maps over foreground pixels with a ground-truth normal. A pixel without
/// a rendered normal counts as error 1.
pub fn normal_map_error(checkpoint: &Checkpoint, dataset: &Dataset, split: &str, settings: &RenderSettings) -> Result<f64> {
    let samples = dataset.split_samples(split)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for s in &samples {
        let Some(gt) = &s.normals else {
            return Err(Error::Input(format!("sample {}/{} has no normal map", s.view, s.frame)));
        };
        let posed = pose_surfels(checkpoint, dataset.pose(&s.frame)?)?;
        let out = render_tiled_with(&posed, dataset.camera(&s.view)?, settings);
        for p in 0..gt.len() {
            if s.mask.data[p] > 0.5 && gt.data[p].norm_squared() > 0.0 {
                let n = out.normal.data[p];
                sum += if n.norm_squared() > 0.0 { 1.0 - n.dot(&gt.data[p].normalize()) } else { 1.0 };
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Input(format!("split '{split}' has no foreground normals")));
    }
    Ok(sum / count as f64)
}
