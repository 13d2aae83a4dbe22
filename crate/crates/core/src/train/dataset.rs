//! On-disk dataset layout and loading.
//!
//! ```text
//! <root>/template.skel
//! <root>/cameras/<view>.json        Camera
//! <root>/poses/<frame>.json         PoseParams
//! <root>/frames/<view>/<frame>.png  RGB
//! <root>/masks/<view>/<frame>.png   gray, foreground > 0.5
//! <root>/normals/<view>/<frame>.png optional, (n + 1) / 2 in camera space
//! <root>/split.json                 {"train": {"views": [..], "frames": [..]}, "test": {..}}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::image::{ColorImage, ScalarImage};
use crate::geometry::Camera;
use crate::io::{read_gray_png, read_normal_png, read_rgb_png};
use crate::skinning::{build_weight_field_with, FieldConfig, PoseParams, SkinnedTemplate, WeightField};

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitPart {
    pub views: Vec<String>,
    pub frames: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: SplitPart,
    pub test: SplitPart,
}

impl Split {
    pub fn part(&self, name: &str) -> Result<&SplitPart> {
        match name {
            "train" => Ok(&self.train),
            "test" => Ok(&self.test),
            _ => Err(Error::Input(format!("unknown split '{name}' (expected train or test)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FrameSample {
    pub view: String,
    pub frame: String,
    pub rgb: ColorImage,
    pub mask: ScalarImage,
    pub normals: Option<ColorImage>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub template: SkinnedTemplate,
    pub cameras: BTreeMap<String, Camera>,
    pub poses: BTreeMap<String, PoseParams>,
    pub split: Split,
    /// Every (view, frame) pair present on disk, sorted by view then frame.
    pub samples: Vec<FrameSample>,
}

pub fn frame_path(root: &Path, kind: &str, view: &str, frame: &str) -> PathBuf {
    root.join(kind).join(view).join(format!("{frame}.png"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::load(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Input(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

/// File stems of `*.json` files in `dir`, sorted.
fn json_stems(dir: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::load(dir, e))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

impl Dataset {
    pub fn sample(&self, view: &str, frame: &str) -> Option<&FrameSample> {
        self.samples.iter().find(|s| s.view == view && s.frame == frame)
    }

    /// Samples of one split part, in split order.
    pub fn split_samples(&self, name: &str) -> Result<Vec<&FrameSample>> {
        let part = self.split.part(name)?;
        let mut out = Vec::new();
        for v in &part.views {
            for f in &part.frames {
                out.push(self.sample(v, f).ok_or_else(|| {
                    Error::Input(format!("split '{name}' references missing sample {v}/{f}"))
                })?);
            }
        }
        Ok(out)
    }

    pub fn camera(&self, view: &str) -> Result<&Camera> {
        self.cameras.get(view).ok_or_else(|| Error::Input(format!("unknown view '{view}'")))
    }

    pub fn pose(&self, frame: &str) -> Result<&PoseParams> {
        self.poses.get(frame).ok_or_else(|| Error::Input(format!("unknown frame '{frame}'")))
    }
}

/// Loads and validates everything under `root`.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let template = SkinnedTemplate::load(&root.join("template.skel"))?;
    template
        .validate()
        .map_err(|e| Error::load(root.join("template.skel"), e))?;

    let mut cameras = BTreeMap::new();
    for view in json_stems(&root.join("cameras"))? {
        let path = root.join("cameras").join(format!("{view}.json"));
        let cam: Camera = read_json(&path)?;
        cam.validate().map_err(|e| Error::load(&path, e))?;
        cameras.insert(view, cam);
    }
    if cameras.is_empty() {
        return Err(Error::load(root.join("cameras"), "no cameras"));
    }

    let mut poses = BTreeMap::new();
    for frame in json_stems(&root.join("poses"))? {
        let path = root.join("poses").join(format!("{frame}.json"));
        let pose: PoseParams = read_json(&path)?;
        if pose.joint_count() != template.joint_count() {
            return Err(Error::load(
                &path,
                format!("pose has {} joints, template has {}", pose.joint_count(), template.joint_count()),
            ));
        }
        pose.validate().map_err(|e| Error::load(&path, e))?;
        poses.insert(frame, pose);
    }

    // check presence first so the error names the first missing file
    for kind in ["frames", "masks"] {
        for view in cameras.keys() {
            for frame in poses.keys() {
                let p = frame_path(root, kind, view, frame);
                if !p.is_file() {
                    return Err(Error::load(&p, "missing file"));
                }
            }
        }
    }
    let has_normals = root.join("normals").is_dir();

    let mut samples = Vec::with_capacity(cameras.len() * poses.len());
    for (view, cam) in &cameras {
        for frame in poses.keys() {
            let rgb_path = frame_path(root, "frames", view, frame);
            let rgb = read_rgb_png(&rgb_path)?;
            let check = |w: usize, h: usize, p: &Path| -> Result<()> {
                if w != cam.width || h != cam.height {
                    return Err(Error::load(
                        p,
                        format!("image is {w}x{h}, camera expects {}x{}", cam.width, cam.height),
                    ));
                }
                Ok(())
            };
            check(rgb.width, rgb.height, &rgb_path)?;
            let mask_path = frame_path(root, "masks", view, frame);
            let mask = read_gray_png(&mask_path)?.map(|m| if *m > 0.5 { 1.0 } else { 0.0 });
            check(mask.width, mask.height, &mask_path)?;
            if !mask.data.iter().any(|m| *m > 0.5) {
                return Err(Error::load(&mask_path, "mask has no foreground"));
            }
            let normals = if has_normals {
                let p = frame_path(root, "normals", view, frame);
                let n = read_normal_png(&p)?;
                check(n.width, n.height, &p)?;
                Some(n)
            } else {
                None
            };
            samples.push(FrameSample {
                view: view.clone(),
                frame: frame.clone(),
                rgb,
                mask,
                normals,
            });
        }
    }

    let split: Split = read_json(&root.join("split.json"))?;
    let ds = Dataset {
        root: root.to_path_buf(),
        template,
        cameras,
        poses,
        split,
        samples,
    };
    for part in ["train", "test"] {
        ds.split_samples(part).map_err(|e| Error::load(root.join("split.json"), e))?;
    }
    Ok(ds)
}

/// Cache file name for a template and field configuration.
pub fn weight_field_cache_key(template: &SkinnedTemplate, config: &FieldConfig) -> String {
    let mut h = Sha256::new();
    h.update(template.to_bytes());
    for r in config.resolution {
        h.update((r as u64).to_le_bytes());
    }
    h.update((config.diffusion_iters as u64).to_le_bytes());
    h.update(config.margin.to_le_bytes());
    let digest = h.finalize();
    let hex: String = digest.iter().take(12).map(|b| format!("{b:02x}")).collect();
    format!("weights-{hex}.wfld")
}

/// Loads the weight field from `<root>/cache/` or builds and stores it.
/// Returns the field and whether it came from the cache.
pub fn load_or_build_weight_field(root: &Path, template: &SkinnedTemplate, config: &FieldConfig) -> Result<(WeightField, bool)> {
    let path = root.join("cache").join(weight_field_cache_key(template, config));
    if path.is_file() {
        let bytes = fs::read(&path).map_err(|e| Error::load(&path, e))?;
        let field = WeightField::from_bytes(&bytes).map_err(|e| Error::load(&path, e))?;
        return Ok((field, true));
    }
    let field = build_weight_field_with(template, config, |_, _| {})?;
    fs::create_dir_all(root.join("cache"))?;
    fs::write(&path, field.to_bytes())?;
    Ok((field, false))
}
