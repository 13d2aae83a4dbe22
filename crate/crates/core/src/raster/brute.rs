use num_traits::Float;
use rayon::prelude::*;

use super::kernel::{blend, intersect, Hit, KernelSplat, PixelRay, PixelResult};
use super::prepare::PreparedSplat;
use super::{RawFrame, RenderSettings};
use crate::geometry::Camera;

pub(crate) fn render<F: Float + Send + Sync>(
    splats: &[PreparedSplat],
    camera: &Camera,
    settings: &RenderSettings,
) -> RawFrame {
    let ks: Vec<KernelSplat<F>> = splats.iter().map(KernelSplat::from_prepared).collect();
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<(Vec<PixelResult>, Vec<usize>, Vec<_>)> = (0..h)
        .into_par_iter()
        .map(|j| {
            let mut pixels = Vec::with_capacity(w);
            let mut counts = Vec::with_capacity(w);
            let mut entries = Vec::new();
            let mut hits: Vec<(u32, Hit<F>)> = Vec::new();
            for i in 0..w {
                let ray = PixelRay::<F>::new(camera, i, j, settings.cutoff);
                hits.clear();
                for (id, s) in ks.iter().enumerate() {
                    if let Some(hit) = intersect(s, &ray) {
                        hits.push((id as u32, hit));
                    }
                }
                hits.sort_by(|a, b| a.1.z.partial_cmp(&b.1.z).unwrap().then(a.0.cmp(&b.0)));
                let before = entries.len();
                pixels.push(blend(hits.iter().copied(), &ks, settings, &mut entries));
                counts.push(entries.len() - before);
                if !settings.keep_records {
                    entries.clear();
                }
            }
            (pixels, counts, entries)
        })
        .collect();
    let mut frame = RawFrame {
        pixels: Vec::with_capacity(w * h),
        offsets: vec![0],
        entries: Vec::new(),
    };
    for (pixels, counts, entries) in rows {
        frame.pixels.extend(pixels);
        for c in counts {
            let last = *frame.offsets.last().unwrap();
            frame.offsets.push(last + if settings.keep_records { c } else { 0 });
        }
        frame.entries.extend(entries);
    }
    frame
}
