use num_traits::Float;
use rayon::prelude::*;

use super::kernel::{blend, intersect, KernelSplat, PixelRay, PixelResult};
use super::prepare::PreparedSplat;
use super::{BlendEntry, RawFrame, RenderSettings};
use crate::geometry::Camera;

struct TileOut {
    x0: usize,
    y0: usize,
    tw: usize,
    th: usize,
    pixels: Vec<PixelResult>,
    counts: Vec<usize>,
    entries: Vec<BlendEntry>,
}

pub(crate) fn render<F: Float + Send + Sync>(
    splats: &[PreparedSplat],
    camera: &Camera,
    settings: &RenderSettings,
) -> RawFrame {
    let ts = settings.tile_size;
    let (w, h) = (camera.width, camera.height);
    let (ntx, nty) = (w.div_ceil(ts), h.div_ceil(ts));
    let ks: Vec<KernelSplat<F>> = splats.iter().map(KernelSplat::from_prepared).collect();

    // bin splats into every tile their footprint touches
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); ntx * nty];
    for (id, s) in splats.iter().enumerate() {
        let Some([x0, x1, y0, y1]) = s.bbox else { continue };
        // pixel i is covered when x0 <= i + 0.5 <= x1
        let i_lo = (x0 - 0.5).ceil().max(0.0) as usize;
        let i_hi = ((x1 - 0.5).floor().min(w as f64 - 1.0)).max(-1.0);
        let j_lo = (y0 - 0.5).ceil().max(0.0) as usize;
        let j_hi = ((y1 - 0.5).floor().min(h as f64 - 1.0)).max(-1.0);
        if i_hi < 0.0 || j_hi < 0.0 {
            continue;
        }
        let (i_hi, j_hi) = (i_hi as usize, j_hi as usize);
        if i_lo > i_hi || j_lo > j_hi {
            continue;
        }
        for ty in j_lo / ts..=j_hi / ts {
            for tx in i_lo / ts..=i_hi / ts {
                bins[ty * ntx + tx].push(id as u32);
            }
        }
    }

    let tiles: Vec<TileOut> = bins
        .into_par_iter()
        .enumerate()
        .map(|(t, mut list)| {
            list.sort_by(|a, b| {
                let (za, zb) = (splats[*a as usize].center_cam.z, splats[*b as usize].center_cam.z);
                za.total_cmp(&zb).then(a.cmp(b))
            });
            let (x0, y0) = ((t % ntx) * ts, (t / ntx) * ts);
            let (tw, th) = (ts.min(w - x0), ts.min(h - y0));
            let mut out = TileOut {
                x0,
                y0,
                tw,
                th,
                pixels: Vec::with_capacity(tw * th),
                counts: Vec::with_capacity(tw * th),
                entries: Vec::new(),
            };
            for j in y0..y0 + th {
                for i in x0..x0 + tw {
                    let ray = PixelRay::<F>::new(camera, i, j, settings.cutoff);
                    let (px, py) = (i as f64 + 0.5, j as f64 + 0.5);
                    let hits = list.iter().filter_map(|&id| {
                        let [bx0, bx1, by0, by1] = splats[id as usize].bbox.unwrap();
                        if px < bx0 || px > bx1 || py < by0 || py > by1 {
                            return None;
                        }
                        intersect(&ks[id as usize], &ray).map(|hit| (id, hit))
                    });
                    let before = out.entries.len();
                    out.pixels.push(blend(hits, &ks, settings, &mut out.entries));
                    out.counts.push(out.entries.len() - before);
                    if !settings.keep_records {
                        out.entries.clear();
                    }
                }
            }
            out
        })
        .collect();

    // scatter tiles back to row-major order
    let n = w * h;
    let mut pixels = vec![PixelResult::default(); n];
    let mut counts = vec![0usize; n];
    let mut src: Vec<(usize, usize)> = vec![(0, 0); n];
    for (t, tile) in tiles.iter().enumerate() {
        let mut off = 0;
        for (k, p) in tile.pixels.iter().enumerate() {
            let (i, j) = (tile.x0 + k % tile.tw, tile.y0 + k / tile.tw);
            let g = j * w + i;
            pixels[g] = *p;
            counts[g] = tile.counts[k];
            src[g] = (t, off);
            off += tile.counts[k];
        }
        debug_assert_eq!(tile.th * tile.tw, tile.pixels.len());
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut entries = Vec::new();
    if settings.keep_records {
        entries.reserve(counts.iter().sum());
    }
    for g in 0..n {
        if settings.keep_records {
            let (t, off) = src[g];
            entries.extend_from_slice(&tiles[t].entries[off..off + counts[g]]);
        }
        offsets.push(entries.len());
    }
    RawFrame { pixels, offsets, entries }
}
