//! Image file formats: 8-bit PNG previews and little-endian float planes.
//!
//! Float plane layout: magic `b"SPLN"`, then `u32` width, height, channels,
//! then `width * height * channels` `f32` values, interleaved row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::image::{ColorImage, ScalarImage};
use crate::geometry::{ImagePlane, Vec3};

pub const PLANE_MAGIC: &[u8; 4] = b"SPLN";

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_png_raw(path: &Path, width: usize, height: usize, color: png::ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::load(path, e))?;
    writer.write_image_data(bytes).map_err(|e| Error::load(path, e))?;
    writer.finish().map_err(|e| Error::load(path, e))?;
    Ok(())
}

pub fn write_rgb_png(path: &Path, img: &ColorImage) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().flat_map(|c| [quantize(c.x), quantize(c.y), quantize(c.z)]).collect();
    write_png_raw(path, img.width, img.height, png::ColorType::Rgb, &bytes)
}

pub fn write_gray_png(path: &Path, img: &ScalarImage) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().map(|v| quantize(*v)).collect();
    write_png_raw(path, img.width, img.height, png::ColorType::Grayscale, &bytes)
}

/// Normals encoded as `(n + 1) / 2`; zero-sentinel pixels are written black.
pub fn write_normal_png(path: &Path, img: &ColorImage) -> Result<()> {
    let enc = img.map(|n| if n.norm_squared() == 0.0 { Vec3::zeros() } else { (n + Vec3::repeat(1.0)) / 2.0 });
    write_rgb_png(path, &enc)
}

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    bytes: Vec<u8>,
}

fn read_png_raw(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::load(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::load(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::load(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::load(path, e))?;
    buf.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::load(path, "indexed PNG not expanded")),
    };
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        bytes: buf,
    })
}

pub fn read_rgb_png(path: &Path) -> Result<ColorImage> {
    let d = read_png_raw(path)?;
    let n = d.channels;
    let data = d
        .bytes
        .chunks_exact(n)
        .map(|px| {
            if n >= 3 {
                Vec3::new(px[0] as f64, px[1] as f64, px[2] as f64) / 255.0
            } else {
                Vec3::repeat(px[0] as f64 / 255.0)
            }
        })
        .collect();
    Ok(ImagePlane { width: d.width, height: d.height, data })
}

pub fn read_gray_png(path: &Path) -> Result<ScalarImage> {
    let d = read_png_raw(path)?;
    let n = d.channels;
    let data = d.bytes.chunks_exact(n).map(|px| px[0] as f64 / 255.0).collect();
    Ok(ImagePlane { width: d.width, height: d.height, data })
}

/// Inverse of [`write_normal_png`]; black pixels decode to the zero sentinel.
pub fn read_normal_png(path: &Path) -> Result<ColorImage> {
    let d = read_png_raw(path)?;
    if d.channels < 3 {
        return Err(Error::load(path, "normal map must be RGB"));
    }
    let data = d
        .bytes
        .chunks_exact(d.channels)
        .map(|px| {
            if px[0] == 0 && px[1] == 0 && px[2] == 0 {
                return Vec3::zeros();
            }
            let n = Vec3::new(px[0] as f64, px[1] as f64, px[2] as f64) / 255.0 * 2.0 - Vec3::repeat(1.0);
            if n.norm() < 1e-6 {
                Vec3::zeros()
            } else {
                n.normalize()
            }
        })
        .collect();
    Ok(ImagePlane { width: d.width, height: d.height, data })
}

pub fn write_plane(path: &Path, width: usize, height: usize, channels: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height * channels {
        return Err(Error::Input(format!(
            "plane payload has {} values, expected {}",
            values.len(),
            width * height * channels
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(PLANE_MAGIC)?;
    for v in [width, height, channels] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for v in values {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a float plane: `(width, height, channels, values)`.
pub fn read_plane(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::load(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != PLANE_MAGIC {
        return Err(Error::load(path, "not a float plane (bad magic)"));
    }
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (u(4), u(8), u(12));
    let n = w * h * c;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::load(path, "float plane payload size mismatch"));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((w, h, c, values))
}

pub fn write_depth_plane(path: &Path, depth: &ScalarImage) -> Result<()> {
    write_plane(path, depth.width, depth.height, 1, &depth.data)
}
