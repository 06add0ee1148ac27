//! Image export/import: 8-bit sRGB PNG and raw 32-bit float planes with a
//! 16-byte header (magic, width, height, channels).

use crate::{Result, SgiaError};
use std::io::{Read, Write};
use std::path::Path;

const PLANE_MAGIC: &[u8; 4] = b"SGFP";

/// Linear [0,1] value to sRGB-gamma byte (gamma 2.2).
pub fn linear_to_srgb_u8(x: f64) -> u8 {
    let x = x.clamp(0.0, 1.0);
    (x.powf(1.0 / 2.2) * 255.0).round() as u8
}

/// sRGB-gamma byte to linear [0,1].
pub fn srgb_u8_to_linear(b: u8) -> f64 {
    (b as f64 / 255.0).powf(2.2)
}

/// Write an interleaved float image (values in linear space, planar layout
/// `data[c * w * h + i]`) as an 8-bit sRGB PNG.
pub fn save_png(path: &Path, data: &[f64], width: usize, height: usize, channels: usize) -> Result<()> {
    let npix = width * height;
    if data.len() != npix * channels || !(channels == 1 || channels == 3) {
        return Err(SgiaError::ShapeMismatch("save_png expects 1 or 3 planar channels".into()));
    }
    let mut buf = Vec::with_capacity(npix * channels);
    for i in 0..npix {
        for c in 0..channels {
            buf.push(linear_to_srgb_u8(data[c * npix + i]));
        }
    }
    if channels == 1 {
        image::GrayImage::from_raw(width as u32, height as u32, buf)
            .expect("sized buffer")
            .save(path)?;
    } else {
        image::RgbImage::from_raw(width as u32, height as u32, buf)
            .expect("sized buffer")
            .save(path)?;
    }
    Ok(())
}

/// Write a planar linear float image as a 16-bit sRGB PNG. The extra depth
/// keeps round trips far above 8-bit quantization noise (~59 dB).
pub fn save_png16(path: &Path, data: &[f64], width: usize, height: usize, channels: usize) -> Result<()> {
    let npix = width * height;
    if data.len() != npix * channels || !(channels == 1 || channels == 3) {
        return Err(SgiaError::ShapeMismatch("save_png16 expects 1 or 3 planar channels".into()));
    }
    let q = |x: f64| (x.clamp(0.0, 1.0).powf(1.0 / 2.2) * 65535.0).round() as u16;
    let mut buf = Vec::with_capacity(npix * channels);
    for i in 0..npix {
        for c in 0..channels {
            buf.push(q(data[c * npix + i]));
        }
    }
    if channels == 1 {
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(width as u32, height as u32, buf)
            .expect("sized buffer")
            .save(path)?;
    } else {
        image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(width as u32, height as u32, buf)
            .expect("sized buffer")
            .save(path)?;
    }
    Ok(())
}

/// Load an 8- or 16-bit PNG into planar linear f64 channels.
pub fn load_png(path: &Path) -> Result<(Vec<f64>, usize, usize, usize)> {
    let img = image::open(path)?;
    let rgb = img.to_rgb16();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let npix = w * h;
    let mut data = vec![0.0; npix * 3];
    for (i, p) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * npix + i] = (p.0[c] as f64 / 65535.0).powf(2.2);
        }
    }
    Ok((data, w, h, 3))
}

/// Write a raw float plane file: magic `SGFP`, u32 width/height/channels
/// (little endian), then f32 data in planar channel order.
pub fn save_plane(path: &Path, data: &[f64], width: usize, height: usize, channels: usize) -> Result<()> {
    if data.len() != width * height * channels {
        return Err(SgiaError::ShapeMismatch("plane data size mismatch".into()));
    }
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    w.write_all(PLANE_MAGIC)?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(height as u32).to_le_bytes())?;
    w.write_all(&(channels as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for &x in data {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read a raw float plane file written by [`save_plane`].
pub fn load_plane(path: &Path) -> Result<(Vec<f64>, usize, usize, usize)> {
    let f = std::fs::File::open(path)?;
    let mut r = std::io::BufReader::new(f);
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[0..4] != PLANE_MAGIC {
        return Err(SgiaError::BadFormat("not an SGFP float plane".into()));
    }
    let rd = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap()) as usize;
    let (w, h, c) = (rd(4), rd(8), rd(12));
    let mut buf = vec![0u8; w * h * c * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok((data, w, h, c))
}
