//! On-disk layout of an RGBDA frame: `<base>.png` (8-bit RGB), `<base>.pfm`
//! (little-endian grayscale float depth, 0 = empty) and `<base>.a.png`
//! (8-bit mask, 0 or 255).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat, RgbImage};

use super::IoError;
use crate::frame::{ColorImage, FrameRGBDA};

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Paths written by [`write_frame`] for `base`: color, depth, mask.
pub fn frame_paths(base: impl AsRef<Path>) -> [PathBuf; 3] {
    let base = base.as_ref();
    [
        with_suffix(base, ".png"),
        with_suffix(base, ".pfm"),
        with_suffix(base, ".a.png"),
    ]
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_color_png(image: &ColorImage, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let bytes: Vec<u8> = image.data.iter().flat_map(|p| p.map(quantize)).collect();
    let img = RgbImage::from_raw(image.width as u32, image.height as u32, bytes)
        .ok_or_else(|| IoError::format(path, "image buffer size mismatch"))?;
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| IoError::format(path, e))
}

pub fn read_color_png(path: impl AsRef<Path>) -> Result<ColorImage, IoError> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| IoError::format(path, e))?
        .into_rgb8();
    Ok(ColorImage {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img
            .pixels()
            .map(|p| p.0.map(|c| f32::from(c) / 255.0))
            .collect(),
    })
}

/// Writes a grayscale PFM with rows stored bottom-to-top.
pub fn write_pfm(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    data: &[f32],
) -> Result<(), IoError> {
    let path = path.as_ref();
    let io = |e| IoError::file(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write!(w, "Pf\n{width} {height}\n-1.0\n").map_err(io)?;
    for row in data.chunks(width.max(1)).rev() {
        for v in row {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>), IoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IoError::file(path, e))?;
    let bad = |msg: &str| IoError::format(path, format!("PFM: {msg}"));

    // header: three whitespace-separated tokens after the magic, then one
    // whitespace byte before the payload
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad header"))?);
    }
    pos += 1;
    if tokens[0] != "Pf" {
        return Err(bad("only grayscale \"Pf\" files are supported"));
    }
    let width: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("bad scale"));
    }
    let little = scale < 0.0;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != width * height * 4 {
        return Err(bad("payload size does not match dimensions"));
    }
    let mut data = vec![0f32; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row, col) = (i / width, i % width);
        data[(height - 1 - row) * width + col] = v;
    }
    Ok((width, height, data))
}

/// Writes color, depth and mask files for `frame` next to `base`.
pub fn write_frame(frame: &FrameRGBDA, base: impl AsRef<Path>) -> Result<(), IoError> {
    let [rgb_path, depth_path, mask_path] = frame_paths(base);
    write_color_png(&frame.color_image(), &rgb_path)?;
    write_pfm(&depth_path, frame.width, frame.height, &frame.depth)?;
    let mask: Vec<u8> = frame
        .alpha
        .iter()
        .map(|&a| if a == 1 { 255 } else { 0 })
        .collect();
    GrayImage::from_raw(frame.width as u32, frame.height as u32, mask)
        .ok_or_else(|| IoError::format(&mask_path, "mask size mismatch"))?
        .save_with_format(&mask_path, ImageFormat::Png)
        .map_err(|e| IoError::format(&mask_path, e))
}

/// Reads a frame written by [`write_frame`]. Depth and mask are exact; color
/// carries 8-bit quantization.
pub fn read_frame(base: impl AsRef<Path>) -> Result<FrameRGBDA, IoError> {
    let [rgb_path, depth_path, mask_path] = frame_paths(base);
    let color = read_color_png(&rgb_path)?;
    let (w, h, depth) = read_pfm(&depth_path)?;
    let mask = image::open(&mask_path)
        .map_err(|e| IoError::format(&mask_path, e))?
        .into_luma8();
    if color.dims() != (w, h) || (mask.width() as usize, mask.height() as usize) != (w, h) {
        return Err(IoError::format(
            &depth_path,
            "color, depth and mask sizes differ",
        ));
    }
    let alpha = mask
        .into_raw()
        .into_iter()
        .map(|m| match m {
            0 => Ok(0),
            255 => Ok(1),
            other => Err(IoError::format(
                &mask_path,
                format!("mask value {other} is not 0/255"),
            )),
        })
        .collect::<Result<Vec<u8>, _>>()?;
    let mut frame = FrameRGBDA {
        width: w,
        height: h,
        rgb: color.data,
        depth,
        alpha,
    };
    for i in 0..frame.pixel_count() {
        if frame.alpha[i] == 0 {
            frame.rgb[i] = [0.0; 3];
        }
    }
    frame
        .check_invariants()
        .map_err(|(i, why)| IoError::format(&depth_path, format!("pixel {i}: {why}")))?;
    Ok(frame)
}
