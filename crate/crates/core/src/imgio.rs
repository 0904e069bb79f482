//! Image file decode/encode between disk formats and the float raster.
//!
//! Decoding accepts anything the enabled codecs understand (PNG, JPEG);
//! encoding is always lossless 8-bit PNG so distorted negatives replay
//! byte-identically.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

use crate::raster::{RasterError, RgbImage};

#[derive(Debug, Error)]
pub enum ImgIoError {
    #[error("failed to decode {path}: {msg}")]
    Decode { path: String, msg: String },
    #[error("failed to encode image: {0}")]
    Encode(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> ImgIoError {
    ImgIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Decodes an image file into the float raster ([0,1] per channel).
pub fn load_rgb(path: &Path) -> Result<RgbImage, ImgIoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| ImgIoError::Decode {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Ok(RgbImage::from_raw(w, h, data)?)
}

/// Encodes the raster as 8-bit PNG bytes (values rounded to the nearest
/// 8-bit level).
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, ImgIoError> {
    let mut raw = Vec::with_capacity(img.data().len());
    for &v in img.data() {
        raw.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer sized from image dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ImgIoError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Writes the raster as PNG via a temp file + atomic rename, so concurrent
/// writers of the same content-addressed path cannot tear each other.
pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), ImgIoError> {
    let bytes = encode_png(img)?;
    write_atomic(path, &bytes)
}

/// Temp-file-then-rename write in the destination directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ImgIoError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".tmp-{}-{:x}",
        std::process::id(),
        crate::hash::fnv1a64(path.as_os_str().as_encoded_bytes())
    ));
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}
