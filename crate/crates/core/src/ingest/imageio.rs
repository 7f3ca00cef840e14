//! PNG/PGM reading and writing plus the conversions used before simulation
//! and before feeding images to a network.

use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::event::SensorGeometry;
use crate::raster;

use super::sim::IntensityFrame;
use super::IngestError;

/// Rec. 601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub fn read_color(path: &Path) -> Result<RgbImage, IngestError> {
    let img = image::open(path).map_err(|e| IngestError::Image {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

pub fn write_color(path: &Path, img: &RgbImage) -> Result<(), IngestError> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| IngestError::Image {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}

/// Luminance of an RGB image in `[0, 1]`, row-major.
pub fn luminance(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| {
            (LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64) / 255.0
        })
        .collect()
}

/// Intensity frame of an RGB image, clamped to at least `epsilon`.
pub fn intensity_from_color(img: &RgbImage, epsilon: f64) -> Result<IntensityFrame, IngestError> {
    let g = SensorGeometry::new(img.width(), img.height())
        .map_err(|e| IngestError::InvalidFrame(e.to_string()))?;
    IntensityFrame::from_clamped(g, luminance(img), epsilon)
}

/// Reads any supported image (PGM, PNG, ...) as an intensity frame.
pub fn read_intensity(path: &Path, epsilon: f64) -> Result<IntensityFrame, IngestError> {
    intensity_from_color(&read_color(path)?, epsilon)
}

/// Writes an intensity frame as 8-bit binary PGM.
pub fn write_intensity(path: &Path, frame: &IntensityFrame) -> Result<(), IngestError> {
    let g = frame.geometry();
    let bytes = frame
        .pixels()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(g.width, g.height, bytes).expect("frame size matches geometry");
    img.save_with_format(path, ImageFormat::Pnm)
        .map_err(|e| IngestError::Image {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
}

/// Channel-major `[3, size, size]` tensor data in `[0, 1]`, bilinearly resized.
pub fn color_tensor(img: &RgbImage, size: usize) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Vec::with_capacity(3 * size * size);
    for c in 0..3 {
        let plane: Vec<f64> = img.pixels().map(|p| p[c] as f64 / 255.0).collect();
        out.extend(raster::resize(&plane, w, h, size, size));
    }
    out
}
