//! PNG rasters as feature maps. Sample values keep their integer scale
//! (`0..=255` or `0..=65535`).

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb, Rgba};
use swt_core::FeatureMap;

use crate::error::{Result, ToolError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f32 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Load a PNG (gray, gray+alpha, RGB or RGBA; 8 or 16 bit).
pub fn read_png(path: &Path) -> Result<(FeatureMap, BitDepth)> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (data, channels, depth): (Vec<f32>, usize, BitDepth) = match img {
        DynamicImage::ImageLuma8(b) => (b.into_raw().into_iter().map(f32::from).collect(), 1, BitDepth::Eight),
        DynamicImage::ImageLuma16(b) => (b.into_raw().into_iter().map(f32::from).collect(), 1, BitDepth::Sixteen),
        DynamicImage::ImageRgb8(b) => (b.into_raw().into_iter().map(f32::from).collect(), 3, BitDepth::Eight),
        DynamicImage::ImageRgb16(b) => (b.into_raw().into_iter().map(f32::from).collect(), 3, BitDepth::Sixteen),
        DynamicImage::ImageRgba8(b) => (b.into_raw().into_iter().map(f32::from).collect(), 4, BitDepth::Eight),
        DynamicImage::ImageRgba16(b) => (b.into_raw().into_iter().map(f32::from).collect(), 4, BitDepth::Sixteen),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            let b = img.to_rgba16();
            (b.into_raw().into_iter().map(f32::from).collect(), 4, BitDepth::Sixteen)
        }
        _ => return Err(ToolError::format("unsupported PNG pixel layout")),
    };
    Ok((FeatureMap::new(h, w, channels, data)?, depth))
}

/// Write a 1, 3 or 4 channel map as PNG, rounding and clamping to `depth`.
pub fn write_png(path: &Path, f: &FeatureMap, depth: BitDepth) -> Result<()> {
    let (w, h) = (f.width() as u32, f.height() as u32);
    let max = depth.max_value();
    let q = |v: &f32| v.round().clamp(0.0, max);
    let to8 = || f.data().iter().map(|v| q(v) as u8).collect::<Vec<_>>();
    let to16 = || f.data().iter().map(|v| q(v) as u16).collect::<Vec<_>>();
    let bad = || ToolError::format("raster buffer size mismatch");
    let img = match (f.channels(), depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, to8()).ok_or_else(bad)?),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, to16()).ok_or_else(bad)?),
        (3, BitDepth::Eight) => DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, to8()).ok_or_else(bad)?),
        (3, BitDepth::Sixteen) => DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, to16()).ok_or_else(bad)?),
        (4, BitDepth::Eight) => DynamicImage::ImageRgba8(ImageBuffer::<Rgba<u8>, _>::from_raw(w, h, to8()).ok_or_else(bad)?),
        (4, BitDepth::Sixteen) => DynamicImage::ImageRgba16(ImageBuffer::<Rgba<u16>, _>::from_raw(w, h, to16()).ok_or_else(bad)?),
        (c, _) => return Err(ToolError::format(format!("PNG cannot hold {c} channels"))),
    };
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
