//! Image decoding, greyscale conversion and intensity histograms.
//!
//! Every image is reduced to 8-bit intensities before any entropy is
//! computed: deeper sources are right-shifted to 8 bits, alpha is dropped,
//! and colour is collapsed with BT.601 luma weights.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Number of distinct 8-bit intensities.
pub const INTENSITY_LEVELS: usize = 256;

/// Single-channel 8-bit image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyImage {
    width: u32,
    height: u32,
    intensities: Vec<u8>,
}

impl GreyImage {
    pub fn new(width: u32, height: u32, intensities: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if intensities.len() != expected {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} image needs {expected} intensities, got {}",
                intensities.len()
            )));
        }
        Ok(GreyImage {
            width,
            height,
            intensities,
        })
    }

    /// Image filled with a single intensity.
    pub fn constant(width: u32, height: u32, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn intensities(&self) -> &[u8] {
        &self.intensities
    }

    pub fn pixel_count(&self) -> usize {
        self.intensities.len()
    }
}

/// Three-channel 8-bit raster, row-major, interleaved RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl RgbRaster {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} raster needs {} pixels, got {}",
                width as usize * height as usize,
                pixels.len()
            )));
        }
        Ok(RgbRaster {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }
}

/// A decoded raster with either one or three channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Raster {
    Grey(GreyImage),
    Rgb(RgbRaster),
}

impl Raster {
    pub fn channels(&self) -> u8 {
        match self {
            Raster::Grey(_) => 1,
            Raster::Rgb(_) => 3,
        }
    }

    /// Greyscale sources pass through untouched; colour goes through [`to_greyscale`].
    pub fn into_grey(self) -> GreyImage {
        match self {
            Raster::Grey(g) => g,
            Raster::Rgb(rgb) => to_greyscale(&rgb),
        }
    }
}

/// Decode a PNG, JPEG, binary PGM or BMP file.
pub fn decode_image(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    decode_bytes(&bytes, path)
}

/// Decode an in-memory image; `path` is only used to label errors.
pub fn decode_bytes(bytes: &[u8], path: &Path) -> Result<Raster> {
    let format = image::guess_format(bytes).map_err(|_| Error::UnsupportedFormat {
        path: path.to_path_buf(),
    })?;
    if !matches!(
        format,
        ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Pnm | ImageFormat::Bmp
    ) {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
        });
    }
    let reader = ImageReader::with_format(std::io::Cursor::new(bytes), format);
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(_) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
        },
        other => Error::CorruptImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    from_dynamic(decoded).map_err(|e| Error::CorruptImage {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn from_dynamic(img: DynamicImage) -> Result<Raster> {
    let (width, height) = (img.width(), img.height());
    let raster = match img {
        DynamicImage::ImageLuma8(buf) => {
            Raster::Grey(GreyImage::new(width, height, buf.into_raw())?)
        }
        DynamicImage::ImageLumaA8(buf) => Raster::Grey(GreyImage::new(
            width,
            height,
            buf.pixels().map(|p| p.0[0]).collect(),
        )?),
        DynamicImage::ImageLuma16(buf) => Raster::Grey(GreyImage::new(
            width,
            height,
            buf.pixels().map(|p| (p.0[0] >> 8) as u8).collect(),
        )?),
        DynamicImage::ImageLumaA16(buf) => Raster::Grey(GreyImage::new(
            width,
            height,
            buf.pixels().map(|p| (p.0[0] >> 8) as u8).collect(),
        )?),
        DynamicImage::ImageRgb8(buf) => Raster::Rgb(RgbRaster::new(
            width,
            height,
            buf.pixels().map(|p| p.0).collect(),
        )?),
        DynamicImage::ImageRgba8(buf) => Raster::Rgb(RgbRaster::new(
            width,
            height,
            buf.pixels().map(|p| [p.0[0], p.0[1], p.0[2]]).collect(),
        )?),
        DynamicImage::ImageRgb16(buf) => Raster::Rgb(RgbRaster::new(
            width,
            height,
            buf.pixels().map(|p| p.0.map(|c| (c >> 8) as u8)).collect(),
        )?),
        DynamicImage::ImageRgba16(buf) => Raster::Rgb(RgbRaster::new(
            width,
            height,
            buf.pixels()
                .map(|p| [p.0[0], p.0[1], p.0[2]].map(|c| (c >> 8) as u8))
                .collect(),
        )?),
        other => {
            let rgb = other.to_rgb8();
            Raster::Rgb(RgbRaster::new(
                width,
                height,
                rgb.pixels().map(|p| p.0).collect(),
            )?)
        }
    };
    Ok(raster)
}

/// BT.601 luma of one pixel, rounded half-up.
///
/// Integer arithmetic in thousandths keeps the rounding exact:
/// `(299 R + 587 G + 114 B + 500) / 1000`.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    let scaled = 299 * r + 587 * g + 114 * b + 500;
    // weights sum to 1000, so the quotient never exceeds 255
    (scaled / 1000).min(255) as u8
}

pub fn to_greyscale(raster: &RgbRaster) -> GreyImage {
    GreyImage {
        width: raster.width,
        height: raster.height,
        intensities: raster.pixels.iter().map(|&p| luma(p)).collect(),
    }
}

/// Decode a file and reduce it to greyscale.
pub fn load_grey(path: &Path) -> Result<GreyImage> {
    decode_image(path).map(Raster::into_grey)
}

/// Pixel counts per 8-bit intensity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntensityHistogram {
    counts: [u64; INTENSITY_LEVELS],
    total: u64,
}

impl IntensityHistogram {
    pub fn from_counts(counts: [u64; INTENSITY_LEVELS]) -> Self {
        let total = counts.iter().sum();
        IntensityHistogram { counts, total }
    }

    pub fn counts(&self) -> &[u64; INTENSITY_LEVELS] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of intensities that actually occur (K).
    pub fn distinct_levels(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

pub fn intensity_histogram(image: &GreyImage) -> IntensityHistogram {
    let mut counts = [0u64; INTENSITY_LEVELS];
    for &v in &image.intensities {
        counts[v as usize] += 1;
    }
    IntensityHistogram {
        counts,
        total: image.intensities.len() as u64,
    }
}
