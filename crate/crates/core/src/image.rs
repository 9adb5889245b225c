//! 8-bit grayscale raster and the resampling helpers shared by the
//! augmentation paths.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl core::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    /// A black image.
    pub fn new(width: usize, height: usize) -> Result<Self, ImageError> {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            pixels: vec![value; width * height],
        })
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::BufferLength {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut img = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                img.pixels[y * width + x] = f(x, y);
            }
        }
        Ok(img)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Pixel value with out-of-bounds reads returning 0.
    #[inline]
    pub fn get_or_zero(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0.0
        } else {
            f64::from(self.pixels[y as usize * self.width + x as usize])
        }
    }

    /// Bilinear sample at a sub-pixel location; neighbours outside the image
    /// contribute 0. Integer coordinates return the stored pixel exactly.
    pub fn sample_bilinear_zero(&self, x: f64, y: f64) -> f64 {
        let x0 = math::floor(x);
        let y0 = math::floor(y);
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as i64, y0 as i64);
        if fx == 0.0 && fy == 0.0 {
            return self.get_or_zero(xi, yi);
        }
        let p00 = self.get_or_zero(xi, yi);
        let p10 = self.get_or_zero(xi + 1, yi);
        let p01 = self.get_or_zero(xi, yi + 1);
        let p11 = self.get_or_zero(xi + 1, yi + 1);
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }

    /// Bilinear sample with coordinates clamped to the image edge.
    pub fn sample_bilinear_clamped(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = math::floor(x) as usize;
        let y0 = math::floor(y) as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p = |xx: usize, yy: usize| f64::from(self.get(xx, yy));
        let top = p(x0, y0) + (p(x1, y0) - p(x0, y0)) * fx;
        let bottom = p(x0, y1) + (p(x1, y1) - p(x0, y1)) * fx;
        top + (bottom - top) * fy
    }

    /// Bilinear resize using pixel-centre alignment. Same-size resize is an
    /// exact copy.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<GrayImage, ImageError> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        GrayImage::from_fn(width, height, |x, y| {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            math::to_u8(self.sample_bilinear_clamped(src_x, src_y))
        })
    }

    /// Arithmetic mean intensity.
    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / self.pixels.len() as f64
    }
}
