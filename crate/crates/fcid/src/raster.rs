//! 8-bit RGB rasters and real-valued planes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    /// Builds an image from row-major pixel triples.
    ///
    /// Panics if `pixels.len() != width * height` or either dimension is zero.
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// A decoded image together with a degeneracy flag: grayscale sources are
/// promoted to RGB by channel replication, which makes the saturation
/// channel identically zero and weakens detection.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub image: RgbImage,
    pub grayscale: bool,
}

/// Decodes a PNG or JPEG file into an 8-bit RGB raster.
pub fn load_image(path: &Path) -> Result<LoadedImage> {
    let decoded = image::open(path).map_err(|source| Error::ImageRead {
        path: path.to_path_buf(),
        source,
    })?;
    let source_gray = matches!(
        decoded.color(),
        image::ColorType::L8
            | image::ColorType::L16
            | image::ColorType::La8
            | image::ColorType::La16
    );
    let rgb = decoded.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels: Vec<[u8; 3]> = rgb.pixels().map(|p| p.0).collect();
    let achromatic = pixels.iter().all(|p| p[0] == p[1] && p[1] == p[2]);
    Ok(LoadedImage {
        image: RgbImage::new(w, h, pixels),
        grayscale: source_gray || achromatic,
    })
}

/// Row-major plane of real values with a declared value range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    width: usize,
    height: usize,
    values: Vec<f64>,
    range: (f64, f64),
}

impl Plane {
    /// Builds a plane from row-major values.
    ///
    /// Panics if the buffer size does not match the dimensions or any value
    /// falls outside `range`.
    pub fn new(width: usize, height: usize, values: Vec<f64>, range: (f64, f64)) -> Self {
        assert!(width >= 1 && height >= 1, "plane dimensions must be >= 1");
        assert_eq!(values.len(), width * height, "value buffer size mismatch");
        debug_assert!(
            values.iter().all(|v| *v >= range.0 && *v <= range.1),
            "plane value outside declared range"
        );
        Self {
            width,
            height,
            values,
            range,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Declared `[lo, hi]` value interval.
    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Writes a plane as an 8-bit grayscale PNG, mapping the declared range
/// onto 0..=255.
pub fn save_plane_png(plane: &Plane, path: &Path) -> Result<()> {
    let (lo, hi) = plane.range();
    let buf: Vec<u8> = plane
        .values()
        .iter()
        .map(|&v| (((v - lo) / (hi - lo)) * 255.0).round() as u8)
        .collect();
    image::save_buffer(
        path,
        &buf,
        plane.width() as u32,
        plane.height() as u32,
        image::ExtendedColorType::L8,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_indexing_is_row_major() {
        let img = RgbImage::from_fn(3, 2, |x, y| [x as u8, y as u8, 0]);
        assert_eq!(img.get(2, 1), [2, 1, 0]);
        assert_eq!(img.pixels()[5], [2, 1, 0]);
    }

    #[test]
    #[should_panic]
    fn plane_rejects_size_mismatch() {
        let _ = Plane::new(2, 2, vec![0.0; 3], (0.0, 1.0));
    }
}
