//! Planar float images and lossless raster IO.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

/// Planar (channel-major) image with values stored as `f32`.
///
/// RGB images hold intensities in `[0, 1]`; depth maps hold meters in a
/// single channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Image { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    /// Average pooling with a square window; trailing rows/columns that do
    /// not fill a window are dropped.
    pub fn average_pool(&self, factor: usize) -> Image {
        let (h, w) = (self.height / factor, self.width / factor);
        let mut out = Image::zeros(self.channels, h, w);
        let norm = 1.0 / (factor * factor) as f32;
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    let mut s = 0.0;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            s += self.at(c, y * factor + dy, x * factor + dx);
                        }
                    }
                    out.set(c, y, x, s * norm);
                }
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    /// Rounds RGB intensities to the nearest 8-bit level.
    pub fn quantize_rgb(&self) -> Image {
        self.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }

    /// Rounds depth in meters to whole millimeters.
    pub fn quantize_depth(&self) -> Image {
        self.map(|v| (v.max(0.0) * 1000.0).round().min(u16::MAX as f32) / 1000.0)
    }

    pub fn write_rgb_png(&self, path: &Path) -> Result<(), image::ImageError> {
        assert_eq!(self.channels, 3, "rgb png needs 3 channels");
        let buf = ImageBuffer::<Rgb<u8>, _>::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c| (self.at(c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
            Rgb([px(0), px(1), px(2)])
        });
        buf.save_with_format(path, image::ImageFormat::Png)
    }

    pub fn read_rgb_png(path: &Path) -> Result<Image, image::ImageError> {
        let img = image::open(path)?.into_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Image::zeros(3, h, w);
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, px[c] as f32 / 255.0);
            }
        }
        Ok(out)
    }

    /// 16-bit grayscale PNG with depth in millimeters.
    pub fn write_depth_png(&self, path: &Path) -> Result<(), image::ImageError> {
        assert_eq!(self.channels, 1, "depth png needs 1 channel");
        let buf = ImageBuffer::<Luma<u16>, _>::from_fn(self.width as u32, self.height as u32, |x, y| {
            let mm = (self.at(0, y as usize, x as usize).max(0.0) * 1000.0).round();
            Luma([mm.min(u16::MAX as f32) as u16])
        });
        buf.save_with_format(path, image::ImageFormat::Png)
    }

    pub fn read_depth_png(path: &Path) -> Result<Image, image::ImageError> {
        let img = image::open(path)?.into_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Image::zeros(1, h, w);
        for (x, y, px) in img.enumerate_pixels() {
            out.set(0, y as usize, x as usize, px[0] as f32 / 1000.0);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_pool_by_four() {
        let mut img = Image::zeros(1, 8, 8);
        for y in 0..8 {
            for x in 0..8 {
                img.set(0, y, x, (y * 8 + x) as f32);
            }
        }
        let p = img.average_pool(4);
        assert_eq!(p.shape(), (1, 2, 2));
        // Mean of rows 0..4, cols 0..4: mean(y)*8 + mean(x) = 1.5*8 + 1.5.
        assert_eq!(p.at(0, 0, 0), 13.5);
        assert_eq!(p.at(0, 1, 1), 13.5 + 4.0 * 8.0 + 4.0);
    }

    #[test]
    fn png_round_trips_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut rgb = Image::zeros(3, 4, 5);
        let mut depth = Image::zeros(1, 4, 5);
        for (i, v) in rgb.data.iter_mut().enumerate() {
            *v = (i % 7) as f32 / 6.0;
        }
        for (i, v) in depth.data.iter_mut().enumerate() {
            *v = i as f32 * 0.0371;
        }
        let (rgb, depth) = (rgb.quantize_rgb(), depth.quantize_depth());
        let (pr, pd) = (dir.path().join("a.png"), dir.path().join("d.png"));
        rgb.write_rgb_png(&pr).unwrap();
        depth.write_depth_png(&pd).unwrap();
        assert_eq!(Image::read_rgb_png(&pr).unwrap(), rgb);
        assert_eq!(Image::read_depth_png(&pd).unwrap(), depth);
    }
}
