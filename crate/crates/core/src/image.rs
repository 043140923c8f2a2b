//! Planar floating-point images plus PNG/PPM input and PNG output.
//!
//! Pixels are stored channel-major: all of channel 0 in row-major order, then
//! channel 1, and so on. Values are nominally in `[0, 1]`, but intermediate
//! maps (detail layers, streak estimates) are allowed to be signed.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// Rec. 601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if channels != 1 && channels != 3 {
            return Err(Error::param(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Image { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    /// Builds a single-channel image from a closure over `(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    /// Stacks single-channel planes into one image.
    pub fn from_planes(width: usize, height: usize, planes: &[&[f64]]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * planes.len());
        for p in planes {
            if p.len() != width * height {
                return Err(Error::shape("plane length does not match image size"));
            }
            data.extend_from_slice(p);
        }
        Self::new(width, height, planes.len(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixel_count();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[c * self.pixel_count() + y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let n = self.pixel_count();
        self.data[c * n + y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Elementwise combination of two images with identical shape.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Image { data, ..self.clone() })
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    pub fn mean_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Single-channel luminance. Grayscale images are returned as-is.
    pub fn luminance(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.pixel_count();
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let data = (0..n).map(|i| LUMA[0] * r[i] + LUMA[1] * g[i] + LUMA[2] * b[i]).collect();
        Image { width: self.width, height: self.height, channels: 1, data }
    }

    /// Replicates a grayscale image into three channels.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        Image { channels: 3, data, ..self.clone() }
    }

    /// Copies out a `size_w x size_h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, size_w: usize, size_h: usize) -> Result<Image> {
        if x0 + size_w > self.width || y0 + size_h > self.height {
            return Err(Error::param("crop window outside image"));
        }
        let mut data = Vec::with_capacity(size_w * size_h * self.channels);
        for c in 0..self.channels {
            let p = self.plane(c);
            for y in y0..y0 + size_h {
                data.extend_from_slice(&p[y * self.width + x0..y * self.width + x0 + size_w]);
            }
        }
        Image::new(size_w, size_h, self.channels, data)
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            let buf = ImageBuffer::<Luma<u8>, _>::from_fn(w, h, |x, y| {
                Luma([q(self.get(x as usize, y as usize, 0))])
            });
            DynamicImage::ImageLuma8(buf)
        } else {
            let buf = ImageBuffer::<Rgb<u8>, _>::from_fn(w, h, |x, y| {
                let (x, y) = (x as usize, y as usize);
                Rgb([q(self.get(x, y, 0)), q(self.get(x, y, 1)), q(self.get(x, y, 2))])
            });
            DynamicImage::ImageRgb8(buf)
        }
    }

    /// Converts a decoded image; 16-bit sources keep their full precision.
    pub fn from_dynamic(img: &DynamicImage) -> Result<Image> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let color = img.color();
        let wide = color.bytes_per_pixel() / color.channel_count() > 1;
        if color.has_color() {
            let mut data = vec![0.0; w * h * 3];
            let mut put = |x: u32, y: u32, px: [f64; 3]| {
                let i = y as usize * w + x as usize;
                for c in 0..3 {
                    data[c * w * h + i] = px[c];
                }
            };
            if wide {
                for (x, y, p) in img.to_rgb16().enumerate_pixels() {
                    put(x, y, p.0.map(|v| v as f64 / 65535.0));
                }
            } else {
                for (x, y, p) in img.to_rgb8().enumerate_pixels() {
                    put(x, y, p.0.map(|v| v as f64 / 255.0));
                }
            }
            Image::new(w, h, 3, data)
        } else {
            let data = if wide {
                img.to_luma16().pixels().map(|p| p[0] as f64 / 65535.0).collect()
            } else {
                img.to_luma8().pixels().map(|p| p[0] as f64 / 255.0).collect()
            };
            Image::new(w, h, 1, data)
        }
    }

    /// Reads a PNG or binary PPM file, normalizing to `[0, 1]`.
    pub fn read(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let decoded = image::load_from_memory(&bytes)
            .map_err(|e| Error::Decode { path: path.to_path_buf(), reason: e.to_string() })?;
        Image::from_dynamic(&decoded)
    }

    /// Writes an 8-bit PNG; values are clamped to `[0, 1]` and rounded.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        save_png(&self.to_dynamic(), path.as_ref())
    }

    /// Writes a 16-bit PNG; values are clamped to `[0, 1]` and rounded.
    pub fn write_png16(&self, path: impl AsRef<Path>) -> Result<()> {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        let (w, h) = (self.width as u32, self.height as u32);
        let img = if self.channels == 1 {
            DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_fn(w, h, |x, y| {
                Luma([q(self.get(x as usize, y as usize, 0))])
            }))
        } else {
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_fn(w, h, |x, y| {
                let (x, y) = (x as usize, y as usize);
                Rgb([q(self.get(x, y, 0)), q(self.get(x, y, 1)), q(self.get(x, y, 2))])
            }))
        };
        save_png(&img, path.as_ref())
    }

    /// Round trip through 8-bit quantization.
    pub fn quantized(&self) -> Image {
        self.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
    }
}

fn save_png(img: &DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(Image::new(0, 3, 1, vec![]), Err(Error::EmptyImage)));
        assert!(Image::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn crop_and_planes() {
        let img = Image::from_fn(4, 3, |x, y| (y * 4 + x) as f64).unwrap();
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
        assert!(img.crop(3, 0, 2, 2).is_err());
        let rgb = img.to_rgb();
        assert_eq!(rgb.plane(2), img.plane(0));
        let lum = rgb.luminance();
        assert!(lum.max_abs_diff(&img) < 1e-12);
    }

    #[test]
    fn png_round_trip_is_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(5, 4, |x, y| (x + y) as f64 / 7.0).unwrap().to_rgb();
        img.write_png(&path).unwrap();
        let back = Image::read(&path).unwrap();
        assert_eq!(back.channels(), 3);
        assert!(back.max_abs_diff(&img.quantized()) < 1e-12);
    }

    #[test]
    fn reads_binary_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 0, 255]);
        std::fs::write(&path, bytes).unwrap();
        let img = Image::read(&path).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 1, 3));
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(1, 0, 2), 1.0);
        assert_eq!(img.get(1, 0, 0), 0.0);
    }

    #[test]
    fn undecodable_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not an image").unwrap();
        let err = Image::read(&path).unwrap_err().to_string();
        assert!(err.contains("junk.png"), "{err}");
    }

    #[test]
    fn sixteen_bit_png_keeps_fine_steps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let img = Image::from_fn(7, 3, |x, y| 0.5 + (x as f64 - 3.0 * y as f64) * 1e-3).unwrap();
        img.write_png16(&path).unwrap();
        let back = Image::read(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert!(back.max_abs_diff(&img) <= 0.5 / 65535.0 + 1e-12);
        let color = img.to_rgb();
        color.write_png16(&path).unwrap();
        assert!(Image::read(&path).unwrap().max_abs_diff(&color) <= 0.5 / 65535.0 + 1e-12);
    }
}
