//! Dense planar image container and PNG I/O.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, LumaA, Rgb, Rgba};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("invalid image dimensions {channels}x{height}x{width} for {len} values")]
    InvalidDimensions {
        channels: usize,
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("pixel value {value} at index {index} is not finite or outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("cannot encode a {0}-channel image as PNG")]
    UnsupportedChannels(usize),
    #[error("{path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// PNG sample depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// A C×H×W image with channel-planar storage and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if channels == 0 || data.len() != channels * height * width {
            return Err(ImageError::InvalidDimensions {
                channels,
                height,
                width,
                len: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Image with every channel set to the matching entry of `value`.
    pub fn filled(height: usize, width: usize, value: &[f64]) -> Self {
        assert!(!value.is_empty(), "at least one channel");
        let plane = height * width;
        let mut data = Vec::with_capacity(value.len() * plane);
        for &v in value {
            assert!((0.0..=1.0).contains(&v), "fill value {v} outside [0, 1]");
            data.extend(std::iter::repeat_n(v, plane));
        }
        Self {
            channels: value.len(),
            height,
            width,
            data,
        }
    }

    /// Builds an image from a per-pixel closure returning `channels` values.
    /// Values are clamped into `[0, 1]`.
    pub fn from_fn<F>(channels: usize, height: usize, width: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, &mut [f64]),
    {
        assert!(channels > 0);
        let plane = height * width;
        let mut data = vec![0.0; channels * plane];
        let mut px = vec![0.0; channels];
        for y in 0..height {
            for x in 0..width {
                f(y, x, &mut px);
                for (c, v) in px.iter().enumerate() {
                    data[c * plane + y * width + x] = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    /// Panics if `value` is outside `[0, 1]`.
    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        assert!((0.0..=1.0).contains(&value), "pixel value {value} outside [0, 1]");
        let i = self.index(c, y, x);
        self.data[i] = value;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn pixel(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, y, x)).collect()
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// `i + 0.5`), clamping to the border.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let a = self.get(c, y0, x0) * (1.0 - tx) + self.get(c, y0, x1) * tx;
            let b = self.get(c, y1, x0) * (1.0 - tx) + self.get(c, y1, x1) * tx;
            *o = a * (1.0 - ty) + b * ty;
        }
    }

    /// Bilinear lookup at texture coordinates with `v` pointing up.
    pub fn sample_uv(&self, u: f64, v: f64, out: &mut [f64]) {
        self.sample_bilinear(u * self.width as f64, (1.0 - v) * self.height as f64, out)
    }

    /// Snaps every value onto the grid of the given PNG depth, so a later
    /// write/read cycle at that depth is lossless.
    pub fn quantized(&self, depth: BitDepth) -> ImageGrid {
        let m = depth.max_value();
        ImageGrid {
            data: self.data.iter().map(|v| (v * m).round() / m).collect(),
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }

    /// Drops alpha or replicates gray so the result has three channels.
    pub fn to_rgb(&self) -> ImageGrid {
        match self.channels {
            3 => self.clone(),
            1 | 2 => {
                let p = self.plane(0);
                let mut data = Vec::with_capacity(3 * p.len());
                for _ in 0..3 {
                    data.extend_from_slice(p);
                }
                ImageGrid {
                    channels: 3,
                    height: self.height,
                    width: self.width,
                    data,
                }
            }
            _ => ImageGrid {
                channels: 3,
                height: self.height,
                width: self.width,
                data: self.data[..3 * self.height * self.width].to_vec(),
            },
        }
    }

    /// Reads an 8- or 16-bit PNG, keeping its channel count.
    pub fn load_png(path: &Path) -> Result<ImageGrid, ImageError> {
        let img = image::open(path).map_err(|source| ImageError::Codec {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_dynamic(&img))
    }

    /// Like [`load_png`](Self::load_png), also reporting the stored sample depth.
    pub fn load_png_with_depth(path: &Path) -> Result<(ImageGrid, BitDepth), ImageError> {
        let img = image::open(path).map_err(|source| ImageError::Codec {
            path: path.display().to_string(),
            source,
        })?;
        let depth = if img.color().bytes_per_pixel() / img.color().channel_count() > 1 {
            BitDepth::Sixteen
        } else {
            BitDepth::Eight
        };
        Ok((Self::from_dynamic(&img), depth))
    }

    pub fn from_dynamic(img: &DynamicImage) -> ImageGrid {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, samples, max): (usize, Vec<f64>, f64) = match img {
            DynamicImage::ImageLuma8(b) => (1, b.as_raw().iter().map(|&v| v as f64).collect(), 255.0),
            DynamicImage::ImageLumaA8(b) => (2, b.as_raw().iter().map(|&v| v as f64).collect(), 255.0),
            DynamicImage::ImageRgb8(b) => (3, b.as_raw().iter().map(|&v| v as f64).collect(), 255.0),
            DynamicImage::ImageRgba8(b) => (4, b.as_raw().iter().map(|&v| v as f64).collect(), 255.0),
            DynamicImage::ImageLuma16(b) => (1, b.as_raw().iter().map(|&v| v as f64).collect(), 65535.0),
            DynamicImage::ImageLumaA16(b) => (2, b.as_raw().iter().map(|&v| v as f64).collect(), 65535.0),
            DynamicImage::ImageRgb16(b) => (3, b.as_raw().iter().map(|&v| v as f64).collect(), 65535.0),
            DynamicImage::ImageRgba16(b) => (4, b.as_raw().iter().map(|&v| v as f64).collect(), 65535.0),
            other => {
                let b = other.to_rgba16();
                (4, b.as_raw().iter().map(|&v| v as f64).collect(), 65535.0)
            }
        };
        let plane = w * h;
        let mut data = vec![0.0; channels * plane];
        for (i, s) in samples.chunks_exact(channels).enumerate() {
            for (c, v) in s.iter().enumerate() {
                data[c * plane + i] = v / max;
            }
        }
        ImageGrid {
            channels,
            height: h,
            width: w,
            data,
        }
    }

    fn interleaved<T>(&self, depth: BitDepth, conv: impl Fn(f64) -> T) -> Vec<T> {
        let m = depth.max_value();
        let plane = self.height * self.width;
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..plane {
            for c in 0..self.channels {
                out.push(conv((self.data[c * plane + i] * m).round()));
            }
        }
        out
    }

    /// Encodes as PNG with 1 (gray), 2 (gray+alpha), 3 (RGB) or 4 (RGBA) channels.
    pub fn to_dynamic(&self, depth: BitDepth) -> Result<DynamicImage, ImageError> {
        let (w, h) = (self.width as u32, self.height as u32);
        let img = match depth {
            BitDepth::Eight => {
                let raw = self.interleaved(depth, |v| v as u8);
                match self.channels {
                    1 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).map(DynamicImage::ImageLuma8),
                    2 => ImageBuffer::<LumaA<u8>, _>::from_raw(w, h, raw).map(DynamicImage::ImageLumaA8),
                    3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).map(DynamicImage::ImageRgb8),
                    4 => ImageBuffer::<Rgba<u8>, _>::from_raw(w, h, raw).map(DynamicImage::ImageRgba8),
                    c => return Err(ImageError::UnsupportedChannels(c)),
                }
            }
            BitDepth::Sixteen => {
                let raw = self.interleaved(depth, |v| v as u16);
                match self.channels {
                    1 => ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).map(DynamicImage::ImageLuma16),
                    2 => ImageBuffer::<LumaA<u16>, _>::from_raw(w, h, raw).map(DynamicImage::ImageLumaA16),
                    3 => ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).map(DynamicImage::ImageRgb16),
                    4 => ImageBuffer::<Rgba<u16>, _>::from_raw(w, h, raw).map(DynamicImage::ImageRgba16),
                    c => return Err(ImageError::UnsupportedChannels(c)),
                }
            }
        };
        Ok(img.expect("buffer length matches dimensions"))
    }

    pub fn save_png(&self, path: &Path, depth: BitDepth) -> Result<(), ImageError> {
        self.to_dynamic(depth)?
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| ImageError::Codec {
                path: path.display().to_string(),
                source,
            })
    }

    /// Mean absolute difference over all samples, optionally restricted to
    /// pixels where `mask` is true.
    pub fn mean_abs_diff(&self, other: &ImageGrid, mask: Option<&[bool]>) -> f64 {
        assert!(self.same_shape(other), "shape mismatch");
        let plane = self.height * self.width;
        let mut total = 0.0;
        let mut count = 0usize;
        for c in 0..self.channels {
            for i in 0..plane {
                if mask.is_none_or(|m| m[i]) {
                    total += (self.data[c * plane + i] - other.data[c * plane + i]).abs();
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length_and_range() {
        assert!(matches!(
            ImageGrid::new(3, 2, 2, vec![0.0; 11]),
            Err(ImageError::InvalidDimensions { .. })
        ));
        assert!(matches!(
            ImageGrid::new(1, 1, 2, vec![0.0, 1.5]),
            Err(ImageError::OutOfRange { index: 1, .. })
        ));
        assert!(ImageGrid::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn bilinear_hits_pixel_centers() {
        let img = ImageGrid::new(1, 2, 2, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let mut o = [0.0];
        img.sample_bilinear(1.5, 0.5, &mut o);
        assert_eq!(o[0], 1.0);
        img.sample_bilinear(1.0, 1.0, &mut o);
        assert!((o[0] - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn png_sixteen_bit_roundtrip_is_lossless_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageGrid::from_fn(3, 5, 7, |y, x, px| {
            px[0] = (y * 7 + x) as f64 / 34.0;
            px[1] = 0.123456789;
            px[2] = 1.0 - px[0];
        })
        .quantized(BitDepth::Sixteen);
        let path = dir.path().join("a.png");
        img.save_png(&path, BitDepth::Sixteen).unwrap();
        assert_eq!(ImageGrid::load_png_with_depth(&path).unwrap(), (img, BitDepth::Sixteen));
    }

    #[test]
    fn png_eight_bit_gray() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageGrid::new(1, 1, 3, vec![0.0, 128.0 / 255.0, 1.0]).unwrap();
        let path = dir.path().join("g.png");
        img.save_png(&path, BitDepth::Eight).unwrap();
        assert_eq!(ImageGrid::load_png_with_depth(&path).unwrap(), (img, BitDepth::Eight));
    }
}
