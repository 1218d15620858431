//! PNG input (8/16-bit, gray or color) and the PNG figures.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::eval::metrics::MIN_NORM;
use crate::field::{NormalField, PixelMask};

/// Grayscale weights applied to (R, G, B).
pub const GRAY_WEIGHTS: [f64; 3] = [0.2989, 0.5870, 0.1140];

/// Error maps saturate at this angle.
pub const ERROR_SCALE_DEG: f64 = 45.0;

/// Pixel values scaled to `[0, 1]` by the bit depth, as `rows x cols x
/// channels` row-major, with 1 or 3 channels (alpha dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

pub fn read_png(path: &Path) -> Result<RasterImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })?;
    let (cols, rows) = (img.width() as usize, img.height() as usize);
    let color = img.color();
    let deep = color.bits_per_pixel() / u16::from(color.channel_count()) > 8;
    let (channels, data): (usize, Vec<f64>) = match (color.has_color(), deep) {
        (false, false) => (1, img.into_luma8().into_raw().iter().map(|&v| v as f64 / 255.0).collect()),
        (false, true) => (1, img.into_luma16().into_raw().iter().map(|&v| v as f64 / 65535.0).collect()),
        (true, false) => (3, img.into_rgb8().into_raw().iter().map(|&v| v as f64 / 255.0).collect()),
        (true, true) => (3, img.into_rgb16().into_raw().iter().map(|&v| v as f64 / 65535.0).collect()),
    };
    Ok(RasterImage {
        rows,
        cols,
        channels,
        data,
    })
}

/// Nonzero pixels are inside.
pub fn read_mask(path: &Path) -> Result<PixelMask> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })?;
    let gray = img.into_luma16();
    let (cols, rows) = (gray.width() as usize, gray.height() as usize);
    Ok(PixelMask::from_fn(rows, cols, |r, c| gray.get_pixel(c as u32, r as u32)[0] > 0))
}

fn save_rgb(img: RgbImage, path: &Path) -> Result<()> {
    DynamicImage::ImageRgb8(img).save(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

fn to_byte(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// `(x, y, z)` in `[-1, 1]` maps linearly to `[0, 255]`, so `(0, 0, 1)` is
/// `(128, 128, 255)`. Zero-length normals are drawn black.
pub fn normal_rgb(n: [f64; 3]) -> [u8; 3] {
    if n.iter().map(|v| v * v).sum::<f64>().sqrt() < MIN_NORM {
        return [0, 0, 0];
    }
    n.map(to_byte)
}

pub fn save_normal_png(normals: &NormalField, path: &Path) -> Result<()> {
    let img = ImageBuffer::from_fn(normals.cols() as u32, normals.rows() as u32, |c, r| {
        Rgb(normal_rgb(normals.get(r as usize, c as usize)))
    });
    save_rgb(img, path)
}

/// Blue through cyan, green, yellow to red over `0..=ERROR_SCALE_DEG`;
/// NaN (excluded pixels) is black.
pub fn error_rgb(deg: f64) -> [u8; 3] {
    if deg.is_nan() {
        return [0, 0, 0];
    }
    const STOPS: [[f64; 3]; 5] = [
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
    ];
    let t = (deg / ERROR_SCALE_DEG).clamp(0.0, 1.0) * 4.0;
    let i = (t.floor() as usize).min(3);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for k in 0..3 {
        let v = STOPS[i][k] * (1.0 - f) + STOPS[i + 1][k] * f;
        out[k] = (v * 255.0).round() as u8;
    }
    out
}

/// `per_pixel` is column-major degrees.
pub fn save_error_png(per_pixel: &[f64], rows: usize, cols: usize, path: &Path) -> Result<()> {
    if per_pixel.len() != rows * cols {
        return Err(Error::dim("error map size does not match its shape"));
    }
    let img = ImageBuffer::from_fn(cols as u32, rows as u32, |c, r| {
        Rgb(error_rgb(per_pixel[r as usize + c as usize * rows]))
    });
    save_rgb(img, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_colors() {
        assert_eq!(normal_rgb([0.0, 0.0, 1.0]), [128, 128, 255]);
        assert_eq!(normal_rgb([-1.0, 1.0, 0.0]), [0, 255, 128]);
        assert_eq!(normal_rgb([0.0; 3]), [0, 0, 0]);
    }

    #[test]
    fn error_scale_ends() {
        assert_eq!(error_rgb(0.0), [0, 0, 255]);
        assert_eq!(error_rgb(45.0), [255, 0, 0]);
        assert_eq!(error_rgb(90.0), [255, 0, 0]);
        assert_eq!(error_rgb(22.5), [0, 255, 0]);
        assert_eq!(error_rgb(f64::NAN), [0, 0, 0]);
    }

    #[test]
    fn png_depths_are_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("a.png");
        image::GrayImage::from_raw(2, 1, vec![0, 51]).unwrap().save(&p8).unwrap();
        let a = read_png(&p8).unwrap();
        assert_eq!((a.rows, a.cols, a.channels), (1, 2, 1));
        assert_eq!(a.data, vec![0.0, 0.2]);

        let p16 = dir.path().join("b.png");
        ImageBuffer::<Rgb<u16>, _>::from_raw(1, 1, vec![65535u16, 0, 13107]).unwrap().save(&p16).unwrap();
        let b = read_png(&p16).unwrap();
        assert_eq!(b.channels, 3);
        assert_eq!(b.data, vec![1.0, 0.0, 0.2]);
    }

    #[test]
    fn normal_png_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.png");
        save_normal_png(&NormalField::filled(3, 2, [0.0, 0.0, 1.0]), &path).unwrap();
        let img = image::open(&path).unwrap().into_rgb8();
        assert_eq!(img.dimensions(), (2, 3));
        assert_eq!(img.get_pixel(1, 2).0, [128, 128, 255]);
    }
}
