//! Core data containers shared by every module.
//!
//! Pixels are indexed column-major, `idx = row + col * rows`, which is the
//! ordering produced by stacking the columns of each image. All per-pixel
//! containers (`NormalField`, `ImageStack`, `PixelMask`) use it.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[inline]
pub fn pixel_index(rows: usize, row: usize, col: usize) -> usize {
    debug_assert!(row < rows);
    row + col * rows
}

/// Per-pixel 3-vectors. Unless stated otherwise the vectors carry albedo in
/// their magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 3]>,
}

impl NormalField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![[0.0; 3]; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: [f64; 3]) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "normal field {rows}x{cols} needs {} pixels, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel_count(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        self.data[pixel_index(self.rows, row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, v: [f64; 3]) {
        let i = pixel_index(self.rows, row, col);
        self.data[i] = v;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<[f64; 3]> {
        self.data
    }

    pub fn same_shape(&self, other: &NormalField) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn dot(&self, other: &NormalField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }

    /// Copy with every nonzero vector scaled to unit length.
    pub fn normalized(&self) -> NormalField {
        let data = self
            .data
            .iter()
            .map(|v| {
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > 0.0 {
                    [v[0] / n, v[1] / n, v[2] / n]
                } else {
                    [0.0; 3]
                }
            })
            .collect();
        NormalField {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// Per-pixel boolean selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![true; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "mask {rows}x{cols} needs {} pixels, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[pixel_index(self.rows, row, col)]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &PixelMask) -> Result<PixelMask> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dim("mask shapes differ"));
        }
        Ok(PixelMask {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }
}

/// The observation matrix: one row per pixel, one column per image.
///
/// Stored row-major so that the `d` intensities of a pixel are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    rows: usize,
    cols: usize,
    images: usize,
    data: Vec<f64>,
}

impl ImageStack {
    pub fn zeros(rows: usize, cols: usize, images: usize) -> Self {
        Self {
            rows,
            cols,
            images,
            data: vec![0.0; rows * cols * images],
        }
    }

    /// Build from per-image buffers, each in column-major pixel order.
    pub fn from_images(rows: usize, cols: usize, images: &[Vec<f64>]) -> Result<Self> {
        let d = images.len();
        let npix = rows * cols;
        let mut data = vec![0.0; npix * d];
        for (k, img) in images.iter().enumerate() {
            if img.len() != npix {
                return Err(Error::dim(format!(
                    "image {k} has {} pixels, expected {npix}",
                    img.len()
                )));
            }
            for (p, &v) in img.iter().enumerate() {
                data[p * d + k] = v;
            }
        }
        Ok(Self {
            rows,
            cols,
            images: d,
            data,
        })
    }

    pub fn from_pixel_major(rows: usize, cols: usize, images: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols * images {
            return Err(Error::dim(format!(
                "stack {rows}x{cols}x{images} needs {} values, got {}",
                rows * cols * images,
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            images,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn image_count(&self) -> usize {
        self.images
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    /// The `d` intensities observed at pixel `p`.
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.images..(p + 1) * self.images]
    }

    pub fn pixel_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.data[p * self.images..(p + 1) * self.images]
    }

    pub fn get(&self, p: usize, k: usize) -> f64 {
        self.data[p * self.images + k]
    }

    pub fn set(&mut self, p: usize, k: usize, v: f64) {
        self.data[p * self.images + k] = v;
    }

    /// Image `k` as a column-major pixel buffer.
    pub fn image(&self, k: usize) -> Vec<f64> {
        (0..self.pixel_count()).map(|p| self.get(p, k)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &ImageStack) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.images == other.images
    }

    /// Pixels whose intensity is strictly positive in every image.
    pub fn lit_in_all(&self) -> PixelMask {
        let data = (0..self.pixel_count())
            .map(|p| self.pixel(p).iter().all(|&v| v > 0.0))
            .collect();
        PixelMask {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Keep only the listed images, in the given order.
    pub fn select_images(&self, keep: &[usize]) -> Result<ImageStack> {
        if let Some(&bad) = keep.iter().find(|&&k| k >= self.images) {
            return Err(Error::InvalidArgument(format!("image index {bad} out of range")));
        }
        let mut out = ImageStack::zeros(self.rows, self.cols, keep.len());
        for p in 0..self.pixel_count() {
            for (j, &k) in keep.iter().enumerate() {
                out.set(p, j, self.get(p, k));
            }
        }
        Ok(out)
    }
}

/// Calibrated light directions, one unit-norm 3-vector per image (the
/// columns of the 3 x d light matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct LightMatrix {
    dirs: Vec<[f64; 3]>,
}

impl LightMatrix {
    /// Normalizes every direction to unit length; zero directions are rejected.
    pub fn new(dirs: Vec<[f64; 3]>) -> Result<Self> {
        let mut out = Vec::with_capacity(dirs.len());
        for (k, l) in dirs.into_iter().enumerate() {
            let n = Vector3::from(l).norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidArgument(format!("light {k} has zero or non-finite norm")));
            }
            out.push([l[0] / n, l[1] / n, l[2] / n]);
        }
        Ok(Self { dirs: out })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn dirs(&self) -> &[[f64; 3]] {
        &self.dirs
    }

    pub fn dir(&self, k: usize) -> Vector3<f64> {
        Vector3::from(self.dirs[k])
    }

    /// L L^T.
    pub fn gram(&self) -> Matrix3<f64> {
        let mut g = Matrix3::zeros();
        for l in &self.dirs {
            let v = Vector3::from(*l);
            g += v * v.transpose();
        }
        g
    }

    /// L^T n: the d predicted Lambertian intensities for one pixel.
    pub fn project(&self, n: &[f64; 3], out: &mut [f64]) {
        for (o, l) in out.iter_mut().zip(&self.dirs) {
            *o = l[0] * n[0] + l[1] * n[1] + l[2] * n[2];
        }
    }

    /// L v for a d-vector v.
    pub fn back_project(&self, v: &[f64]) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for (l, &x) in self.dirs.iter().zip(v) {
            acc[0] += l[0] * x;
            acc[1] += l[1] * x;
            acc[2] += l[2] * x;
        }
        acc
    }

    /// Spectral norm of L by power iteration on L L^T.
    pub fn spectral_norm(&self) -> f64 {
        let g = self.gram();
        let mut v = Vector3::new(1.0, 1.0, 1.0).normalize();
        let mut lambda = 0.0;
        for _ in 0..30 {
            let w = g * v;
            let next = w.norm();
            if next == 0.0 {
                return 0.0;
            }
            v = w / next;
            let done = (next - lambda).abs() <= 1e-10 * next;
            lambda = next;
            if done {
                break;
            }
        }
        // Rayleigh quotient is a tighter estimate than the last iterate norm.
        let rq = v.dot(&(g * v));
        rq.max(lambda).sqrt()
    }

    pub fn select(&self, keep: &[usize]) -> LightMatrix {
        LightMatrix {
            dirs: keep.iter().map(|&k| self.dirs[k]).collect(),
        }
    }
}
