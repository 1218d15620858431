//! Dataset directories:
//!
//! - `filenames.txt`: one image file per line (PNG or PFM)
//! - `light_directions.txt`: one `x y z` row per image
//! - `light_intensities.txt` (optional): one `r g b` row per image
//! - `mask.png` (optional), `normal_gt.pfm` (optional)
//!
//! Color images are divided channel-wise by the light intensity and then
//! converted to gray with [`GRAY_WEIGHTS`]. Gray images are divided by the
//! weighted mean of the three intensities.

use std::fs;
use std::path::{Path, PathBuf};

use super::pfm::{load_normal_map, read_pfm};
use super::png::{read_mask, read_png, RasterImage, GRAY_WEIGHTS};
use crate::error::{Error, Result};
use crate::field::{ImageStack, LightMatrix, NormalField, PixelMask};

pub const FILENAMES: &str = "filenames.txt";
pub const LIGHT_DIRECTIONS: &str = "light_directions.txt";
pub const LIGHT_INTENSITIES: &str = "light_intensities.txt";
pub const MASK: &str = "mask.png";
pub const GT_NORMALS: &str = "normal_gt.pfm";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub image_paths: Vec<PathBuf>,
    pub light_directions: Vec<[f64; 3]>,
    pub light_intensities: Option<Vec<[f64; 3]>>,
    pub mask_path: Option<PathBuf>,
    pub gt_normals_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub images: ImageStack,
    pub lights: LightMatrix,
    pub mask: Option<PixelMask>,
    pub ground_truth: Option<NormalField>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Rows of three numbers separated by whitespace and/or commas; blank lines
/// and `#` comments are skipped.
pub fn parse_triples(text: &str, path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, format!("line {}: not a number", i + 1)))?;
        if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(path, format!("line {}: expected 3 finite values", i + 1)));
        }
        out.push([vals[0], vals[1], vals[2]]);
    }
    Ok(out)
}

impl DatasetManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let names_path = dir.join(FILENAMES);
        let image_paths: Vec<PathBuf> = read_text(&names_path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| dir.join(l))
            .collect();
        if image_paths.is_empty() {
            return Err(Error::format(&names_path, "no images listed"));
        }
        let dirs_path = dir.join(LIGHT_DIRECTIONS);
        let light_directions = parse_triples(&read_text(&dirs_path)?, &dirs_path)?;
        if light_directions.len() != image_paths.len() {
            return Err(Error::format(
                &dirs_path,
                format!("{} light directions for {} images", light_directions.len(), image_paths.len()),
            ));
        }
        let int_path = dir.join(LIGHT_INTENSITIES);
        let light_intensities = if int_path.exists() {
            let v = parse_triples(&read_text(&int_path)?, &int_path)?;
            if v.len() != image_paths.len() {
                return Err(Error::format(
                    &int_path,
                    format!("{} intensities for {} images", v.len(), image_paths.len()),
                ));
            }
            if v.iter().flatten().any(|&x| x <= 0.0) {
                return Err(Error::format(&int_path, "intensities must be positive"));
            }
            Some(v)
        } else {
            None
        };
        for p in &image_paths {
            if !p.is_file() {
                return Err(Error::format(p, "listed image does not exist"));
            }
        }
        let existing = |name: &str| Some(dir.join(name)).filter(|p| p.is_file());
        Ok(Self {
            image_paths,
            light_directions,
            light_intensities,
            mask_path: existing(MASK),
            gt_normals_path: existing(GT_NORMALS),
        })
    }
}

fn read_raster(path: &Path) -> Result<RasterImage> {
    let is_pfm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    if is_pfm {
        let f = read_pfm(path)?;
        Ok(RasterImage {
            rows: f.rows,
            cols: f.cols,
            channels: f.channels,
            data: f.data.iter().map(|&v| v as f64).collect(),
        })
    } else {
        read_png(path)
    }
}

/// Column-major gray image after dividing by `intensity`.
pub fn to_gray(img: &RasterImage, intensity: Option<[f64; 3]>) -> Vec<f64> {
    let e = intensity.unwrap_or([1.0; 3]);
    // Gray images divide by the weighted mean intensity; 1 when none is given.
    let eg = match intensity {
        Some(e) => (0..3).map(|k| GRAY_WEIGHTS[k] * e[k]).sum::<f64>() / GRAY_WEIGHTS.iter().sum::<f64>(),
        None => 1.0,
    };
    let mut out = vec![0.0; img.rows * img.cols];
    for r in 0..img.rows {
        for c in 0..img.cols {
            let base = (r * img.cols + c) * img.channels;
            out[r + c * img.rows] = if img.channels == 3 {
                (0..3).map(|k| GRAY_WEIGHTS[k] * img.data[base + k] / e[k]).sum()
            } else {
                img.data[base] / eg
            };
        }
    }
    out
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::read(dir)?;
    let mut images = Vec::with_capacity(manifest.image_paths.len());
    let mut shape = None;
    for (k, path) in manifest.image_paths.iter().enumerate() {
        let img = read_raster(path)?;
        match shape {
            None => shape = Some((img.rows, img.cols)),
            Some(s) if s != (img.rows, img.cols) => {
                return Err(Error::format(
                    path,
                    format!("image is {}x{}, expected {}x{}", img.rows, img.cols, s.0, s.1),
                ))
            }
            _ => {}
        }
        let intensity = manifest.light_intensities.as_ref().map(|v| v[k]);
        images.push(to_gray(&img, intensity));
    }
    let (rows, cols) = shape.expect("at least one image");
    let stack = ImageStack::from_images(rows, cols, &images)?;
    let lights = LightMatrix::new(manifest.light_directions.clone())?;

    let mask = match &manifest.mask_path {
        Some(p) => {
            let m = read_mask(p)?;
            if m.rows() != rows || m.cols() != cols {
                return Err(Error::format(p, "mask size differs from the images"));
            }
            Some(m)
        }
        None => None,
    };
    let ground_truth = match &manifest.gt_normals_path {
        Some(p) => {
            let n = load_normal_map(p)?;
            if n.rows() != rows || n.cols() != cols {
                return Err(Error::format(p, "ground-truth size differs from the images"));
            }
            Some(n)
        }
        None => None,
    };
    let name = dir
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| dir.display().to_string());
    Ok(Dataset {
        name,
        images: stack,
        lights,
        mask,
        ground_truth,
    })
}

/// Write a dataset directory with PFM images (used for synthetic data).
pub fn save_dataset(
    dir: &Path,
    images: &ImageStack,
    lights: &LightMatrix,
    mask: Option<&PixelMask>,
    ground_truth: Option<&NormalField>,
) -> Result<()> {
    use super::pfm::{save_normal_map, save_scalar_map};
    use std::fmt::Write as _;

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = String::new();
    let mut dirs = String::new();
    for k in 0..images.image_count() {
        let name = format!("{k:03}.pfm");
        save_scalar_map(&images.image(k), images.rows(), images.cols(), &dir.join(&name))?;
        let _ = writeln!(names, "{name}");
        let l = lights.dirs()[k];
        let _ = writeln!(dirs, "{:e} {:e} {:e}", l[0], l[1], l[2]);
    }
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(FILENAMES, &names)?;
    write(LIGHT_DIRECTIONS, &dirs)?;
    if let Some(m) = mask {
        let img = image::GrayImage::from_fn(m.cols() as u32, m.rows() as u32, |c, r| {
            image::Luma([if m.get(r as usize, c as usize) { 255 } else { 0 }])
        });
        let p = dir.join(MASK);
        img.save(&p).map_err(|source| Error::Image { path: p, source })?;
    }
    if let Some(n) = ground_truth {
        save_normal_map(n, &dir.join(GT_NORMALS))?;
    }
    Ok(())
}
