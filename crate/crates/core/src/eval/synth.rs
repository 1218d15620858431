//! Synthetic Lambertian hemisphere used as ground truth.
//!
//! Pixel `(r, c)` of a `size x size` image maps to
//! `x = (c + 0.5 - size/2) / (size/2)`, `y = (r + 0.5 - size/2) / (size/2)`,
//! so `x` runs along columns and `y` down the rows. Inside the unit disk the
//! surface normal is `(x, y, sqrt(1 - x^2 - y^2))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{ImageStack, LightMatrix, NormalField, PixelMask};

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub images: ImageStack,
    /// Albedo-scaled ground-truth normals; zero outside the disk.
    pub normals: NormalField,
    pub mask: PixelMask,
}

pub fn disk_coords(size: usize, r: usize, c: usize) -> (f64, f64) {
    let half = size as f64 / 2.0;
    ((c as f64 + 0.5 - half) / half, (r as f64 + 0.5 - half) / half)
}

/// Render the hemisphere under `lights` with attached shadows. `albedo`, if
/// given, is a column-major per-pixel map; otherwise albedo is 1.
pub fn render_sphere(size: usize, lights: &LightMatrix, albedo: Option<&[f64]>) -> Result<SyntheticScene> {
    if size < 16 {
        return Err(Error::InvalidArgument(format!("sphere size must be at least 16, got {size}")));
    }
    if lights.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 lights".into()));
    }
    if let Some(a) = albedo {
        if a.len() != size * size {
            return Err(Error::dim(format!("albedo map has {} pixels, expected {}", a.len(), size * size)));
        }
    }
    let mask = PixelMask::from_fn(size, size, |r, c| {
        let (x, y) = disk_coords(size, r, c);
        x * x + y * y < 1.0
    });
    let normals = NormalField::from_fn(size, size, |r, c| {
        let (x, y) = disk_coords(size, r, c);
        let rr = x * x + y * y;
        if rr >= 1.0 {
            return [0.0; 3];
        }
        let rho = albedo.map_or(1.0, |a| a[r + c * size]);
        [rho * x, rho * y, rho * (1.0 - rr).sqrt()]
    });
    let d = lights.len();
    let mut images = ImageStack::zeros(size, size, d);
    let mut buf = vec![0.0; d];
    for (p, n) in normals.pixels().iter().enumerate() {
        lights.project(n, &mut buf);
        for (dst, v) in images.pixel_mut(p).iter_mut().zip(&buf) {
            *dst = v.max(0.0);
        }
    }
    Ok(SyntheticScene { images, normals, mask })
}

/// Directions drawn uniformly from the cap within `max_polar_deg` of the
/// viewing axis `(0, 0, 1)`.
pub fn random_lights(count: usize, max_polar_deg: f64, seed: u64) -> LightMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_z = max_polar_deg.to_radians().cos();
    let dirs = (0..count)
        .map(|_| {
            let z: f64 = rng.random_range(min_z..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - z * z).sqrt();
            [s * phi.cos(), s * phi.sin(), z]
        })
        .collect();
    LightMatrix::new(dirs).expect("unit directions")
}
