use crate::dictlearn::{reconstruct, Dictionary, SparseCodes};
use crate::error::{Error, Result};
use crate::field::{ImageStack, NormalField, PixelMask};
use crate::patch::PatchMatrix;

/// Vectors shorter than this are treated as undefined directions.
pub const MIN_NORM: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub rows: usize,
    pub cols: usize,
    /// Degrees per pixel, column-major; `NaN` where excluded.
    pub per_pixel: Vec<f64>,
    pub evaluated: usize,
    pub excluded: usize,
}

fn angle_deg(a: &[f64; 3], b: &[f64; 3]) -> Option<f64> {
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if na < MIN_NORM || nb < MIN_NORM {
        return None;
    }
    let cos = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
    Some(cos.clamp(-1.0, 1.0).acos().to_degrees())
}

/// Median with the midpoint average for even counts. Sorts in place.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-pixel angle between two normal fields. Pixels outside `mask` or
/// where either vector is (near) zero are excluded and counted.
pub fn angular_error(est: &NormalField, truth: &NormalField, mask: Option<&PixelMask>) -> Result<ErrorSummary> {
    if !est.same_shape(truth) {
        return Err(Error::dim(format!(
            "estimate {}x{} vs truth {}x{}",
            est.rows(),
            est.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    if let Some(m) = mask {
        if m.rows() != est.rows() || m.cols() != est.cols() {
            return Err(Error::dim("mask shape does not match normal fields"));
        }
    }
    let mut per_pixel = Vec::with_capacity(est.pixel_count());
    let mut values = Vec::new();
    for (i, (a, b)) in est.pixels().iter().zip(truth.pixels()).enumerate() {
        let inside = mask.is_none_or(|m| m.as_slice()[i]);
        match angle_deg(a, b).filter(|_| inside) {
            Some(deg) => {
                per_pixel.push(deg);
                values.push(deg);
            }
            None => per_pixel.push(f64::NAN),
        }
    }
    let excluded = per_pixel.len() - values.len();
    if values.is_empty() {
        return Err(Error::NoValidPixels { excluded });
    }
    let mean_deg = values.iter().sum::<f64>() / values.len() as f64;
    let evaluated = values.len();
    let median_deg = median(&mut values);
    Ok(ErrorSummary {
        mean_deg,
        median_deg,
        rows: est.rows(),
        cols: est.cols(),
        per_pixel,
        evaluated,
        excluded,
    })
}

/// `||P - D B||_F / ||P||_F`.
pub fn nsre(p: &PatchMatrix, dict: &Dictionary, codes: &SparseCodes) -> Result<f64> {
    let denom = p.norm();
    if denom == 0.0 {
        return Err(Error::ZeroPatches);
    }
    if p.nrows() != dict.atom_dim() || p.ncols() != codes.matrix().ncols() {
        return Err(Error::dim("patch matrix does not match dictionary/codes"));
    }
    Ok((p - reconstruct(dict, codes)).norm() / denom)
}

/// Signal-to-noise ratio in dB, `10 log10(sum I^2 / sum (I_noisy - I)^2)`.
/// Identical stacks give `+inf`.
pub fn compute_snr(clean: &ImageStack, noisy: &ImageStack) -> Result<f64> {
    if !clean.same_shape(noisy) {
        return Err(Error::dim("stacks differ in shape"));
    }
    let (signal, noise) = clean
        .as_slice()
        .iter()
        .zip(noisy.as_slice())
        .fold((0.0, 0.0), |(s, n), (a, b)| (s + a * a, n + (b - a) * (b - a)));
    Ok(if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    })
}
