//! Piecewise-linear inverse reflectance.
//!
//! At each pixel the inverse reflectance `g(t) = sum_k a_k g_k(t)` is built
//! from `p` clipped ramps `g_k` whose breakpoints `0 = b_0 < b_1 < ... < b_p`
//! split the pixel's intensity range evenly. With `p = 1` and `a = 1` the
//! model is Lambertian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{ImageStack, LightMatrix};

pub const DEFAULT_GAMMA: f64 = 1e3;

/// `p + 1` breakpoints, `b_0 = 0` and `b_p` = the largest intensity at the
/// pixel. An all-zero pixel falls back to the unit range.
pub fn make_breakpoints(intensities: &[f64], p: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(Error::InvalidArgument("segment count p must be at least 1".into()));
    }
    let max = intensities.iter().cloned().fold(0.0_f64, f64::max);
    let top = if max > 0.0 { max } else { 1.0 };
    Ok((0..=p).map(|k| top * k as f64 / p as f64).collect())
}

/// Write the `p` ramp values `g_k(t)` into `out`.
pub fn eval_basis_into(t: f64, breakpoints: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let lo = breakpoints[k];
        let hi = breakpoints[k + 1];
        *o = if t < lo {
            0.0
        } else if t <= hi {
            t - lo
        } else {
            hi - lo
        };
    }
}

pub fn eval_basis(t: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; breakpoints.len() - 1];
    eval_basis_into(t, breakpoints, &mut out);
    out
}

/// The `d x p` matrix whose row `j` is the basis evaluated at intensity `j`.
pub fn build_c(intensities: &[f64], breakpoints: &[f64]) -> DMatrix<f64> {
    let p = breakpoints.len() - 1;
    let mut c = DMatrix::zeros(intensities.len(), p);
    let mut row = vec![0.0; p];
    for (j, &t) in intensities.iter().enumerate() {
        eval_basis_into(t, breakpoints, &mut row);
        for k in 0..p {
            c[(j, k)] = row[k];
        }
    }
    c
}

/// `[C; gamma 1^T]^+`, the pseudoinverse behind the closed-form slope update.
fn stacked_pinv(c: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let (d, p) = c.shape();
    let mut stacked = DMatrix::zeros(d + 1, p);
    stacked.view_mut((0, 0), (d, p)).copy_from(c);
    stacked.row_mut(d).fill(gamma);
    let svd = stacked.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = f64::EPSILON * (d + 1).max(p) as f64 * smax;
    svd.pseudo_inverse(eps).expect("svd computed with both factors")
}

/// Minimize `||C a - L^T n||^2 + ||gamma (1^T a - 1)||^2` over `a`, i.e. the
/// least-squares solution of `[C; gamma 1^T] a = [L^T n; gamma]`.
pub fn update_slopes(c: &DMatrix<f64>, lights: &LightMatrix, n: &[f64; 3], gamma: f64) -> DVector<f64> {
    SlopeUpdate::new(c, lights, gamma).apply(n)
}

/// Slope update with the pseudoinverse folded into an affine map of `n`:
/// `a = M n + c0`.
#[derive(Debug, Clone)]
pub struct SlopeUpdate {
    m: DMatrix<f64>,
    c0: DVector<f64>,
}

impl SlopeUpdate {
    pub fn new(c: &DMatrix<f64>, lights: &LightMatrix, gamma: f64) -> Self {
        let (d, p) = c.shape();
        let pinv = stacked_pinv(c, gamma);
        let mut m = DMatrix::zeros(p, 3);
        for k in 0..d {
            let l = lights.dirs()[k];
            for i in 0..p {
                let w = pinv[(i, k)];
                m[(i, 0)] += w * l[0];
                m[(i, 1)] += w * l[1];
                m[(i, 2)] += w * l[2];
            }
        }
        let c0 = pinv.column(d) * gamma;
        Self { m, c0 }
    }

    pub fn apply(&self, n: &[f64; 3]) -> DVector<f64> {
        &self.m * DVector::from_column_slice(n) + &self.c0
    }
}

/// Per-pixel reflectance: breakpoints and slopes for every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseReflectance {
    p: usize,
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
}

impl PiecewiseReflectance {
    /// Breakpoints from the data, slopes initialized to `1/p`.
    pub fn from_stack(stack: &ImageStack, p: usize) -> Result<Self> {
        let npix = stack.pixel_count();
        let mut breakpoints = Vec::with_capacity(npix * (p + 1));
        for px in 0..npix {
            breakpoints.extend(make_breakpoints(stack.pixel(px), p)?);
        }
        Ok(Self {
            p,
            breakpoints,
            slopes: vec![1.0 / p as f64; npix * p],
        })
    }

    pub fn segments(&self) -> usize {
        self.p
    }

    pub fn pixel_count(&self) -> usize {
        self.slopes.len() / self.p
    }

    pub fn breakpoints(&self, px: usize) -> &[f64] {
        &self.breakpoints[px * (self.p + 1)..(px + 1) * (self.p + 1)]
    }

    pub fn slopes(&self, px: usize) -> &[f64] {
        &self.slopes[px * self.p..(px + 1) * self.p]
    }

    pub fn slopes_mut(&mut self, px: usize) -> &mut [f64] {
        &mut self.slopes[px * self.p..(px + 1) * self.p]
    }

    /// `g(t)` at one pixel.
    pub fn eval(&self, px: usize, t: f64) -> f64 {
        eval_basis(t, self.breakpoints(px))
            .iter()
            .zip(self.slopes(px))
            .map(|(g, a)| g * a)
            .sum()
    }

    /// `C_xy a_xy` for every pixel: the linearized data the normal update
    /// fits against.
    pub fn linearize(&self, stack: &ImageStack) -> ImageStack {
        let d = stack.image_count();
        let mut out = stack.clone();
        let mut basis = vec![0.0; self.p];
        for px in 0..stack.pixel_count() {
            let bp = self.breakpoints(px);
            let a = self.slopes(px);
            let dst = out.pixel_mut(px);
            for j in 0..d {
                eval_basis_into(stack.get(px, j), bp, &mut basis);
                dst[j] = basis.iter().zip(a).map(|(g, a)| g * a).sum();
            }
        }
        out
    }

    /// Per-pixel affine slope updates, precomputed from the raw images.
    pub fn slope_updates(&self, stack: &ImageStack, lights: &LightMatrix, gamma: f64) -> Vec<SlopeUpdate> {
        (0..stack.pixel_count())
            .map(|px| SlopeUpdate::new(&build_c(stack.pixel(px), self.breakpoints(px)), lights, gamma))
            .collect()
    }

    /// `sum_xy ||gamma (1^T a_xy - 1)||^2`.
    pub fn constraint_penalty(&self, gamma: f64) -> f64 {
        self.slopes
            .chunks(self.p)
            .map(|a| {
                let r = gamma * (a.iter().sum::<f64>() - 1.0);
                r * r
            })
            .sum()
    }
}
