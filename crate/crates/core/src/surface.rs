//! Height from normals: least-squares integration of the gradient field with
//! a cosine-basis Poisson solve under natural boundary conditions.
//!
//! `x` runs along columns and `y` along rows, so `p = dz/dx` is the
//! derivative across columns and `q = dz/dy` across rows.

use nalgebra::DMatrix;

use crate::dictlearn::dct_basis;
use crate::error::{Error, Result};
use crate::field::{NormalField, PixelMask};

/// Pixels with `|n_z|` below this get zero gradient and are marked invalid.
pub const MIN_NZ: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    rows: usize,
    cols: usize,
    p: Vec<f64>,
    q: Vec<f64>,
    valid: PixelMask,
}

impl Gradients {
    /// Column-major `p` and `q`; every pixel is valid.
    pub fn new(rows: usize, cols: usize, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != rows * cols || q.len() != rows * cols {
            return Err(Error::dim(format!(
                "gradient fields of length {} and {} for a {rows}x{cols} grid",
                p.len(),
                q.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            p,
            q,
            valid: PixelMask::full(rows, cols),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn valid(&self) -> &PixelMask {
        &self.valid
    }
}

/// `p = -n_x / n_z`, `q = -n_y / n_z`.
pub fn gradients_from_normals(normals: &NormalField) -> Gradients {
    let n = normals.pixel_count();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut valid = vec![false; n];
    for (i, v) in normals.pixels().iter().enumerate() {
        if v[2].abs() >= MIN_NZ && v.iter().all(|x| x.is_finite()) {
            p[i] = -v[0] / v[2];
            q[i] = -v[1] / v[2];
            valid[i] = true;
        }
    }
    Gradients {
        rows: normals.rows(),
        cols: normals.cols(),
        p,
        q,
        valid: PixelMask::from_vec(normals.rows(), normals.cols(), valid).expect("sizes agree"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    rows: usize,
    cols: usize,
    /// Column-major, zero mean.
    heights: Vec<f64>,
    valid: PixelMask,
}

impl HeightMap {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.heights[row + col * self.rows]
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn valid(&self) -> &PixelMask {
        &self.valid
    }
}

/// Eigenvalues `2 - 2 cos(pi k / n)` of the path-graph Laplacian, which the
/// orthonormal DCT-II diagonalizes.
fn laplacian_eigs(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect()
}

/// Minimizes the squared mismatch between forward differences of `z` and the
/// gradients averaged onto each edge, then shifts to zero mean.
pub fn integrate(g: &Gradients) -> HeightMap {
    let (rows, cols) = (g.rows, g.cols);
    let p = DMatrix::from_column_slice(rows, cols, &g.p);
    let q = DMatrix::from_column_slice(rows, cols, &g.q);

    // Right-hand side D^T g of the normal equations (D^T D) z = D^T g.
    let mut rhs = DMatrix::<f64>::zeros(rows, cols);
    for c in 0..cols.saturating_sub(1) {
        for r in 0..rows {
            let e = 0.5 * (p[(r, c)] + p[(r, c + 1)]);
            rhs[(r, c)] -= e;
            rhs[(r, c + 1)] += e;
        }
    }
    for c in 0..cols {
        for r in 0..rows.saturating_sub(1) {
            let e = 0.5 * (q[(r, c)] + q[(r + 1, c)]);
            rhs[(r, c)] -= e;
            rhs[(r + 1, c)] += e;
        }
    }

    let br = dct_basis(rows);
    let bc = dct_basis(cols);
    let mut coef = br.tr_mul(&rhs) * &bc;
    let er = laplacian_eigs(rows);
    let ec = laplacian_eigs(cols);
    for c in 0..cols {
        for r in 0..rows {
            let den = er[r] + ec[c];
            coef[(r, c)] = if den > 0.0 { coef[(r, c)] / den } else { 0.0 };
        }
    }
    let z = &br * coef * bc.transpose();

    let mut heights: Vec<f64> = z.as_slice().to_vec();
    let mean = heights.iter().sum::<f64>() / heights.len() as f64;
    heights.iter_mut().for_each(|h| *h -= mean);
    HeightMap {
        rows,
        cols,
        heights,
        valid: g.valid.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::disk_coords;

    /// RMSE after removing the best constant over the pixels `keep` selects.
    fn rmse_up_to_constant(h: &HeightMap, truth: impl Fn(usize, usize) -> f64, keep: impl Fn(usize, usize) -> bool) -> f64 {
        let mut diffs = Vec::new();
        for c in 0..h.cols() {
            for r in 0..h.rows() {
                if keep(r, c) {
                    diffs.push(h.get(r, c) - truth(r, c));
                }
            }
        }
        let m = diffs.iter().sum::<f64>() / diffs.len() as f64;
        (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt()
    }

    fn from_surface(rows: usize, cols: usize, z: impl Fn(f64, f64) -> f64, dz: impl Fn(f64, f64) -> (f64, f64)) -> (Gradients, Vec<f64>) {
        let mut p = vec![0.0; rows * cols];
        let mut q = vec![0.0; rows * cols];
        let mut zs = vec![0.0; rows * cols];
        for c in 0..cols {
            for r in 0..rows {
                let (x, y) = (c as f64, r as f64);
                let (gx, gy) = dz(x, y);
                p[r + c * rows] = gx;
                q[r + c * rows] = gy;
                zs[r + c * rows] = z(x, y);
            }
        }
        (Gradients::new(rows, cols, p, q).unwrap(), zs)
    }

    #[test]
    fn flat_normals_give_zero_gradients() {
        let n = NormalField::filled(5, 4, [0.0, 0.0, 1.0]);
        let g = gradients_from_normals(&n);
        assert!(g.p().iter().chain(g.q()).all(|v| *v == 0.0));
        assert_eq!(g.valid().count(), 20);
        let h = integrate(&g);
        assert!(h.heights().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn grazing_normals_are_invalid() {
        let n = NormalField::from_vec(1, 2, vec![[1.0, 0.0, 5e-4], [0.6, 0.0, 0.8]]).unwrap();
        let g = gradients_from_normals(&n);
        assert_eq!(g.valid().as_slice(), &[false, true]);
        assert_eq!(g.p()[0], 0.0);
        assert!((g.p()[1] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn plane_is_recovered() {
        let (a, b) = (0.3, -0.7);
        let n = NormalField::filled(17, 23, {
            let s = (a * a + b * b + 1.0f64).sqrt();
            [-a / s, -b / s, 1.0 / s]
        });
        let g = gradients_from_normals(&n);
        assert!(g.p().iter().all(|v| (v - a).abs() < 1e-12));
        assert!(g.q().iter().all(|v| (v - b).abs() < 1e-12));
        let h = integrate(&g);
        let err = rmse_up_to_constant(&h, |r, c| a * c as f64 + b * r as f64, |_, _| true);
        assert!(err < 1e-8, "{err}");
        assert!(h.heights().iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn smooth_surface_is_recovered() {
        let (rows, cols) = (64, 64);
        let f = 2.0 * std::f64::consts::PI / 64.0;
        let z = |x: f64, y: f64| 5.0 * (f * x).sin() * (0.5 * f * y).cos() + 0.01 * x * y;
        let dz = |x: f64, y: f64| {
            (
                5.0 * f * (f * x).cos() * (0.5 * f * y).cos() + 0.01 * y,
                -2.5 * f * (f * x).sin() * (0.5 * f * y).sin() + 0.01 * x,
            )
        };
        let (g, zs) = from_surface(rows, cols, z, dz);
        let h = integrate(&g);
        let range = zs.iter().cloned().fold(f64::MIN, f64::max) - zs.iter().cloned().fold(f64::MAX, f64::min);
        let err = rmse_up_to_constant(&h, |r, c| zs[r + c * rows], |_, _| true);
        // Discretization error of the averaged differences is second order.
        // Edge averaging is second-order accurate, so sampled analytic
        // gradients carry an O(h^2) error.
        assert!(err < 1e-4 * range, "{err} vs range {range}");
    }

    #[test]
    fn quadratic_surface_is_exact() {
        // Averaged endpoint slopes equal the difference of a quadratic exactly.
        let (rows, cols) = (64, 64);
        let z = |x: f64, y: f64| 0.02 * x * x - 0.05 * x * y + 0.03 * y * y + 0.7 * x - 1.1 * y;
        let dz = |x: f64, y: f64| (0.04 * x - 0.05 * y + 0.7, -0.05 * x + 0.06 * y - 1.1);
        let (g, zs) = from_surface(rows, cols, z, dz);
        let h = integrate(&g);
        let range = zs.iter().cloned().fold(f64::MIN, f64::max) - zs.iter().cloned().fold(f64::MAX, f64::min);
        let err = rmse_up_to_constant(&h, |r, c| zs[r + c * rows], |_, _| true);
        assert!(err < 1e-6 * range, "{err} vs range {range}");
    }

    #[test]
    fn hemisphere_from_sphere_normals() {
        let size = 96;
        let radius = size as f64 / 2.0;
        let n = NormalField::from_fn(size, size, |r, c| {
            let (x, y) = disk_coords(size, r, c);
            let rho = x * x + y * y;
            if rho < 1.0 {
                [x, y, (1.0 - rho).sqrt()]
            } else {
                [0.0, 0.0, 0.0]
            }
        });
        let g = gradients_from_normals(&n);
        let h = integrate(&g);
        let truth = |r, c| -> f64 {
            let (x, y) = disk_coords(size, r, c);
            radius * (1.0 - (x * x + y * y).min(1.0)).sqrt()
        };
        let inside = |r, c| {
            let (x, y) = disk_coords(size, r, c);
            x * x + y * y < 0.81
        };
        let err = rmse_up_to_constant(&h, truth, inside);
        assert!(err < 0.01 * radius, "{err} vs radius {radius}");
    }

    #[test]
    fn sphere_gradients_match_analytic() {
        let size = 64;
        let n = NormalField::from_fn(size, size, |r, c| {
            let (x, y) = disk_coords(size, r, c);
            [x, y, (1.0 - (x * x + y * y).min(1.0)).sqrt()]
        });
        let g = gradients_from_normals(&n);
        for c in 0..size {
            for r in 0..size {
                let (x, y) = disk_coords(size, r, c);
                if x * x + y * y < 0.8 {
                    let z = (1.0 - x * x - y * y).sqrt();
                    assert!((g.p()[r + c * size] + x / z).abs() < 1e-6);
                    assert!((g.q()[r + c * size] + y / z).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn constant_offset_in_p_adds_ramp() {
        let (rows, cols) = (12, 15);
        let (g, _) = from_surface(rows, cols, |_, _| 0.0, |x, y| ((0.3 * x).sin(), (0.2 * y).cos() * x * 0.1));
        let h0 = integrate(&g);
        let shifted = Gradients::new(rows, cols, g.p().iter().map(|v| v + 0.4).collect(), g.q().to_vec()).unwrap();
        let h1 = integrate(&shifted);
        let err = rmse_up_to_constant(&h1, |r, c| h0.get(r, c) + 0.4 * c as f64, |_, _| true);
        assert!(err < 1e-10, "{err}");
    }
}
