//! Proximal gradient step for the normal update.
//!
//! With `(D, B)` fixed the normal subproblem is
//! `min_n ||y - A n||^2 + lambda sum_j ||P_j n - D b_j||^2`, `A = L^T (x) I`.
//! One step takes a gradient step on the data term pixel by pixel and then
//! solves the diagonal system
//! `(I + 2 tau lambda sum_j P_j^T P_j) n+ = n~ + 2 tau lambda sum_j P_j^T D b_j`.

use rayon::prelude::*;

use crate::dictlearn::{reconstruct, Dictionary, SparseCodes};
use crate::error::{Error, Result};
use crate::field::{ImageStack, LightMatrix, NormalField};
use crate::patch::PatchGrid;

/// `||y - A n||^2 = sum_xy ||y_xy - L^T n_xy||^2`.
pub fn data_cost(normals: &NormalField, data: &ImageStack, lights: &LightMatrix) -> f64 {
    let d = lights.len();
    let mut buf = vec![0.0; d];
    normals
        .pixels()
        .iter()
        .enumerate()
        .map(|(p, n)| {
            lights.project(n, &mut buf);
            buf.iter().zip(data.pixel(p)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}

/// `sum_j ||P_j n - D b_j||^2 + mu^2 ||B||_0`.
pub fn patch_cost(
    normals: &NormalField,
    grid: &PatchGrid,
    dict: &Dictionary,
    codes: &SparseCodes,
    mu: f64,
) -> Result<f64> {
    let p = grid.extract(normals)?;
    let fit = crate::dictlearn::fit_error(&p, dict, codes)?;
    Ok(fit + mu * mu * codes.nonzeros() as f64)
}

/// Everything in the step that stays fixed while `(D, B)` is fixed.
#[derive(Debug, Clone)]
pub struct ProxOperator<'a> {
    lights: &'a LightMatrix,
    tau: f64,
    /// `2 tau lambda sum_j P_j^T D b_j`
    pull: NormalField,
    /// `1 + 2 tau lambda coverage`, per pixel (identical across channels).
    denom: Vec<f64>,
}

impl<'a> ProxOperator<'a> {
    pub fn new(
        lights: &'a LightMatrix,
        grid: &PatchGrid,
        dict: &Dictionary,
        codes: &SparseCodes,
        lambda: f64,
        tau: f64,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {tau}")));
        }
        let w = 2.0 * tau * lambda;
        let mut pull = grid.adjoint_accumulate(&reconstruct(dict, codes))?;
        for v in pull.pixels_mut() {
            v.iter_mut().for_each(|x| *x *= w);
        }
        let denom = grid.coverage().pixels().iter().map(|c| 1.0 + w * c[0]).collect();
        Ok(Self {
            lights,
            tau,
            pull,
            denom,
        })
    }

    pub fn step(&self, normals: &NormalField, data: &ImageStack) -> NormalField {
        let d = self.lights.len();
        let mut out = normals.clone();
        out.pixels_mut()
            .par_iter_mut()
            .enumerate()
            .for_each_init(
                || vec![0.0; d],
                |resid, (p, n)| {
                    self.lights.project(n, resid);
                    for (r, y) in resid.iter_mut().zip(data.pixel(p)) {
                        *r -= y;
                    }
                    let g = self.lights.back_project(resid);
                    let pull = self.pull.pixels()[p];
                    let den = self.denom[p];
                    for k in 0..3 {
                        n[k] = (n[k] - 2.0 * self.tau * g[k] + pull[k]) / den;
                    }
                },
            );
        out
    }
}

/// One proximal gradient step on the normal subproblem.
#[allow(clippy::too_many_arguments)]
pub fn prox_normal_step(
    normals: &NormalField,
    data: &ImageStack,
    lights: &LightMatrix,
    dict: &Dictionary,
    codes: &SparseCodes,
    grid: &PatchGrid,
    lambda: f64,
    tau: f64,
) -> Result<NormalField> {
    if normals.rows() != data.rows() || normals.cols() != data.cols() || data.image_count() != lights.len() {
        return Err(Error::dim("normals, data, and lights disagree in shape"));
    }
    Ok(ProxOperator::new(lights, grid, dict, codes, lambda, tau)?.step(normals, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::random_lights;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_setup(seed: u64) -> (NormalField, ImageStack, LightMatrix, PatchGrid, Dictionary, SparseCodes) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, cols) = (10, 9);
        let lights = random_lights(6, 50.0, seed);
        let n = NormalField::from_fn(rows, cols, |_, _| {
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)]
        });
        let imgs: Vec<Vec<f64>> = (0..6).map(|_| (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let data = ImageStack::from_images(rows, cols, &imgs).unwrap();
        let grid = PatchGrid::square(rows, cols, 4, 2).unwrap();
        let dict = Dictionary::dct((4, 4, 3), 48, 0);
        let b = nalgebra::DMatrix::from_fn(48, grid.patch_count(), |_, _| {
            if rng.random_bool(0.2) {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        (n, data, lights, grid, dict, SparseCodes::from_matrix(b, 1e10))
    }

    #[test]
    fn zero_lambda_is_plain_gradient_step() {
        let (n, data, lights, grid, dict, codes) = random_setup(1);
        let tau = 0.05;
        let out = prox_normal_step(&n, &data, &lights, &dict, &codes, &grid, 0.0, tau).unwrap();
        let mut r = vec![0.0; 6];
        for (p, (a, b)) in n.pixels().iter().zip(out.pixels()).enumerate() {
            lights.project(a, &mut r);
            for (ri, y) in r.iter_mut().zip(data.pixel(p)) {
                *ri -= y;
            }
            let g = lights.back_project(&r);
            for k in 0..3 {
                assert!((b[k] - (a[k] - 2.0 * tau * g[k])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn consistent_point_is_fixed() {
        let (_, _, lights, grid, dict, _) = random_setup(2);
        // Field exactly representable by the DCT dictionary (any field is, as
        // the dictionary is square), with data generated from it.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = NormalField::from_fn(10, 9, |_, _| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0]);
        let p = grid.extract(&n).unwrap();
        let codes = SparseCodes::from_matrix(dict.matrix().tr_mul(&p), 1e10);
        let mut imgs = vec![vec![0.0; 90]; 6];
        let mut buf = vec![0.0; 6];
        for (px, v) in n.pixels().iter().enumerate() {
            lights.project(v, &mut buf);
            for k in 0..6 {
                imgs[k][px] = buf[k];
            }
        }
        let data = ImageStack::from_images(10, 9, &imgs).unwrap();
        let out = prox_normal_step(&n, &data, &lights, &dict, &codes, &grid, 3.0, 0.1).unwrap();
        for (a, b) in n.pixels().iter().zip(out.pixels()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn steps_decrease_subproblem_cost() {
        for seed in 0..5 {
            let (mut n, data, lights, grid, dict, codes) = random_setup(seed + 10);
            let lambda = 0.7;
            let s = lights.spectral_norm();
            let tau = 1.0 / (2.0 * s * s);
            let cost = |n: &NormalField| {
                data_cost(n, &data, &lights) + lambda * patch_cost(n, &grid, &dict, &codes, 0.0).unwrap()
            };
            let op = ProxOperator::new(&lights, &grid, &dict, &codes, lambda, tau).unwrap();
            let mut prev = cost(&n);
            for _ in 0..25 {
                n = op.step(&n, &data);
                let cur = cost(&n);
                assert!(cur <= prev * (1.0 + 1e-12), "{cur} > {prev}");
                prev = cur;
            }
        }
    }

    #[test]
    fn matches_dense_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (rows, cols) = (13, 16);
        let n_px = rows * cols;
        let lights = random_lights(7, 60.0, 5);
        let n = NormalField::from_fn(rows, cols, |_, _| {
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)]
        });
        let imgs: Vec<Vec<f64>> = (0..7).map(|_| (0..n_px).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let data = ImageStack::from_images(rows, cols, &imgs).unwrap();
        let grid = PatchGrid::new(rows, cols, (5, 4, 3), (3, 2)).unwrap();
        let dict = Dictionary::dct((5, 4, 3), 60, 1);
        let b = nalgebra::DMatrix::from_fn(60, grid.patch_count(), |_, _| rng.random_range(-1.0..1.0));
        let codes = SparseCodes::from_matrix(b, 1e10);
        let (lambda, tau) = (0.8, 0.03);

        // Stacked vector: entry `ch * N + p`. Explicit selection matrices P_j.
        let dim = 3 * n_px;
        let mut sum_ptp = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        let mut rhs_pull = nalgebra::DVector::<f64>::zeros(dim);
        let db = dict.matrix() * codes.matrix();
        for (j, &(r0, c0)) in grid.origins().iter().enumerate() {
            let mut pj = nalgebra::DMatrix::<f64>::zeros(60, dim);
            for ch in 0..3 {
                for c in 0..4 {
                    for r in 0..5 {
                        let px = (r0 + r) + rows * (c0 + c);
                        pj[(r + 5 * (c + 4 * ch), ch * n_px + px)] = 1.0;
                    }
                }
            }
            sum_ptp += pj.transpose() * &pj;
            rhs_pull += pj.transpose() * db.column(j);
        }
        let mut n_tilde = nalgebra::DVector::<f64>::zeros(dim);
        for p in 0..n_px {
            let v = n.pixels()[p];
            for ch in 0..3 {
                let mut g = 0.0;
                for k in 0..7 {
                    let l = lights.dirs()[k];
                    let res = l[0] * v[0] + l[1] * v[1] + l[2] * v[2] - data.get(p, k);
                    g += l[ch] * res;
                }
                n_tilde[ch * n_px + p] = v[ch] - 2.0 * tau * g;
            }
        }
        let w = 2.0 * tau * lambda;
        let lhs = nalgebra::DMatrix::<f64>::identity(dim, dim) + sum_ptp * w;
        let want = lhs.lu().solve(&(n_tilde + rhs_pull * w)).unwrap();

        let got = prox_normal_step(&n, &data, &lights, &dict, &codes, &grid, lambda, tau).unwrap();
        for p in 0..n_px {
            for ch in 0..3 {
                let diff = (got.pixels()[p][ch] - want[ch * n_px + p]).abs();
                assert!(diff < 1e-9, "pixel {p} channel {ch}: {diff}");
            }
        }
    }
}
