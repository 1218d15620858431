//! Piecewise-linear least squares: per pixel, alternate the closed-form
//! slope update with the least-squares normal for the linearized data.

use rayon::prelude::*;

use super::{LsOperator, Method, Problem, SolveReport, SolverConfig};
use crate::error::Result;
use crate::field::{ImageStack, LightMatrix, NormalField};
use crate::reflectance::PiecewiseReflectance;

/// `sum_xy ||C a - L^T n||^2 + ||gamma (1^T a - 1)||^2`, with `linearized`
/// holding `C a` for every pixel.
pub fn pls_cost(
    linearized: &ImageStack,
    lights: &LightMatrix,
    normals: &NormalField,
    refl: &PiecewiseReflectance,
    gamma: f64,
) -> f64 {
    super::data_cost(normals, linearized, lights) + refl.constraint_penalty(gamma)
}

pub fn solve_pls(problem: &Problem, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let images = problem.images();
    let lights = problem.lights();
    let ls = LsOperator::new(lights)?;
    let mut refl = PiecewiseReflectance::from_stack(images, cfg.p)?;
    let updates = refl.slope_updates(images, lights, cfg.gamma);

    let mut linearized = refl.linearize(images);
    let mut normals = ls.solve(&linearized);
    let mut trace = vec![pls_cost(&linearized, lights, &normals, &refl, cfg.gamma)];

    let p = cfg.p;
    for _ in 0..cfg.pls_iters {
        // Slopes depend only on the pixel's own normal.
        let slopes: Vec<Vec<f64>> = normals
            .pixels()
            .par_iter()
            .zip(updates.par_iter())
            .map(|(n, u)| u.apply(n).as_slice().to_vec())
            .collect();
        for (px, a) in slopes.into_iter().enumerate() {
            refl.slopes_mut(px)[..p].copy_from_slice(&a);
        }
        linearized = refl.linearize(images);
        normals = ls.solve(&linearized);
        trace.push(pls_cost(&linearized, lights, &normals, &refl, cfg.gamma));
    }

    Ok(SolveReport {
        method: Method::Pls,
        normals,
        reflectance: Some(refl),
        dictionary: None,
        codes: None,
        cost_trace: trace,
        sparsity_trace: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{angular_error, random_lights, render_sphere};
    use crate::patch::PatchGrid;
    use crate::solvers::solve_ls;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(stack: ImageStack, lights: LightMatrix) -> Problem {
        let grid = PatchGrid::square(stack.rows(), stack.cols(), 2, 2).unwrap();
        Problem::new(stack, lights, grid).unwrap()
    }

    /// Normals within 25 degrees of the view axis, lit by every light.
    fn tilted_normals(rows: usize, cols: usize, seed: u64) -> NormalField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NormalField::from_fn(rows, cols, |_, _| {
            let theta = rng.random_range(0.0..25f64.to_radians());
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
        })
    }

    #[test]
    fn single_segment_reduces_to_ls() {
        let lights = random_lights(12, 40.0, 8);
        let scene = render_sphere(32, &lights, None).unwrap();
        let pr = problem(scene.images, lights);
        let cfg = SolverConfig {
            p: 1,
            pls_iters: 20,
            ..SolverConfig::default()
        };
        let pls = solve_pls(&pr, &cfg).unwrap().normals;
        let ls = solve_ls(&pr).unwrap();
        for (a, b) in pls.pixels().iter().zip(ls.pixels()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-6, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn cost_trace_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lights = random_lights(8, 50.0, 4);
        let imgs: Vec<Vec<f64>> = (0..8).map(|_| (0..60).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let pr = problem(ImageStack::from_images(6, 10, &imgs).unwrap(), lights);
        for p in [2, 3, 5] {
            let cfg = SolverConfig {
                p,
                pls_iters: 40,
                ..SolverConfig::default()
            };
            let t = solve_pls(&pr, &cfg).unwrap().cost_trace;
            assert_eq!(t.len(), 41);
            for w in t.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "p={p}: {} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn recovers_planted_two_segment_response() {
        let (rows, cols, d) = (12, 12, 16);
        let lights = random_lights(d, 35.0, 21);
        let truth = tilted_normals(rows, cols, 21);
        // Planted per-pixel response: slopes (a1, a2) summing to one, knee at
        // half the pixel's brightest observation.
        let (a1, a2) = (0.3, 0.7);
        let mut obs = ImageStack::zeros(rows, cols, d);
        let mut shade = vec![0.0; d];
        for (px, n) in truth.pixels().iter().enumerate() {
            lights.project(n, &mut shade);
            assert!(shade.iter().all(|&s| s > 0.0));
            let smax = shade.iter().cloned().fold(0.0, f64::max);
            let knee = smax / (a1 + a2);
            for (k, &s) in shade.iter().enumerate() {
                let t = if s <= a1 * knee { s / a1 } else { knee + (s - a1 * knee) / a2 };
                obs.set(px, k, t);
            }
        }
        let pr = problem(obs, lights);
        let ls_err = angular_error(&solve_ls(&pr).unwrap(), &truth, None).unwrap().mean_deg;
        let cfg = SolverConfig {
            p: 2,
            ..SolverConfig::default()
        };
        let est = solve_pls(&pr, &cfg).unwrap().normals;
        let err = angular_error(&est, &truth, None).unwrap().mean_deg;
        assert!(err < 1.0, "PLS {err} deg (LS {ls_err} deg)");
        assert!(ls_err > err);
    }
}
