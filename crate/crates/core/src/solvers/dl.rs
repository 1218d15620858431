//! DLNV and PDLNV: alternating minimization over the slopes (PDLNV only),
//! the dictionary and codes, and the normals.

use rayon::prelude::*;

use super::{LsOperator, Method, Problem, ProxOperator, SolveReport, SolverConfig};
use crate::dictlearn::{dict_pass, Dictionary, SparseCodes};
use crate::error::Result;
use crate::field::{ImageStack, NormalField};
use crate::reflectance::{PiecewiseReflectance, SlopeUpdate};

/// `||y - A n||^2 + lambda (sum_j ||P_j n - D b_j||^2 + mu^2 ||B||_0)`.
pub fn dlnv_cost(
    problem: &Problem,
    normals: &NormalField,
    dict: &Dictionary,
    codes: &SparseCodes,
    lambda: f64,
    mu: f64,
) -> Result<f64> {
    let data = super::data_cost(normals, problem.images(), problem.lights());
    Ok(data + lambda * super::patch_cost(normals, problem.grid(), dict, codes, mu)?)
}

/// PLS cost of the current slopes plus the same patch regularizer as DLNV.
#[allow(clippy::too_many_arguments)]
pub fn pdlnv_cost(
    problem: &Problem,
    normals: &NormalField,
    refl: &PiecewiseReflectance,
    dict: &Dictionary,
    codes: &SparseCodes,
    lambda: f64,
    mu: f64,
    gamma: f64,
) -> Result<f64> {
    let linearized = refl.linearize(problem.images());
    let fit = super::pls_cost(&linearized, problem.lights(), normals, refl, gamma);
    Ok(fit + lambda * super::patch_cost(normals, problem.grid(), dict, codes, mu)?)
}

struct Reflectance {
    model: PiecewiseReflectance,
    updates: Vec<SlopeUpdate>,
    gamma: f64,
}

fn run(problem: &Problem, cfg: &SolverConfig, method: Method, mut refl: Option<Reflectance>) -> Result<SolveReport> {
    cfg.validate()?;
    let images = problem.images();
    let lights = problem.lights();
    let grid = problem.grid();
    let tau = cfg.tau.unwrap_or_else(|| problem.default_tau());

    let mut data: ImageStack = match &refl {
        Some(r) => r.model.linearize(images),
        None => images.clone(),
    };
    let mut normals = LsOperator::new(lights)?.solve(&data);
    let mut dict = Dictionary::dct(grid.window(), cfg.atoms, cfg.seed);
    let mut codes = SparseCodes::zeros(cfg.atoms, grid.patch_count(), cfg.q);

    let cost = |normals: &NormalField, refl: &Option<Reflectance>, dict: &Dictionary, codes: &SparseCodes| match refl {
        Some(r) => pdlnv_cost(problem, normals, &r.model, dict, codes, cfg.lambda, cfg.mu, r.gamma),
        None => dlnv_cost(problem, normals, dict, codes, cfg.lambda, cfg.mu),
    };

    let mut cost_trace = vec![cost(&normals, &refl, &dict, &codes)?];
    let mut sparsity_trace = Vec::new();
    for _ in 0..cfg.outer_iters_for(method) {
        if let Some(r) = refl.as_mut() {
            let slopes: Vec<_> = normals
                .pixels()
                .par_iter()
                .zip(r.updates.par_iter())
                .map(|(n, u)| u.apply(n))
                .collect();
            for (px, a) in slopes.iter().enumerate() {
                r.model.slopes_mut(px).copy_from_slice(a.as_slice());
            }
            data = r.model.linearize(images);
        }

        let patches = grid.extract(&normals)?;
        for _ in 0..cfg.dict_passes {
            dict_pass(&patches, &mut dict, &mut codes, cfg.mu)?;
        }

        let op = ProxOperator::new(lights, grid, &dict, &codes, cfg.lambda, tau)?;
        for _ in 0..cfg.prox_steps {
            normals = op.step(&normals, &data);
        }

        cost_trace.push(cost(&normals, &refl, &dict, &codes)?);
        sparsity_trace.push(codes.nonzero_fraction());
    }

    Ok(SolveReport {
        method,
        normals,
        reflectance: refl.map(|r| r.model),
        dictionary: Some(dict),
        codes: Some(codes),
        cost_trace,
        sparsity_trace,
    })
}

/// Dictionary-regularized Lambertian photometric stereo, started from the
/// least-squares normals with a DCT dictionary and zero codes.
pub fn solve_dlnv(problem: &Problem, cfg: &SolverConfig) -> Result<SolveReport> {
    run(problem, cfg, Method::Dlnv, None)
}

/// Dictionary-regularized photometric stereo under the piecewise-linear
/// inverse reflectance. Slopes start uniform at `1/p` and the normals at the
/// least-squares fit of the resulting linearized data.
pub fn solve_pdlnv(problem: &Problem, cfg: &SolverConfig) -> Result<SolveReport> {
    let model = PiecewiseReflectance::from_stack(problem.images(), cfg.p)?;
    let updates = model.slope_updates(problem.images(), problem.lights(), cfg.gamma);
    run(
        problem,
        cfg,
        Method::Pdlnv,
        Some(Reflectance {
            model,
            updates,
            gamma: cfg.gamma,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{add_poisson_noise, angular_error, random_lights, render_sphere};
    use crate::field::LightMatrix;
    use crate::patch::PatchGrid;
    use crate::solvers::solve_ls;

    fn noisy_sphere(size: usize, d: usize, snr: f64, seed: u64) -> (Problem, NormalField) {
        let lights: LightMatrix = random_lights(d, 45.0, seed);
        let scene = render_sphere(size, &lights, None).unwrap();
        let noisy = add_poisson_noise(&scene.images, snr, seed).unwrap();
        let grid = PatchGrid::square(size, size, 4, 2).unwrap();
        (Problem::new(noisy, lights, grid).unwrap(), scene.normals)
    }

    fn small_cfg() -> SolverConfig {
        SolverConfig {
            lambda: 0.5,
            mu: 0.05,
            atoms: 48,
            window: 4,
            stride: 2,
            outer_iters: Some(6),
            prox_steps: 10,
            ..SolverConfig::default()
        }
    }

    fn mean_deviation(a: &NormalField, b: &NormalField) -> f64 {
        angular_error(a, b, None).unwrap().mean_deg
    }

    #[test]
    fn zero_lambda_stays_at_ls() {
        let (pr, _) = noisy_sphere(24, 8, 15.0, 1);
        let cfg = SolverConfig {
            lambda: 0.0,
            ..small_cfg()
        };
        let dl = solve_dlnv(&pr, &cfg).unwrap().normals;
        let ls = solve_ls(&pr).unwrap();
        assert!(mean_deviation(&dl, &ls) < 1e-4);
    }

    #[test]
    fn cost_traces_non_increasing() {
        let (pr, _) = noisy_sphere(24, 10, 8.0, 2);
        for method in [Method::Dlnv, Method::Pdlnv] {
            let r = crate::solvers::solve(method, &pr, &small_cfg()).unwrap();
            assert_eq!(r.cost_trace.len(), 7);
            assert_eq!(r.sparsity_trace.len(), 6);
            for w in r.cost_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "{method}: {} > {}", w[1], w[0]);
            }
            let codes = r.codes.unwrap();
            assert!(codes.max_abs() <= codes.bound());
        }
    }

    #[test]
    fn pdlnv_single_segment_matches_dlnv() {
        let (pr, _) = noisy_sphere(24, 8, 12.0, 3);
        let cfg = SolverConfig {
            p: 1,
            gamma: 1e10,
            ..small_cfg()
        };
        let a = solve_pdlnv(&pr, &cfg).unwrap().normals;
        let b = solve_dlnv(&pr, &cfg).unwrap().normals;
        assert!(mean_deviation(&a, &b) < 1e-4);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let (pr, _) = noisy_sphere(20, 8, 10.0, 4);
        let cfg = small_cfg();
        let par = solve_pdlnv(&pr, &cfg).unwrap().cost_trace;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| solve_pdlnv(&pr, &cfg)).unwrap().cost_trace;
        for (a, b) in par.iter().zip(&ser) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn regularizer_helps_under_heavy_noise() {
        let (pr, truth) = noisy_sphere(32, 20, 5.0, 5);
        let cfg = SolverConfig {
            lambda: 1.0,
            mu: 0.1,
            outer_iters: Some(10),
            ..small_cfg()
        };
        let ls = mean_deviation(&solve_ls(&pr).unwrap(), &truth);
        let dl = mean_deviation(&solve_dlnv(&pr, &cfg).unwrap().normals, &truth);
        assert!(dl < ls, "DLNV {dl} vs LS {ls}");
    }
}
