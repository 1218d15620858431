use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::Problem;
use crate::error::{Error, Result};
use crate::field::{ImageStack, LightMatrix, NormalField};

/// Relative eigenvalue floor below which `L L^T` counts as singular.
const RANK_TOL: f64 = 1e-10;

/// Per-pixel least squares `n = (L L^T)^{-1} L y`, i.e. the rows of `Y L^+`.
#[derive(Debug, Clone)]
pub struct LsOperator {
    lights: LightMatrix,
    gram_inv: Matrix3<f64>,
}

impl LsOperator {
    pub fn new(lights: &LightMatrix) -> Result<Self> {
        let gram = lights.gram();
        let eig = gram.symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min <= RANK_TOL * max {
            return Err(Error::RankDeficient(min));
        }
        let gram_inv = gram.try_inverse().ok_or(Error::RankDeficient(min))?;
        Ok(Self {
            lights: lights.clone(),
            gram_inv,
        })
    }

    pub fn solve_pixel(&self, y: &[f64]) -> [f64; 3] {
        let n = self.gram_inv * Vector3::from(self.lights.back_project(y));
        [n[0], n[1], n[2]]
    }

    pub fn solve(&self, stack: &ImageStack) -> NormalField {
        let mut out = NormalField::zeros(stack.rows(), stack.cols());
        out.pixels_mut()
            .par_iter_mut()
            .enumerate()
            .for_each(|(p, n)| *n = self.solve_pixel(stack.pixel(p)));
        out
    }
}

/// Least-squares normals for an arbitrary stack and light matrix.
pub fn solve_ls_on(stack: &ImageStack, lights: &LightMatrix) -> Result<NormalField> {
    if stack.image_count() != lights.len() {
        return Err(Error::dim("image count does not match light count"));
    }
    Ok(LsOperator::new(lights)?.solve(stack))
}

pub fn solve_ls(problem: &Problem) -> Result<NormalField> {
    solve_ls_on(problem.images(), problem.lights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{angular_error, random_lights, render_sphere};
    use crate::patch::PatchGrid;

    fn problem(stack: ImageStack, lights: LightMatrix) -> Problem {
        let grid = PatchGrid::square(stack.rows(), stack.cols(), 1, 1).unwrap();
        Problem::new(stack, lights, grid).unwrap()
    }

    #[test]
    fn axis_lights_return_intensities() {
        let l = LightMatrix::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let s = ImageStack::from_images(1, 2, &[vec![0.1, -0.4], vec![0.2, 0.5], vec![0.9, 0.3]]).unwrap();
        let n = solve_ls(&problem(s, l)).unwrap();
        assert_eq!(n.pixels()[0], [0.1, 0.2, 0.9]);
        assert_eq!(n.pixels()[1], [-0.4, 0.5, 0.3]);
    }

    #[test]
    fn three_lights_invert_exactly() {
        let l = LightMatrix::new(vec![[0.2, 0.1, 0.9], [-0.5, 0.3, 0.8], [0.1, -0.6, 0.7]]).unwrap();
        let truth = [0.3, -0.2, 0.8];
        let mut y = vec![0.0; 3];
        l.project(&truth, &mut y);
        let s = ImageStack::from_images(1, 1, &[vec![y[0]], vec![y[1]], vec![y[2]]]).unwrap();
        let n = solve_ls(&problem(s, l)).unwrap();
        for k in 0..3 {
            assert!((n.pixels()[0][k] - truth[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn coplanar_lights_rejected() {
        let l = LightMatrix::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.6, 0.8, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        let s = ImageStack::zeros(2, 2, 4);
        assert!(matches!(solve_ls(&problem(s, l)), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn noiseless_sphere_is_recovered() {
        let lights = random_lights(10, 45.0, 17);
        let scene = render_sphere(64, &lights, None).unwrap();
        let n = solve_ls_on(&scene.images, &lights).unwrap();
        let lit = scene.images.lit_in_all().and(&scene.mask).unwrap();
        let err = angular_error(&n, &scene.normals, Some(&lit)).unwrap();
        assert!(err.mean_deg < 0.1, "{}", err.mean_deg);
    }
}
