//! Normal estimation: least squares (LS), piecewise-linear least squares
//! (PLS), and the dictionary-regularized DLNV / PDLNV solvers.

mod config;
mod dl;
mod ls;
mod pls;
mod prox;

pub use config::{Method, SolverConfig};
pub use dl::{dlnv_cost, pdlnv_cost, solve_dlnv, solve_pdlnv};
pub use ls::{solve_ls, solve_ls_on, LsOperator};
pub use pls::{pls_cost, solve_pls};
pub use prox::{data_cost, patch_cost, prox_normal_step, ProxOperator};

use crate::dictlearn::{Dictionary, SparseCodes};
use crate::error::{Error, Result};
use crate::field::{ImageStack, LightMatrix, NormalField};
use crate::patch::PatchGrid;
use crate::reflectance::PiecewiseReflectance;

/// Images, calibrated lights, and the patch grid over the image plane.
#[derive(Debug, Clone)]
pub struct Problem {
    images: ImageStack,
    lights: LightMatrix,
    grid: PatchGrid,
}

impl Problem {
    pub fn new(images: ImageStack, lights: LightMatrix, grid: PatchGrid) -> Result<Self> {
        if images.image_count() != lights.len() {
            return Err(Error::dim(format!(
                "{} images but {} light directions",
                images.image_count(),
                lights.len()
            )));
        }
        if images.image_count() < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 images, got {}",
                images.image_count()
            )));
        }
        if grid.rows() != images.rows() || grid.cols() != images.cols() {
            return Err(Error::dim("patch grid does not match image size"));
        }
        Ok(Self { images, lights, grid })
    }

    /// Grid built from the config's window and stride.
    pub fn with_config(images: ImageStack, lights: LightMatrix, cfg: &SolverConfig) -> Result<Self> {
        let grid = PatchGrid::square(images.rows(), images.cols(), cfg.window, cfg.stride)?;
        Self::new(images, lights, grid)
    }

    pub fn images(&self) -> &ImageStack {
        &self.images
    }

    pub fn lights(&self) -> &LightMatrix {
        &self.lights
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.images.rows()
    }

    pub fn cols(&self) -> usize {
        self.images.cols()
    }

    /// `1 / (2 ||L||^2)`: the largest step for which every proximal normal
    /// update is guaranteed not to increase the cost.
    pub fn default_tau(&self) -> f64 {
        let s = self.lights.spectral_norm();
        1.0 / (2.0 * s * s)
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: Method,
    pub normals: NormalField,
    pub reflectance: Option<PiecewiseReflectance>,
    pub dictionary: Option<Dictionary>,
    pub codes: Option<SparseCodes>,
    /// Cost before the first iteration, then after every outer iteration.
    pub cost_trace: Vec<f64>,
    /// Nonzero fraction of the codes after every outer iteration.
    pub sparsity_trace: Vec<f64>,
}

/// Run `method` with `cfg`.
pub fn solve(method: Method, problem: &Problem, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    match method {
        Method::Ls => Ok(SolveReport {
            method,
            normals: solve_ls(problem)?,
            reflectance: None,
            dictionary: None,
            codes: None,
            cost_trace: Vec::new(),
            sparsity_trace: Vec::new(),
        }),
        Method::Pls => solve_pls(problem, cfg),
        Method::Dlnv => solve_dlnv(problem, cfg),
        Method::Pdlnv => solve_pdlnv(problem, cfg),
    }
}
