//! Sliding-window patch extraction over a 3-channel normal field.
//!
//! A patch of size `wx x wy x 3` is vectorized with the row index varying
//! fastest, then the column, then the channel:
//! `idx = r + wx * (c + wy * ch)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::NormalField;

pub const CHANNELS: usize = 3;

/// Column `j` holds the vectorized patch at origin `j` of the grid.
pub type PatchMatrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    rows: usize,
    cols: usize,
    window: (usize, usize),
    stride: (usize, usize),
    origins: Vec<(usize, usize)>,
}

/// Origins `0, s, 2s, ...` along one axis, with a final origin clamped to
/// `len - win` when the stride pattern would leave the border uncovered.
fn axis_origins(len: usize, win: usize, stride: usize) -> Vec<usize> {
    let last = len - win;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

impl PatchGrid {
    /// `window` is `(wx, wy, wz)`; `wz` must be 3.
    pub fn new(
        rows: usize,
        cols: usize,
        window: (usize, usize, usize),
        stride: (usize, usize),
    ) -> Result<Self> {
        let (wx, wy, wz) = window;
        if wz != CHANNELS {
            return Err(Error::dim(format!("window depth must be {CHANNELS}, got {wz}")));
        }
        if wx == 0 || wy == 0 {
            return Err(Error::dim("window must be non-empty"));
        }
        if wx > rows || wy > cols {
            return Err(Error::dim(format!(
                "window {wx}x{wy} larger than image {rows}x{cols}"
            )));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::InvalidArgument("stride must be at least 1".into()));
        }
        let ro = axis_origins(rows, wx, stride.0);
        let co = axis_origins(cols, wy, stride.1);
        let origins = ro
            .iter()
            .flat_map(|&r| co.iter().map(move |&c| (r, c)))
            .collect();
        Ok(Self {
            rows,
            cols,
            window: (wx, wy),
            stride,
            origins,
        })
    }

    /// Square window `w x w x 3` with the same stride along both axes.
    pub fn square(rows: usize, cols: usize, w: usize, stride: usize) -> Result<Self> {
        Self::new(rows, cols, (w, w, CHANNELS), (stride, stride))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn window(&self) -> (usize, usize, usize) {
        (self.window.0, self.window.1, CHANNELS)
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride
    }

    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn patch_count(&self) -> usize {
        self.origins.len()
    }

    pub fn patch_dim(&self) -> usize {
        self.window.0 * self.window.1 * CHANNELS
    }

    fn check_field(&self, n: &NormalField) -> Result<()> {
        if n.rows() != self.rows || n.cols() != self.cols {
            return Err(Error::dim(format!(
                "field {}x{} does not match grid {}x{}",
                n.rows(),
                n.cols(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    fn check_patches(&self, patches: &PatchMatrix) -> Result<()> {
        if patches.nrows() != self.patch_dim() || patches.ncols() != self.patch_count() {
            return Err(Error::dim(format!(
                "patch matrix {}x{} does not match grid ({}x{})",
                patches.nrows(),
                patches.ncols(),
                self.patch_dim(),
                self.patch_count()
            )));
        }
        Ok(())
    }

    pub fn extract(&self, n: &NormalField) -> Result<PatchMatrix> {
        self.check_field(n)?;
        let (wx, wy) = self.window;
        let mut out = PatchMatrix::zeros(self.patch_dim(), self.patch_count());
        let px = n.pixels();
        for (j, &(r0, c0)) in self.origins.iter().enumerate() {
            let mut col = out.column_mut(j);
            for ch in 0..CHANNELS {
                for c in 0..wy {
                    let base = (c0 + c) * self.rows + r0;
                    let dst = wx * (c + wy * ch);
                    for r in 0..wx {
                        col[dst + r] = px[base + r][ch];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Scatter-add every patch back to field coordinates: `sum_j P_j^T q_j`.
    pub fn adjoint_accumulate(&self, patches: &PatchMatrix) -> Result<NormalField> {
        self.check_patches(patches)?;
        let (wx, wy) = self.window;
        let mut out = NormalField::zeros(self.rows, self.cols);
        let px = out.pixels_mut();
        for (j, &(r0, c0)) in self.origins.iter().enumerate() {
            let col = patches.column(j);
            for ch in 0..CHANNELS {
                for c in 0..wy {
                    let base = (c0 + c) * self.rows + r0;
                    let src = wx * (c + wy * ch);
                    for r in 0..wx {
                        px[base + r][ch] += col[src + r];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Diagonal of `sum_j P_j^T P_j`: how many windows cover each entry.
    pub fn coverage(&self) -> NormalField {
        let (wx, wy) = self.window;
        let mut counts = vec![0u32; self.rows * self.cols];
        for &(r0, c0) in &self.origins {
            for c in 0..wy {
                let base = (c0 + c) * self.rows + r0;
                for slot in &mut counts[base..base + wx] {
                    *slot += 1;
                }
            }
        }
        let data = counts
            .into_iter()
            .map(|k| {
                let k = f64::from(k);
                [k, k, k]
            })
            .collect();
        NormalField::from_vec(self.rows, self.cols, data).expect("coverage shape")
    }
}
