//! Sparse dictionary learning by exact block coordinate descent.
//!
//! Solves `min ||P - D B||_F^2 + mu^2 ||B||_0` subject to `||B||_inf <= q`
//! and unit-norm atoms, sweeping the atoms one at a time: for atom `i` the
//! code row is updated by clipped hard thresholding, then the atom by
//! normalizing the residual-weighted code.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::metrics::nsre;
use crate::patch::PatchMatrix;

/// Effectively unbounded code magnitude.
pub const DEFAULT_Q: f64 = 1e10;

/// `0` if `|y| < mu`, else `y`.
#[inline]
pub fn hard_threshold(y: f64, mu: f64) -> f64 {
    if y.abs() < mu {
        0.0
    } else {
        y
    }
}

#[inline]
fn clipped_code(h: f64, mu: f64, q: f64) -> f64 {
    let t = hard_threshold(h, mu);
    t.abs().min(q).copysign(t)
}

/// Optimal code row for atom `d_i` given the residual `E_i` that excludes
/// atom `i`: hard-threshold `E_i^T d_i` at `mu`, clip magnitudes at `q`.
/// Assumes `d_i` has unit norm.
pub fn update_code(e_i: &DMatrix<f64>, d_i: &DVector<f64>, mu: f64, q: f64) -> DVector<f64> {
    let h = e_i.tr_mul(d_i);
    h.map(|v| clipped_code(v, mu, q))
}

/// Optimal unit-norm atom for code row `g_i`: `E_i g_i / ||E_i g_i||`, or the
/// first standard basis vector when that is undefined.
pub fn update_atom(e_i: &DMatrix<f64>, g_i: &DVector<f64>) -> DVector<f64> {
    let v = e_i * g_i;
    normalize_or_basis(v, g_i.iter().all(|&x| x == 0.0))
}

fn normalize_or_basis(mut v: DVector<f64>, code_is_zero: bool) -> DVector<f64> {
    let norm = v.norm();
    if code_is_zero || !(norm > 0.0) {
        v.fill(0.0);
        v[0] = 1.0;
    } else {
        v /= norm;
    }
    v
}

/// Orthonormal DCT-II basis of size `n`; column `k` is frequency `k`.
pub fn dct_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, k| {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos()
    })
}

/// Unit-norm atoms stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
}

impl Dictionary {
    /// Columns are renormalized; a zero column is replaced by `e_1`.
    pub fn from_matrix(mut atoms: DMatrix<f64>) -> Self {
        for mut col in atoms.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            } else {
                col.fill(0.0);
                col[0] = 1.0;
            }
        }
        Self { atoms }
    }

    /// Kronecker product of 1-D DCT bases for a `wx x wy x wz` patch. The
    /// first `k` columns are kept; extra columns beyond the full basis are
    /// seeded pseudo-random unit vectors.
    pub fn dct(window: (usize, usize, usize), k: usize, seed: u64) -> Self {
        let (wx, wy, wz) = window;
        let dim = wx * wy * wz;
        let (bx, by, bz) = (dct_basis(wx), dct_basis(wy), dct_basis(wz));
        let mut atoms = DMatrix::zeros(dim, k);
        for a in 0..k.min(dim) {
            let (kx, ky, kz) = (a % wx, (a / wx) % wy, a / (wx * wy));
            for ch in 0..wz {
                for c in 0..wy {
                    for r in 0..wx {
                        atoms[(r + wx * (c + wy * ch), a)] = bx[(r, kx)] * by[(c, ky)] * bz[(ch, kz)];
                    }
                }
            }
        }
        if k > dim {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for a in dim..k {
                for i in 0..dim {
                    atoms[(i, a)] = rng.random_range(-1.0..1.0);
                }
            }
        }
        Self::from_matrix(atoms)
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atom_dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> DVector<f64> {
        self.atoms.column(i).into_owned()
    }
}

/// Code matrix `B` (`K x w`) with its magnitude bound `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodes {
    b: DMatrix<f64>,
    q: f64,
}

impl SparseCodes {
    pub fn zeros(atoms: usize, patches: usize, q: f64) -> Self {
        Self {
            b: DMatrix::zeros(atoms, patches),
            q,
        }
    }

    pub fn from_matrix(b: DMatrix<f64>, q: f64) -> Self {
        Self { b, q }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn bound(&self) -> f64 {
        self.q
    }

    pub fn nonzeros(&self) -> usize {
        self.b.iter().filter(|v| **v != 0.0).count()
    }

    pub fn nonzero_fraction(&self) -> f64 {
        if self.b.is_empty() {
            0.0
        } else {
            self.nonzeros() as f64 / self.b.len() as f64
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.b.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `D B`, skipping zero codes.
pub fn reconstruct(dict: &Dictionary, codes: &SparseCodes) -> DMatrix<f64> {
    let d = dict.matrix();
    let b = codes.matrix();
    let mut out = DMatrix::zeros(d.nrows(), b.ncols());
    for j in 0..b.ncols() {
        let mut col = out.column_mut(j);
        for i in 0..b.nrows() {
            let g = b[(i, j)];
            if g != 0.0 {
                col.axpy(g, &d.column(i), 1.0);
            }
        }
    }
    out
}

fn check_dims(p: &PatchMatrix, dict: &Dictionary, codes: &SparseCodes) -> Result<()> {
    if p.nrows() != dict.atom_dim() {
        return Err(Error::dim(format!(
            "patch dim {} does not match atom dim {}",
            p.nrows(),
            dict.atom_dim()
        )));
    }
    if codes.b.nrows() != dict.atom_count() || codes.b.ncols() != p.ncols() {
        return Err(Error::dim(format!(
            "codes {}x{} do not match {} atoms x {} patches",
            codes.b.nrows(),
            codes.b.ncols(),
            dict.atom_count(),
            p.ncols()
        )));
    }
    Ok(())
}

/// `||P - D B||_F^2`.
pub fn fit_error(p: &PatchMatrix, dict: &Dictionary, codes: &SparseCodes) -> Result<f64> {
    check_dims(p, dict, codes)?;
    Ok((p - reconstruct(dict, codes)).norm_squared())
}

/// `||P - D B||_F^2 + mu^2 ||B||_0`.
pub fn objective(p: &PatchMatrix, dict: &Dictionary, codes: &SparseCodes, mu: f64) -> Result<f64> {
    Ok(fit_error(p, dict, codes)? + mu * mu * codes.nonzeros() as f64)
}

/// One sequential sweep over all atoms. The residual `E = P - D B` is kept
/// up to date with rank-1 corrections restricted to the columns where the
/// old or new code is nonzero.
pub fn dict_pass(p: &PatchMatrix, dict: &mut Dictionary, codes: &mut SparseCodes, mu: f64) -> Result<()> {
    dict_pass_with_residual(p, dict, codes, mu).map(|_| ())
}

/// Same as [`dict_pass`] but returns the final residual, for callers that
/// need to audit it.
pub fn dict_pass_with_residual(
    p: &PatchMatrix,
    dict: &mut Dictionary,
    codes: &mut SparseCodes,
    mu: f64,
) -> Result<DMatrix<f64>> {
    check_dims(p, dict, codes)?;
    let mut e = p - reconstruct(dict, codes);
    sweep(&mut e, dict, codes, mu);
    Ok(e)
}

fn sweep(e: &mut DMatrix<f64>, dict: &mut Dictionary, codes: &mut SparseCodes, mu: f64) {
    let q = codes.q;
    let w = e.ncols();
    let mut g_old = vec![0.0; w];
    let mut g_new = vec![0.0; w];
    for i in 0..dict.atom_count() {
        let d_old = dict.atoms.column(i).into_owned();
        let dd = d_old.norm_squared();
        for j in 0..w {
            g_old[j] = codes.b[(i, j)];
        }

        // E_i^T d_i = E^T d_i + g_i ||d_i||^2
        for j in 0..w {
            let h = e.column(j).dot(&d_old) + g_old[j] * dd;
            g_new[j] = clipped_code(h, mu, q);
        }

        // E_i g = E g + d_old (g_old . g_new)
        let mut v = d_old.clone() * g_old.iter().zip(&g_new).map(|(a, b)| a * b).sum::<f64>();
        let mut any = false;
        for (j, &g) in g_new.iter().enumerate() {
            if g != 0.0 {
                any = true;
                v.axpy(g, &e.column(j), 1.0);
            }
        }
        let d_new = normalize_or_basis(v, !any);

        for j in 0..w {
            if g_old[j] != 0.0 {
                e.column_mut(j).axpy(g_old[j], &d_old, 1.0);
            }
            if g_new[j] != 0.0 {
                e.column_mut(j).axpy(-g_new[j], &d_new, 1.0);
            }
            codes.b[(i, j)] = g_new[j];
        }
        dict.atoms.set_column(i, &d_new);
    }
}

#[derive(Debug, Clone)]
pub struct LearnConfig {
    pub mu: f64,
    pub q: f64,
    pub atoms: usize,
    pub passes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LearnReport {
    pub dictionary: Dictionary,
    pub codes: SparseCodes,
    /// Objective after each pass, preceded by the initial value.
    pub objective: Vec<f64>,
    /// NSRE after each pass, preceded by the initial value.
    pub nsre: Vec<f64>,
}

/// Standalone dictionary learning from a DCT start with zero codes.
pub fn learn_dictionary(
    p: &PatchMatrix,
    window: (usize, usize, usize),
    cfg: &LearnConfig,
) -> Result<LearnReport> {
    if cfg.atoms == 0 || cfg.passes == 0 {
        return Err(Error::InvalidArgument("atoms and passes must be at least 1".into()));
    }
    if window.0 * window.1 * window.2 != p.nrows() {
        return Err(Error::dim(format!(
            "window {:?} does not match patch dim {}",
            window,
            p.nrows()
        )));
    }
    let mut dict = Dictionary::dct(window, cfg.atoms, cfg.seed);
    let mut codes = SparseCodes::zeros(cfg.atoms, p.ncols(), cfg.q);
    let mut objective_trace = vec![objective(p, &dict, &codes, cfg.mu)?];
    let mut nsre_trace = vec![nsre(p, &dict, &codes)?];
    for _ in 0..cfg.passes {
        dict_pass(p, &mut dict, &mut codes, cfg.mu)?;
        objective_trace.push(objective(p, &dict, &codes, cfg.mu)?);
        nsre_trace.push(nsre(p, &dict, &codes)?);
    }
    Ok(LearnReport {
        dictionary: dict,
        codes,
        objective: objective_trace,
        nsre: nsre_trace,
    })
}
