//! Small dense multivariate-normal primitives: Cholesky factorization,
//! conditioning on an observed subset, and seeded sampling.
//!
//! All solves go through the Cholesky factor of the observed block; no
//! explicit inverse is ever formed.

mod matrix;

use rand::Rng;
use rand_distr::StandardNormal;

pub use matrix::Matrix;

use crate::error::{Error, Result};

/// Relative pivot tolerance: a pivot at or below `PD_TOLERANCE * max(diag)` is rejected.
pub const PD_TOLERANCE: f64 = 1e-12;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector(Vec<f64>);

impl MeanVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("mean vector must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mean vector has non-finite entries".into()));
        }
        Ok(MeanVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn select(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.0[i]).collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for MeanVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Symmetric covariance matrix.
///
/// Construction checks shape, finiteness and symmetry (to 1e-12 relative to
/// the largest entry) and stores the exactly symmetrized matrix. Positive
/// definiteness is established by [`cholesky`].
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(Matrix);

impl CovMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() || m.rows() == 0 {
            return Err(Error::Dimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if m.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance has non-finite entries".into()));
        }
        let scale = m.as_slice().iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let n = m.rows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(CovMatrix(m.symmetrized()))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        CovMatrix::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        CovMatrix(Matrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn is_positive_definite(&self) -> bool {
        cholesky(self).is_ok()
    }
}

impl std::ops::Index<(usize, usize)> for CovMatrix {
    type Output = f64;

    fn index(&self, ix: (usize, usize)) -> &f64 {
        &self.0[ix]
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: Matrix,
}

pub fn cholesky(m: &CovMatrix) -> Result<Cholesky> {
    cholesky_matrix(m.matrix())
}

pub(crate) fn cholesky_matrix(m: &Matrix) -> Result<Cholesky> {
    debug_assert!(m.is_square());
    let n = m.rows();
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0_f64, f64::max);
    let tol = PD_TOLERANCE * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(Cholesky { l })
}

/// Cholesky-like factor of a positive semidefinite matrix: pivots at or
/// below tolerance are treated as exact zeros and their column dropped.
pub(crate) fn psd_factor(m: &Matrix) -> Matrix {
    let n = m.rows();
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0_f64, f64::max);
    let tol = PD_TOLERANCE * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    l
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    fn map_columns(&self, b: &Matrix, f: impl Fn(&[f64]) -> Vec<f64>) -> Matrix {
        assert_eq!(b.rows(), self.dim());
        let mut out = Matrix::zeros(b.rows(), b.cols());
        let mut col = vec![0.0; b.rows()];
        for j in 0..b.cols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = b[(i, j)];
            }
            for (i, v) in f(&col).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// Solves `L X = B` column by column.
    pub fn solve_lower_matrix(&self, b: &Matrix) -> Matrix {
        self.map_columns(b, |c| self.solve_lower(c))
    }

    /// Solves `M X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        self.map_columns(b, |c| self.solve(c))
    }

    pub fn reconstruct(&self) -> Matrix {
        self.l.matmul(&self.l.transpose())
    }
}

/// A Gaussian over the unobserved coordinates after conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    pub mean: Vec<f64>,
    /// Positive semidefinite; may be exactly zero.
    pub cov: Matrix,
    pub conditioned_on: Vec<usize>,
    /// Original indices of the coordinates `mean` and `cov` describe.
    pub free: Vec<usize>,
}

impl ConditionalGaussian {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Precomputed conditioning of one joint Gaussian on one observed index set.
///
/// Holds `K = Σ_mo Σ_oo⁻¹`, the offset `μ_m − K μ_o`, the conditional
/// covariance and its sampling factor, so repeated conditioning on different
/// observed values costs one matrix-vector product.
#[derive(Debug, Clone)]
pub struct ConditionalPlan {
    observed: Vec<usize>,
    free: Vec<usize>,
    gain: Matrix,
    offset: Vec<f64>,
    cov: Matrix,
    factor: Matrix,
}

impl ConditionalPlan {
    pub fn new(mu: &MeanVector, sigma: &CovMatrix, obs_idx: &[usize]) -> Result<Self> {
        let dim = mu.len();
        if sigma.dim() != dim {
            return Err(Error::Dimension(format!(
                "mean has length {dim} but covariance is {0}x{0}",
                sigma.dim()
            )));
        }
        let mut observed = obs_idx.to_vec();
        observed.sort_unstable();
        observed.dedup();
        if observed.len() != obs_idx.len() || observed.last().is_some_and(|&i| i >= dim) {
            return Err(Error::InvalidInput(format!(
                "observed indices {obs_idx:?} invalid for dimension {dim}"
            )));
        }
        let free: Vec<usize> = (0..dim).filter(|i| observed.binary_search(i).is_err()).collect();
        let s = sigma.matrix();
        let s_mm = s.select(&free, &free);
        let mu_m = mu.select(&free);
        if observed.is_empty() {
            let factor = psd_factor(&s_mm);
            return Ok(ConditionalPlan {
                observed,
                gain: Matrix::zeros(free.len(), 0),
                offset: mu_m,
                free,
                cov: s_mm,
                factor,
            });
        }
        let chol = cholesky_matrix(&s.select(&observed, &observed))?;
        let s_om = s.select(&observed, &free);
        // V = L⁻¹ Σ_om, so Σ_mo Σ_oo⁻¹ Σ_om = Vᵀ V and Kᵀ = L⁻ᵀ V.
        let v = chol.solve_lower_matrix(&s_om);
        let mut gain_t = Matrix::zeros(observed.len(), free.len());
        for j in 0..free.len() {
            let col: Vec<f64> = (0..observed.len()).map(|i| v[(i, j)]).collect();
            for (i, x) in chol.solve_upper(&col).into_iter().enumerate() {
                gain_t[(i, j)] = x;
            }
        }
        let gain = gain_t.transpose();
        let cov = s_mm.sub(&v.transpose().matmul(&v)).symmetrized();
        let mu_o = mu.select(&observed);
        let shift = gain.matvec(&mu_o);
        let offset = mu_m.iter().zip(&shift).map(|(a, b)| a - b).collect();
        let factor = psd_factor(&cov);
        Ok(ConditionalPlan {
            observed,
            free,
            gain,
            offset,
            cov,
            factor,
        })
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    /// Regression coefficients `Σ_mo Σ_oo⁻¹` of the free block on the observed block.
    pub fn gain(&self) -> &Matrix {
        &self.gain
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn mean(&self, y_obs: &[f64]) -> Result<Vec<f64>> {
        if y_obs.len() != self.observed.len() {
            return Err(Error::Dimension(format!(
                "{} observed values for {} observed indices",
                y_obs.len(),
                self.observed.len()
            )));
        }
        let mut m = self.offset.clone();
        for (i, mi) in m.iter_mut().enumerate() {
            for (g, y) in self.gain.row(i).iter().zip(y_obs) {
                *mi += g * y;
            }
        }
        Ok(m)
    }

    pub fn apply(&self, y_obs: &[f64]) -> Result<ConditionalGaussian> {
        Ok(ConditionalGaussian {
            mean: self.mean(y_obs)?,
            cov: self.cov.clone(),
            conditioned_on: self.observed.clone(),
            free: self.free.clone(),
        })
    }

    /// One draw of the free block given `y_obs`.
    pub fn draw<R: Rng + ?Sized>(&self, y_obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut out = self.mean(y_obs)?;
        add_correlated_noise(&self.factor, &mut out, rng);
        Ok(out)
    }
}

fn add_correlated_noise<R: Rng + ?Sized>(factor: &Matrix, out: &mut [f64], rng: &mut R) {
    let n = out.len();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..n {
        let row = factor.row(i);
        out[i] += row[..=i].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Distribution of the coordinates outside `obs_idx` given `Y[obs_idx] = y_obs`.
pub fn condition(
    mu: &MeanVector,
    sigma: &CovMatrix,
    obs_idx: &[usize],
    y_obs: &[f64],
) -> Result<ConditionalGaussian> {
    ConditionalPlan::new(mu, sigma, obs_idx)?.apply(y_obs)
}

/// `count` draws from `g`, one per row.
pub fn sample<R: Rng + ?Sized>(g: &ConditionalGaussian, rng: &mut R, count: usize) -> Result<Matrix> {
    if g.cov.rows() != g.dim() || g.cov.cols() != g.dim() {
        return Err(Error::Dimension("conditional covariance does not match mean".into()));
    }
    let factor = psd_factor(&g.cov);
    let dim = g.dim();
    let mut data = Vec::with_capacity(count * dim);
    let mut row = vec![0.0; dim];
    for _ in 0..count {
        row.copy_from_slice(&g.mean);
        add_correlated_noise(&factor, &mut row, rng);
        data.extend_from_slice(&row);
    }
    Matrix::from_row_major(count, dim, data)
}
