//! Per-arm multivariate normal models under monotone missingness.
//!
//! The likelihood of monotone data factors into the marginal of `Y_0` and
//! the regressions of `Y_j` on `(1, Y_0..Y_{j-1})` among patients still
//! observed at visit `j`. Each factor has a closed-form MLE and a conjugate
//! posterior, and the factors recompose into an unstructured `(μ, Σ)`.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::mvn::{cholesky_matrix, CovMatrix, Matrix, MeanVector};

/// Mean vector and covariance of one arm's outcomes `Y_0..Y_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    pub mu: MeanVector,
    pub sigma: CovMatrix,
}

impl ArmModel {
    pub fn new(mu: MeanVector, sigma: CovMatrix) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::Dimension(format!(
                "mean length {} vs covariance dimension {}",
                mu.len(),
                sigma.dim()
            )));
        }
        cholesky_matrix(sigma.matrix())?;
        Ok(ArmModel { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Regression of `Y_j` on `(1, Y_0..Y_{j-1})`; stage 0 is the marginal of `Y_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// Intercept followed by one slope per earlier visit.
    pub coef: Vec<f64>,
    pub resid_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialFactors {
    pub stages: Vec<Stage>,
}

impl SequentialFactors {
    pub fn to_model(&self) -> Result<ArmModel> {
        let n = self.stages.len();
        let mut mu = vec![0.0; n];
        let mut sigma = Matrix::zeros(n, n);
        for (j, stage) in self.stages.iter().enumerate() {
            if stage.coef.len() != j + 1 || !(stage.resid_var > 0.0) {
                return Err(Error::InvalidInput(format!("invalid stage {j}")));
            }
            let slopes = &stage.coef[1..];
            mu[j] = stage.coef[0] + slopes.iter().zip(&mu).map(|(b, m)| b * m).sum::<f64>();
            for l in 0..j {
                let c: f64 = slopes.iter().enumerate().map(|(k, b)| b * sigma[(k, l)]).sum();
                sigma[(j, l)] = c;
                sigma[(l, j)] = c;
            }
            let v: f64 = slopes.iter().enumerate().map(|(k, b)| b * sigma[(k, j)]).sum();
            sigma[(j, j)] = v + stage.resid_var;
        }
        ArmModel::new(MeanVector::new(mu)?, CovMatrix::new(sigma)?)
    }

    pub fn from_model(model: &ArmModel) -> Result<Self> {
        let s = model.sigma.matrix();
        let mut stages = Vec::with_capacity(model.dim());
        for j in 0..model.dim() {
            if j == 0 {
                stages.push(Stage {
                    coef: vec![model.mu[0]],
                    resid_var: s[(0, 0)],
                });
                continue;
            }
            let prev: Vec<usize> = (0..j).collect();
            let chol = cholesky_matrix(&s.select(&prev, &prev))?;
            let cross: Vec<f64> = (0..j).map(|k| s[(k, j)]).collect();
            let slopes = chol.solve(&cross);
            let explained: f64 = slopes.iter().zip(&cross).map(|(b, c)| b * c).sum();
            let intercept =
                model.mu[j] - slopes.iter().enumerate().map(|(k, b)| b * model.mu[k]).sum::<f64>();
            let mut coef = vec![intercept];
            coef.extend(slopes);
            stages.push(Stage {
                coef,
                resid_var: s[(j, j)] - explained,
            });
        }
        Ok(SequentialFactors { stages })
    }
}

/// Least-squares summary of one stage in centered form:
/// `y = a + bᵀ(x − x̄)` with `a = ȳ`.
struct StageFit {
    n: usize,
    x_mean: Vec<f64>,
    y_mean: f64,
    slopes: Vec<f64>,
    rss: f64,
    sxx: Option<crate::mvn::Cholesky>,
}

impl StageFit {
    fn intercept(&self, slopes: &[f64], a: f64) -> f64 {
        a - slopes.iter().zip(&self.x_mean).map(|(b, x)| b * x).sum::<f64>()
    }
}

fn min_stage_size(stage: usize) -> usize {
    // stage regressors: intercept + `stage` slopes
    stage + 1 + 2
}

fn fit_stages(last_visit: usize, patients: &[&PatientRecord]) -> Result<Vec<StageFit>> {
    let mut fits = Vec::with_capacity(last_visit + 1);
    let mut rows: Vec<&[Option<f64>]> = patients.iter().map(|p| p.outcomes()).collect();
    if let Some(p) = patients.iter().find(|p| p.last_visit() != last_visit) {
        return Err(Error::Dimension(format!("record {} has the wrong number of visits", p.id())));
    }
    for j in 0..=last_visit {
        rows.retain(|r| r[j].is_some());
        let n = rows.len();
        let required = min_stage_size(j);
        if n < required {
            return Err(Error::InsufficientData {
                stage: j,
                available: n,
                required,
            });
        }
        let nf = n as f64;
        let val = |r: &[Option<f64>], k: usize| r[k].unwrap();
        let mut x_mean = vec![0.0; j];
        let mut y_mean = 0.0;
        for r in &rows {
            for (k, m) in x_mean.iter_mut().enumerate() {
                *m += val(r, k);
            }
            y_mean += val(r, j);
        }
        x_mean.iter_mut().for_each(|m| *m /= nf);
        y_mean /= nf;

        let mut sxx = Matrix::zeros(j, j);
        let mut sxy = vec![0.0; j];
        let mut dx = vec![0.0; j];
        for r in &rows {
            for k in 0..j {
                dx[k] = val(r, k) - x_mean[k];
            }
            let dy = val(r, j) - y_mean;
            for k in 0..j {
                sxy[k] += dx[k] * dy;
                for l in 0..=k {
                    sxx[(k, l)] += dx[k] * dx[l];
                }
            }
        }
        for k in 0..j {
            for l in 0..k {
                sxx[(l, k)] = sxx[(k, l)];
            }
        }
        let (slopes, chol) = if j == 0 {
            (Vec::new(), None)
        } else {
            let chol = cholesky_matrix(&sxx).map_err(|_| Error::SingularDesign)?;
            (chol.solve(&sxy), Some(chol))
        };
        let mut rss = 0.0;
        for r in &rows {
            let fitted: f64 = slopes
                .iter()
                .enumerate()
                .map(|(k, b)| b * (val(r, k) - x_mean[k]))
                .sum();
            rss += (val(r, j) - y_mean - fitted).powi(2);
        }
        if !(rss > 0.0) {
            return Err(Error::SingularDesign);
        }
        fits.push(StageFit {
            n,
            x_mean,
            y_mean,
            slopes,
            rss,
            sxx: chol,
        });
    }
    Ok(fits)
}

/// Maximum likelihood `(μ, Σ)` for one arm under monotone MAR.
///
/// With no missing data this is the sample mean and the divisor-`n`
/// sample covariance.
pub fn fit_mle<'a>(
    last_visit: usize,
    patients: impl IntoIterator<Item = &'a PatientRecord>,
) -> Result<ArmModel> {
    mle_factors(last_visit, patients)?.to_model()
}

pub fn mle_factors<'a>(
    last_visit: usize,
    patients: impl IntoIterator<Item = &'a PatientRecord>,
) -> Result<SequentialFactors> {
    let patients: Vec<&PatientRecord> = patients.into_iter().collect();
    let fits = fit_stages(last_visit, &patients)?;
    let stages = fits
        .iter()
        .map(|f| {
            let mut coef = vec![f.intercept(&f.slopes, f.y_mean)];
            coef.extend_from_slice(&f.slopes);
            Stage {
                coef,
                resid_var: f.rss / f.n as f64,
            }
        })
        .collect();
    Ok(SequentialFactors { stages })
}

/// One posterior draw of `(μ, Σ)` under the prior `p(β, σ²) ∝ 1/σ²` on each
/// stage: `σ² ~ RSS / χ²_{n−p}`, then `β | σ² ~ N(β̂, σ² (XᵀX)⁻¹)`.
pub fn posterior_draw<'a, R: Rng + ?Sized>(
    last_visit: usize,
    patients: impl IntoIterator<Item = &'a PatientRecord>,
    rng: &mut R,
) -> Result<ArmModel> {
    posterior_factors(last_visit, patients, rng)?.to_model()
}

pub fn posterior_factors<'a, R: Rng + ?Sized>(
    last_visit: usize,
    patients: impl IntoIterator<Item = &'a PatientRecord>,
    rng: &mut R,
) -> Result<SequentialFactors> {
    let patients: Vec<&PatientRecord> = patients.into_iter().collect();
    let fits = fit_stages(last_visit, &patients)?;
    let mut stages = Vec::with_capacity(fits.len());
    for (j, f) in fits.iter().enumerate() {
        let dof = (f.n - (j + 1)) as f64;
        let chi2 = ChiSquared::new(dof).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let resid_var = f.rss / chi2.sample(rng);
        let sd = resid_var.sqrt();
        let a = f.y_mean + sd / (f.n as f64).sqrt() * rng.sample::<f64, _>(StandardNormal);
        let slopes = match &f.sxx {
            None => Vec::new(),
            Some(chol) => {
                // Sxx = L Lᵀ, so L⁻ᵀ z has covariance Sxx⁻¹.
                let z: Vec<f64> = (0..j).map(|_| rng.sample(StandardNormal)).collect();
                let noise = chol.solve_upper(&z);
                f.slopes.iter().zip(noise).map(|(b, e)| b + sd * e).collect()
            }
        };
        let mut coef = vec![f.intercept(&slopes, a)];
        coef.extend(slopes);
        stages.push(Stage { coef, resid_var });
    }
    Ok(SequentialFactors { stages })
}
