//! Complete-data analyses of the final-visit outcome and Rubin's rules.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::data::{Arm, TrialDataset};
use crate::error::{Error, Result};
use crate::mvn::{cholesky_matrix, Matrix};

/// Treatment-effect estimate and its variance from one completed dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompleteDataEstimate {
    pub theta_hat: f64,
    pub w: f64,
    /// Residual degrees of freedom of the complete-data analysis.
    pub df_complete: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisMethod {
    /// Difference in final-visit means with unpooled variance.
    #[default]
    DiffMeans,
    /// OLS of the final visit on baseline and arm.
    Ancova,
}

impl FromStr for AnalysisMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "diff_means" => Ok(AnalysisMethod::DiffMeans),
            "ancova" => Ok(AnalysisMethod::Ancova),
            other => Err(Error::InvalidInput(format!("unknown analysis {other:?}"))),
        }
    }
}

impl AnalysisMethod {
    pub fn analyze(self, completed: &TrialDataset) -> Result<CompleteDataEstimate> {
        match self {
            AnalysisMethod::DiffMeans => analyze_diff_means(completed),
            AnalysisMethod::Ancova => analyze_ancova(completed),
        }
    }
}

fn final_values(data: &TrialDataset, arm: Arm) -> Result<Vec<f64>> {
    let j = data.last_visit();
    data.arm(arm)
        .map(|p| p.outcome(j).ok_or_else(|| Error::Incomplete { id: p.id().to_string() }))
        .collect()
}

/// Mean and unbiased variance.
fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `θ̂ = ȳ_active − ȳ_reference` at the final visit, with
/// `W = s²_active / n_a + s²_reference / n_r`.
pub fn analyze_diff_means(completed: &TrialDataset) -> Result<CompleteDataEstimate> {
    let act = final_values(completed, Arm::Active)?;
    let refr = final_values(completed, Arm::Reference)?;
    for (arm, v) in [(Arm::Active, &act), (Arm::Reference, &refr)] {
        match v.len() {
            0 => return Err(Error::EmptyArm(arm)),
            1 => return Err(Error::DegenerateVariance { arm, n: 1 }),
            _ => {}
        }
    }
    let (ma, va) = mean_var(&act);
    let (mr, vr) = mean_var(&refr);
    Ok(CompleteDataEstimate {
        theta_hat: ma - mr,
        w: va / act.len() as f64 + vr / refr.len() as f64,
        df_complete: (act.len() + refr.len() - 2) as f64,
    })
}

/// OLS of `Y_J` on `(1, Y_0, X)`; returns the coefficient of `X` and its
/// model-based variance `s² [(XᵀX)⁻¹]_{XX}` with `s² = RSS / (n − 3)`.
pub fn analyze_ancova(completed: &TrialDataset) -> Result<CompleteDataEstimate> {
    let j = completed.last_visit();
    let mut rows = Vec::with_capacity(completed.len());
    for p in completed.patients() {
        let y = p.outcome(j).ok_or_else(|| Error::Incomplete { id: p.id().to_string() })?;
        rows.push(([1.0, p.outcome(0).unwrap(), p.arm().indicator() as f64], y));
    }
    for arm in [Arm::Active, Arm::Reference] {
        if completed.count(arm) == 0 {
            return Err(Error::EmptyArm(arm));
        }
    }
    let n = rows.len();
    if n <= 3 {
        return Err(Error::InsufficientData { stage: j, available: n, required: 4 });
    }
    // Centre the non-intercept columns so the cross-product is well scaled;
    // the X coefficient and its variance are unchanged by centring.
    let nf = n as f64;
    let xbar = [
        rows.iter().map(|r| r.0[1]).sum::<f64>() / nf,
        rows.iter().map(|r| r.0[2]).sum::<f64>() / nf,
    ];
    let ybar = rows.iter().map(|r| r.1).sum::<f64>() / nf;
    let mut sxx = Matrix::zeros(2, 2);
    let mut sxy = [0.0; 2];
    for (x, y) in &rows {
        let d = [x[1] - xbar[0], x[2] - xbar[1]];
        for a in 0..2 {
            sxy[a] += d[a] * (y - ybar);
            for b in 0..2 {
                sxx[(a, b)] += d[a] * d[b];
            }
        }
    }
    let chol = cholesky_matrix(&sxx).map_err(|_| Error::SingularDesign)?;
    let beta = chol.solve(&sxy);
    let rss: f64 = rows
        .iter()
        .map(|(x, y)| {
            let fit = ybar + beta[0] * (x[1] - xbar[0]) + beta[1] * (x[2] - xbar[1]);
            (y - fit).powi(2)
        })
        .sum();
    let s2 = rss / (nf - 3.0);
    let inv_xx = chol.solve(&[0.0, 1.0])[1];
    Ok(CompleteDataEstimate {
        theta_hat: beta[1],
        w: s2 * inv_xx,
        df_complete: nf - 3.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub theta_bar: f64,
    pub w_bar: f64,
    pub b: f64,
    pub t_total: f64,
    pub df: f64,
    pub ci: (f64, f64),
    pub m: usize,
    pub alpha: f64,
}

impl PooledEstimate {
    pub fn se(&self) -> f64 {
        self.t_total.sqrt()
    }

    pub fn rejects(&self, null: f64) -> bool {
        null < self.ci.0 || null > self.ci.1
    }

    pub fn covers(&self, value: f64) -> bool {
        !self.rejects(value)
    }
}

/// Two-sided `1 − α/2` quantile of Student's t; falls back to the normal for
/// very large or infinite `df`.
pub fn t_quantile(df: f64, alpha: f64) -> f64 {
    let p = 1.0 - alpha / 2.0;
    if !df.is_finite() || df > 1e7 {
        return Normal::standard().inverse_cdf(p);
    }
    StudentsT::new(0.0, 1.0, df)
        .map(|t| t.inverse_cdf(p))
        .unwrap_or_else(|_| Normal::standard().inverse_cdf(p))
}

/// Rubin's large-sample degrees of freedom `(M − 1) / λ²` with
/// `λ = (1 + 1/M) B / T`.
pub fn rubin_df_large_sample(m: usize, w_bar: f64, b: f64) -> f64 {
    let between = (1.0 + 1.0 / m as f64) * b;
    if between == 0.0 {
        return f64::INFINITY;
    }
    (m as f64 - 1.0) * (1.0 + w_bar / between).powi(2)
}

/// Barnard–Rubin small-sample degrees of freedom.
pub fn barnard_rubin_df(m: usize, w_bar: f64, b: f64, df_complete: f64) -> f64 {
    let t = w_bar + (1.0 + 1.0 / m as f64) * b;
    let lambda = if t > 0.0 { (1.0 + 1.0 / m as f64) * b / t } else { 0.0 };
    let df_obs = (df_complete + 1.0) / (df_complete + 3.0) * df_complete * (1.0 - lambda);
    let df_old = rubin_df_large_sample(m, w_bar, b);
    if df_obs <= 0.0 {
        // λ = 1: no within-imputation information; keep the large-sample value
        return df_old;
    }
    if df_old.is_infinite() {
        return df_obs;
    }
    1.0 / (1.0 / df_old + 1.0 / df_obs)
}

pub fn rubin_pool(estimates: &[CompleteDataEstimate], alpha: f64) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::TooFewImputations(m));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mf = m as f64;
    let theta_bar = estimates.iter().map(|e| e.theta_hat).sum::<f64>() / mf;
    let w_bar = estimates.iter().map(|e| e.w).sum::<f64>() / mf;
    let b = estimates.iter().map(|e| (e.theta_hat - theta_bar).powi(2)).sum::<f64>() / (mf - 1.0);
    let t_total = w_bar + (1.0 + 1.0 / mf) * b;
    let df_complete = estimates.iter().map(|e| e.df_complete).fold(f64::INFINITY, f64::min);
    let df = barnard_rubin_df(m, w_bar, b, df_complete);
    let half = t_quantile(df, alpha) * t_total.sqrt();
    Ok(PooledEstimate {
        theta_bar,
        w_bar,
        b,
        t_total,
        df,
        ci: (theta_bar - half, theta_bar + half),
        m,
        alpha,
    })
}

/// Analyzes each completed dataset and pools with Rubin's rules.
pub fn analyze_and_pool(
    completed: &[TrialDataset],
    method: AnalysisMethod,
    alpha: f64,
) -> Result<PooledEstimate> {
    let estimates = completed
        .iter()
        .map(|d| method.analyze(d))
        .collect::<Result<Vec<_>>>()?;
    rubin_pool(&estimates, alpha)
}

/// JSON shape for pooled results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub estimate: f64,
    pub se: f64,
    pub df: f64,
    pub ci: [f64; 2],
    pub components: VarianceComponents,
    pub method: String,
    pub imputations: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub within: f64,
    pub between: f64,
}

impl From<&PooledEstimate> for PooledReport {
    fn from(p: &PooledEstimate) -> Self {
        PooledReport {
            estimate: p.theta_bar,
            se: p.se(),
            df: p.df,
            ci: [p.ci.0, p.ci.1],
            components: VarianceComponents {
                within: p.w_bar,
                between: p.b,
            },
            method: "rubin".into(),
            imputations: p.m,
            alpha: p.alpha,
        }
    }
}
