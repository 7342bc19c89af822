//! Bootstrap first, then impute a few times per bootstrap sample, then pool
//! with a one-way random-intercepts (method-of-moments ANOVA) decomposition.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{t_quantile, AnalysisMethod};
use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::impute::{complete_dataset, fit_arms, Strategy};
use crate::rng::SeedStream;

/// Attempts per bootstrap replicate before the whole run aborts.
pub const MAX_ATTEMPTS: usize = 10;

/// `B × M` estimates, row `b` holding the `M` imputations of bootstrap sample `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BootMiGrid {
    estimates: Vec<f64>,
    b: usize,
    m: usize,
    /// Resamples discarded because fitting or imputation failed.
    pub failed_attempts: usize,
}

impl BootMiGrid {
    pub fn new(b: usize, m: usize, estimates: Vec<f64>) -> Result<Self> {
        if b < 2 || m < 2 {
            return Err(Error::InvalidInput(format!("grid needs B, M >= 2, got {b} x {m}")));
        }
        if estimates.len() != b * m {
            return Err(Error::Dimension(format!("{} estimates for a {b} x {m} grid", estimates.len())));
        }
        if estimates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("grid has non-finite estimates".into()));
        }
        Ok(BootMiGrid { estimates, b, m, failed_attempts: 0 })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("ragged grid".into()));
        }
        BootMiGrid::new(rows.len(), m, rows.concat())
    }

    pub fn bootstraps(&self) -> usize {
        self.b
    }

    pub fn imputations(&self) -> usize {
        self.m
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.estimates[b * self.m..(b + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.estimates
    }

    pub fn grand_mean(&self) -> f64 {
        self.estimates.iter().sum::<f64>() / self.estimates.len() as f64
    }

    /// Writes `b,m,theta` rows with 1-based indices.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["b", "m", "theta"]).map_err(io)?;
        for b in 0..self.b {
            for (k, v) in self.row(b).iter().enumerate() {
                w.write_record([(b + 1).to_string(), (k + 1).to_string(), v.to_string()])
                    .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `b` stratified bootstrap replicates of `data`, fits both arms by
/// maximum likelihood on each, draws `m` improper imputations and analyzes
/// each completed dataset.
///
/// Replicate `r`, attempt `k` uses `stream.child(r).child(k)`. A replicate
/// whose fit or imputation fails is redrawn up to [`MAX_ATTEMPTS`] times.
pub fn boot_then_impute(
    data: &TrialDataset,
    strategy: Strategy,
    method: AnalysisMethod,
    b: usize,
    m: usize,
    stream: SeedStream,
) -> Result<BootMiGrid> {
    if b < 2 || m < 2 {
        return Err(Error::InvalidInput(format!("bootstrap needs B, M >= 2, got B={b}, M={m}")));
    }
    let rows: Vec<(Vec<f64>, usize)> = (0..b)
        .into_par_iter()
        .map(|r| bootstrap_row(data, strategy, method, m, stream.child(r as u64), r))
        .collect::<Result<_>>()?;
    let failed = rows.iter().map(|(_, f)| f).sum();
    let mut grid = BootMiGrid::new(b, m, rows.into_iter().flat_map(|(v, _)| v).collect())?;
    grid.failed_attempts = failed;
    Ok(grid)
}

fn bootstrap_row(
    data: &TrialDataset,
    strategy: Strategy,
    method: AnalysisMethod,
    m: usize,
    stream: SeedStream,
    replicate: usize,
) -> Result<(Vec<f64>, usize)> {
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let s = stream.child(attempt as u64);
        let sample = data.resample_shared(&mut s.child(0).rng());
        let run = || -> Result<Vec<f64>> {
            let (reference, active) = fit_arms(&sample)?;
            let imp = s.child(1);
            (0..m)
                .map(|k| {
                    let done = complete_dataset(&sample, &reference, &active, strategy, imp.child(k as u64))?;
                    Ok(method.analyze(&done)?.theta_hat)
                })
                .collect()
        };
        match run() {
            Ok(row) => return Ok((row, attempt)),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::BootstrapFailed {
        replicate,
        attempts: MAX_ATTEMPTS,
        source: Box::new(last.expect("at least one attempt")),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootMiEstimate {
    pub theta_bar: f64,
    pub sigma2_b: f64,
    pub sigma2_w: f64,
    pub v_hat: f64,
    pub df: f64,
    pub ci: (f64, f64),
    pub ms_between: f64,
    pub ms_within: f64,
    pub bootstraps: usize,
    pub imputations: usize,
    pub alpha: f64,
}

impl BootMiEstimate {
    pub fn se(&self) -> f64 {
        self.v_hat.sqrt()
    }

    pub fn rejects(&self, null: f64) -> bool {
        null < self.ci.0 || null > self.ci.1
    }
}

/// Random-intercepts pooling of a bootstrap/imputation grid.
///
/// `MS_b = M · Var(row means)`, `MS_w` = pooled within-row variance,
/// `σ²_w = MS_w`, `σ²_b = max(0, (MS_b − MS_w)/M)`, and the variance of the
/// grand mean is `(1 + 1/B) σ²_b + σ²_w / (B M)`, with Satterthwaite degrees
/// of freedom for that linear combination of mean squares.
pub fn vonhippel_pool(grid: &BootMiGrid, alpha: f64) -> Result<BootMiEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (b, m) = (grid.b, grid.m);
    let (bf, mf) = (b as f64, m as f64);
    let theta_bar = grid.grand_mean();
    if grid.estimates.iter().all(|&v| v == grid.estimates[0]) {
        return Err(Error::DegenerateGrid { theta_bar });
    }
    let row_means: Vec<f64> = (0..b).map(|r| grid.row(r).iter().sum::<f64>() / mf).collect();
    let ms_between = mf * row_means.iter().map(|x| (x - theta_bar).powi(2)).sum::<f64>() / (bf - 1.0);
    let ss_within: f64 = (0..b)
        .map(|r| grid.row(r).iter().map(|x| (x - row_means[r]).powi(2)).sum::<f64>())
        .sum();
    let ms_within = ss_within / (bf * (mf - 1.0));
    let sigma2_w = ms_within;
    let raw_b = (ms_between - ms_within) / mf;
    let sigma2_b = raw_b.max(0.0);
    let v_hat = (1.0 + 1.0 / bf) * sigma2_b + sigma2_w / (bf * mf);
    let df_between = bf - 1.0;
    let df_within = bf * (mf - 1.0);
    let df = if raw_b > 0.0 {
        let a = (bf + 1.0) / (bf * mf) * ms_between;
        let c = ms_within / mf;
        let denom = a * a / df_between + c * c / df_within;
        if denom > 0.0 { v_hat * v_hat / denom } else { f64::INFINITY }
    } else {
        df_within
    };
    let half = t_quantile(df, alpha) * v_hat.sqrt();
    Ok(BootMiEstimate {
        theta_bar,
        sigma2_b,
        sigma2_w,
        v_hat,
        df,
        ci: (theta_bar - half, theta_bar + half),
        ms_between,
        ms_within,
        bootstraps: b,
        imputations: m,
        alpha,
    })
}
