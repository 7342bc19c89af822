//! Closed forms for the single follow-up case (`J = 1`, baseline ignored).
//!
//! Here `D = 0` means the follow-up outcome is missing. Under J2R every
//! outcome has mean `μ_r` except observed active-arm outcomes, which have
//! mean `μ_a`; the treatment effect is `θ = (μ_a − μ_r)(1 − π_1)` with
//! `π_1` the active-arm dropout probability.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, TrialDataset};
use crate::error::{Error, Result};

fn require_single_follow_up(data: &TrialDataset) -> Result<()> {
    if data.last_visit() != 1 {
        return Err(Error::InvalidInput(format!(
            "closed forms need exactly one follow-up visit, dataset has J = {}",
            data.last_visit()
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Sufficient statistics of a completed `J = 1` dataset, grouped by the
/// original dropout pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedStats {
    /// Mean of `Y_1` among active patients with `D = 1`.
    pub mu_hat_a: f64,
    /// Mean of `Y_1` among reference patients with `D = 1`.
    pub mu_hat_r_obs: f64,
    /// Mean of `Y_1` over the reference arm plus active patients with `D = 0`.
    pub mu_hat_r_com: f64,
    /// Fraction of the active arm with `D = 0`.
    pub pi_hat_1: f64,
    /// Sample variance of the `μ_a` group.
    pub sigma2_hat_a: f64,
    /// Sample variance of the `μ_r^com` group.
    pub sigma2_hat_r: f64,
    pub n_a: usize,
    pub n_r: usize,
}

impl SimplifiedStats {
    /// `original` supplies the dropout pattern, `completed` the (imputed)
    /// outcomes, matched by position.
    pub fn from_completed(original: &TrialDataset, completed: &TrialDataset) -> Result<Self> {
        require_single_follow_up(original)?;
        if completed.len() != original.len() || completed.last_visit() != 1 {
            return Err(Error::Dimension("completed dataset does not match the original".into()));
        }
        let mut active_obs = Vec::new();
        let mut reference_obs = Vec::new();
        let mut reference_com = Vec::new();
        let (mut n_a, mut n_r, mut active_missing) = (0, 0, 0);
        for (orig, done) in original.patients().iter().zip(completed.patients()) {
            let y = done.outcome(1).ok_or_else(|| Error::Incomplete { id: done.id().to_string() })?;
            let observed = orig.dropout() == 1;
            match orig.arm() {
                Arm::Active => {
                    n_a += 1;
                    if observed {
                        active_obs.push(y);
                    } else {
                        active_missing += 1;
                        reference_com.push(y);
                    }
                }
                Arm::Reference => {
                    n_r += 1;
                    reference_com.push(y);
                    if observed {
                        reference_obs.push(y);
                    }
                }
            }
        }
        if n_a == 0 {
            return Err(Error::EmptyArm(Arm::Active));
        }
        if reference_obs.is_empty() {
            return Err(Error::NoObservedReference);
        }
        Ok(SimplifiedStats {
            mu_hat_a: if active_obs.is_empty() { 0.0 } else { mean(&active_obs) },
            mu_hat_r_obs: mean(&reference_obs),
            mu_hat_r_com: mean(&reference_com),
            pi_hat_1: active_missing as f64 / n_a as f64,
            sigma2_hat_a: sample_var(&active_obs),
            sigma2_hat_r: sample_var(&reference_com),
            n_a,
            n_r,
        })
    }

    /// Complete-data MLE of `θ` under the embedding model: `(μ̂_a − μ̂_r^com)(1 − π̂_1)`.
    pub fn complete_data_mle(&self) -> f64 {
        (self.mu_hat_a - self.mu_hat_r_com) * (1.0 - self.pi_hat_1)
    }
}

/// Observed-data MLE of `θ`: `(μ̂_a − μ̂_r^obs)(1 − π̂_1)`.
pub fn simplified_point(data: &TrialDataset) -> Result<f64> {
    require_single_follow_up(data)?;
    let ref_obs: Vec<f64> = data.arm(Arm::Reference).filter_map(|p| p.outcome(1)).collect();
    if ref_obs.is_empty() {
        return Err(Error::NoObservedReference);
    }
    let n_a = data.count(Arm::Active);
    if n_a == 0 {
        return Err(Error::EmptyArm(Arm::Active));
    }
    let act_obs: Vec<f64> = data.arm(Arm::Active).filter_map(|p| p.outcome(1)).collect();
    if act_obs.is_empty() {
        return Ok(0.0);
    }
    let pi_hat = 1.0 - act_obs.len() as f64 / n_a as f64;
    Ok((mean(&act_obs) - mean(&ref_obs)) * (1.0 - pi_hat))
}

/// Large-sample complete-data posterior variance of `θ` under the embedding model:
/// `(1−π̂)[σ̂²_r(1−π̂)/(n_r + n_a π̂) + σ̂²_a/n_a + (μ̂_r^com − μ̂_a)² π̂ / n_a]`.
pub fn simplified_mle_variance(stats: &SimplifiedStats) -> f64 {
    let p = stats.pi_hat_1;
    let (n_a, n_r) = (stats.n_a as f64, stats.n_r as f64);
    (1.0 - p)
        * (stats.sigma2_hat_r * (1.0 - p) / (n_r + n_a * p)
            + stats.sigma2_hat_a / n_a
            + (stats.mu_hat_r_com - stats.mu_hat_a).powi(2) * p / n_a)
}

/// `Var(Y | X = 1)` under the J2R mixture: `(μ_a−μ_r)² π(1−π) + σ²_a(1−π) + σ²_r π`.
pub fn simplified_var_active(mu_a: f64, mu_r: f64, sigma2_a: f64, sigma2_r: f64, pi_1: f64) -> f64 {
    (mu_a - mu_r).powi(2) * pi_1 * (1.0 - pi_1) + sigma2_a * (1.0 - pi_1) + sigma2_r * pi_1
}

/// Observed-data posterior variance of `θ` under the embedding model,
/// decomposed over completed datasets as `E[Var(θ | Z_com)] + Var[E(θ | Z_com)]`
/// with the embedding model's own complete-data mean and variance in place
/// of the analyst's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedVariance {
    pub within: f64,
    pub between: f64,
    pub total: f64,
}

pub fn embedded_variance(original: &TrialDataset, completed: &[TrialDataset]) -> Result<EmbeddedVariance> {
    let m = completed.len();
    if m < 2 {
        return Err(Error::TooFewImputations(m));
    }
    let stats = completed
        .iter()
        .map(|c| SimplifiedStats::from_completed(original, c))
        .collect::<Result<Vec<_>>>()?;
    let mf = m as f64;
    let within = stats.iter().map(simplified_mle_variance).sum::<f64>() / mf;
    let means: Vec<f64> = stats.iter().map(SimplifiedStats::complete_data_mle).collect();
    let between = sample_var(&means);
    Ok(EmbeddedVariance {
        within,
        between,
        total: within + (1.0 + 1.0 / mf) * between,
    })
}
