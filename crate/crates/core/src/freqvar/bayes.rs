//! Congenial Bayesian inference for the single follow-up J2R model: posterior
//! draws of the embedding model's parameters mapped through
//! `θ = (μ_a − μ_r)(1 − π_1)`.

use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, TrialDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub sd: f64,
    pub interval: (f64, f64),
    pub draws: usize,
    pub alpha: f64,
}

/// Draws `(μ, σ²)` from the normal/scaled-inverse-χ² posterior of a sample
/// under `p(μ, σ²) ∝ 1/σ²`.
struct NormalPosterior {
    n: f64,
    mean: f64,
    ss: f64,
    chi2: ChiSquared<f64>,
}

impl NormalPosterior {
    fn new(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientData { stage: 1, available: values.len(), required: 2 });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss = values.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
        let chi2 = ChiSquared::new(n - 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(NormalPosterior { n, mean, ss, chi2 })
    }

    fn draw_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sigma2 = self.ss / self.chi2.sample(rng);
        self.mean + (sigma2 / self.n).sqrt() * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior of `θ` from `n_draws` independent parameter draws.
///
/// `μ_r` and `μ_a` come from the observed follow-up outcomes of the reference
/// and active arms, `π_1 ~ Beta(1 + #dropouts, 1 + #completers)` in the
/// active arm. Reference-arm dropouts carry no information about `μ_r` under MAR.
pub fn congenial_bayes_simplified<R: Rng + ?Sized>(
    data: &TrialDataset,
    n_draws: usize,
    rng: &mut R,
    alpha: f64,
) -> Result<PosteriorSummary> {
    if data.last_visit() != 1 {
        return Err(Error::InvalidInput(format!(
            "congenial posterior needs exactly one follow-up visit, dataset has J = {}",
            data.last_visit()
        )));
    }
    if n_draws < 2 {
        return Err(Error::InvalidInput("need at least 2 posterior draws".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let reference: Vec<f64> = data.arm(Arm::Reference).filter_map(|p| p.outcome(1)).collect();
    let active: Vec<f64> = data.arm(Arm::Active).filter_map(|p| p.outcome(1)).collect();
    let dropouts = data.count(Arm::Active) - active.len();
    let post_r = NormalPosterior::new(&reference)?;
    let post_a = NormalPosterior::new(&active)?;
    let beta = Beta::new(1.0 + dropouts as f64, 1.0 + active.len() as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mut thetas: Vec<f64> = (0..n_draws)
        .map(|_| {
            let mu_r = post_r.draw_mean(rng);
            let mu_a = post_a.draw_mean(rng);
            let pi_1 = beta.sample(rng);
            (mu_a - mu_r) * (1.0 - pi_1)
        })
        .collect();
    let n = n_draws as f64;
    let mean = thetas.iter().sum::<f64>() / n;
    let sd = (thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    thetas.sort_by(f64::total_cmp);
    Ok(PosteriorSummary {
        mean,
        sd,
        interval: (quantile(&thetas, alpha / 2.0), quantile(&thetas, 1.0 - alpha / 2.0)),
        draws: n_draws,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PatientRecord;
    use crate::freqvar::simplified_point;
    use crate::rng::SeedStream;

    fn dataset(n: usize, pi: f64, shift: f64, seed: u64) -> TrialDataset {
        let mut rng = SeedStream::new(seed).rng();
        let patients = (0..2 * n)
            .map(|i| {
                let arm = if i < n { Arm::Active } else { Arm::Reference };
                let y = rng.sample::<f64, _>(StandardNormal) + if arm == Arm::Active { shift } else { 0.0 };
                let missing = arm == Arm::Active && (i as f64) < pi * n as f64;
                PatientRecord::new(format!("p{i}"), arm, vec![Some(0.0), (!missing).then_some(y)]).unwrap()
            })
            .collect();
        TrialDataset::new(1, patients).unwrap()
    }

    #[test]
    fn near_total_dropout_concentrates_at_zero() {
        let d = dataset(400, 0.99, 2.0, 1);
        let s = congenial_bayes_simplified(&d, 4000, &mut SeedStream::new(2).rng(), 0.05).unwrap();
        assert!(s.mean.abs() < 0.1, "{s:?}");
        assert!(s.sd < 0.05);
        assert!(s.interval.0 < s.mean && s.mean < s.interval.1);
    }

    #[test]
    fn large_n_mean_matches_observed_mle() {
        let d = dataset(5000, 0.3, 0.5, 3);
        let draws = 4000;
        let s = congenial_bayes_simplified(&d, draws, &mut SeedStream::new(4).rng(), 0.05).unwrap();
        let mle = simplified_point(&d).unwrap();
        let mc_se = s.sd / (draws as f64).sqrt();
        // posterior mean differs from the MLE by O(1/n) through the Beta prior
        assert!((s.mean - mle).abs() < 3.0 * mc_se + 1e-3, "{} vs {mle}", s.mean);
    }

    #[test]
    fn seeded_summary_is_reproducible() {
        let d = dataset(50, 0.4, 0.0, 5);
        let a = congenial_bayes_simplified(&d, 500, &mut SeedStream::new(6).rng(), 0.1).unwrap();
        let b = congenial_bayes_simplified(&d, 500, &mut SeedStream::new(6).rng(), 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_observed() {
        let d = dataset(10, 0.95, 0.0, 7);
        assert!(matches!(
            congenial_bayes_simplified(&d, 100, &mut SeedStream::new(1).rng(), 0.05),
            Err(Error::InsufficientData { .. })
        ));
    }
}
