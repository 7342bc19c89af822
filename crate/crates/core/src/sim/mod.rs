//! Monte-Carlo scenarios: generate trials from known arm models, apply each
//! requested estimator to the same trial, and summarize repeated-sampling
//! behavior.

mod config;
mod report;

use std::ops::Range;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub use config::*;
pub use report::*;

use crate::analysis::{analyze_and_pool, t_quantile};
use crate::data::{Arm, PatientRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::fit::ArmModel;
use crate::freqvar::{boot_then_impute, congenial_bayes_simplified, embedded_variance, simplified_point, vonhippel_pool};
use crate::impute::{impute_dataset, Imputer, Strategy};
use crate::mvn::{cholesky, Matrix};
use crate::rng::SeedStream;

/// Largest fraction of failed replications a scenario tolerates.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Patients used for the Monte-Carlo estimand when no closed form applies.
const TRUTH_PATIENTS: usize = 200_000;

struct ArmSampler<'a> {
    arm: Arm,
    model: ArmModel,
    factor: Matrix,
    mechanism: &'a Mechanism,
}

impl<'a> ArmSampler<'a> {
    fn new(arm: Arm, spec: &ModelSpec, mechanism: &'a Mechanism) -> Result<Self> {
        let model = spec.to_model()?;
        let factor = cholesky(&model.sigma)?.factor().clone();
        Ok(ArmSampler { arm, model, factor, mechanism })
    }

    /// Full outcome vector and the last observed visit.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        let dim = self.model.dim();
        let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut y = self.factor.matvec(&z);
        for (yi, mi) in y.iter_mut().zip(self.model.mu.as_slice()) {
            *yi += mi;
        }
        let mut dropout = dim - 1;
        for j in 1..dim {
            let h = self.mechanism.hazard(j, y[j - 1]);
            if rng.random::<f64>() < h {
                dropout = j - 1;
                break;
            }
        }
        (y, dropout)
    }

    fn record<R: Rng + ?Sized>(&self, id: String, rng: &mut R) -> PatientRecord {
        let (y, dropout) = self.draw(rng);
        let outcomes = y.iter().enumerate().map(|(j, v)| (j <= dropout).then_some(*v)).collect();
        PatientRecord::new(id, self.arm, outcomes).expect("generated records are monotone with a baseline")
    }
}

/// One simulated trial: `n_a` active patients `a0..` followed by `n_r`
/// reference patients `r0..`, with dropout generated visit by visit.
pub fn generate_trial<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<TrialDataset> {
    let active = ArmSampler::new(Arm::Active, &cfg.true_act, &cfg.dropout.active)?;
    let reference = ArmSampler::new(Arm::Reference, &cfg.true_ref, &cfg.dropout.reference)?;
    let mut patients = Vec::with_capacity(cfg.n_a + cfg.n_r);
    for i in 0..cfg.n_a {
        patients.push(active.record(format!("a{i}"), rng));
    }
    for i in 0..cfg.n_r {
        patients.push(reference.record(format!("r{i}"), rng));
    }
    TrialDataset::new(cfg.last_visit, patients)
}

/// Estimand under the true models: the difference in final-visit means when
/// active-arm dropouts follow `strategy`. Closed form for MAR and for J2R
/// with outcome-independent active dropout, Monte Carlo otherwise.
pub fn true_theta(cfg: &ScenarioConfig) -> Result<f64> {
    if let Some(t) = cfg.true_theta {
        return Ok(t);
    }
    let j = cfg.last_visit;
    let act = cfg.true_act.to_model()?;
    let refm = cfg.true_ref.to_model()?;
    let diff = act.mu[j] - refm.mu[j];
    match (cfg.strategy, &cfg.dropout.active) {
        (Strategy::Mar, _) => Ok(diff),
        (Strategy::J2r, Mechanism::None) => Ok(diff),
        (Strategy::J2r, Mechanism::Mcar { rate }) => {
            let stay: f64 = (1..=j)
                .map(|v| 1.0 - Mechanism::Mcar { rate: rate.clone() }.hazard(v, 0.0))
                .product();
            Ok(stay * diff)
        }
        (Strategy::J2r, Mechanism::MarLogistic { .. }) => {
            let sampler = ArmSampler::new(Arm::Active, &cfg.true_act, &cfg.dropout.active)?;
            let mut imputer = Imputer::new(&refm, &act, Strategy::J2r);
            let mut rng = SeedStream::new(cfg.seed).child(u64::MAX).rng();
            let mut total = 0.0;
            for i in 0..TRUTH_PATIENTS {
                let (y, dropout) = sampler.draw(&mut rng);
                if dropout == j {
                    total += y[j];
                } else {
                    let outcomes = y.iter().enumerate().map(|(k, v)| (k <= dropout).then_some(*v)).collect();
                    let rec = PatientRecord::new(format!("t{i}"), Arm::Active, outcomes)?;
                    total += *imputer.conditional_mean(&rec)?.last().expect("missing tail");
                }
            }
            Ok(total / TRUTH_PATIENTS as f64 - refm.mu[j])
        }
    }
}

fn normal_interval(estimate: f64, variance: f64, alpha: f64) -> (f64, f64) {
    let half = t_quantile(f64::INFINITY, alpha) * variance.sqrt();
    (estimate - half, estimate + half)
}

/// Applies every requested estimator to replication `rep`.
///
/// The trial comes from `child(0)` of the replication stream, the Rubin
/// imputations (shared with the simplified decomposition) from `child(1)`,
/// the bootstrap from `child(2)` and the posterior draws from `child(3)`.
pub fn run_replication(cfg: &ScenarioConfig, rep: u64) -> Result<Vec<(EstimatorKind, EstimatorOutcome)>> {
    let stream = SeedStream::new(cfg.seed).child(rep);
    let data = generate_trial(cfg, &mut stream.child(0).rng())?;
    let needs_imputations = cfg.has(EstimatorKind::Rubin) || cfg.has(EstimatorKind::SimplifiedMle);
    let completed = if needs_imputations {
        impute_dataset(&data, cfg.strategy, cfg.m, cfg.proper, stream.child(1))?
    } else {
        Vec::new()
    };
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &kind in &cfg.estimators {
        let outcome = match kind {
            EstimatorKind::Rubin => {
                let p = analyze_and_pool(&completed, cfg.analysis, cfg.alpha)?;
                EstimatorOutcome { estimate: p.theta_bar, variance: p.t_total, ci: p.ci }
            }
            EstimatorKind::BootMi => {
                let grid = boot_then_impute(&data, cfg.strategy, cfg.analysis, cfg.b, cfg.boot_m, stream.child(2))?;
                let e = vonhippel_pool(&grid, cfg.alpha)?;
                EstimatorOutcome { estimate: e.theta_bar, variance: e.v_hat, ci: e.ci }
            }
            EstimatorKind::SimplifiedMle => {
                let estimate = simplified_point(&data)?;
                let variance = embedded_variance(&data, &completed)?.total;
                EstimatorOutcome { estimate, variance, ci: normal_interval(estimate, variance, cfg.alpha) }
            }
            EstimatorKind::CongenialBayes => {
                let s = congenial_bayes_simplified(&data, cfg.bayes_draws, &mut stream.child(3).rng(), cfg.alpha)?;
                EstimatorOutcome { estimate: s.mean, variance: s.sd * s.sd, ci: s.interval }
            }
        };
        out.push((kind, outcome));
    }
    Ok(out)
}

/// Runs the replications in `reps` in parallel. Results do not depend on the
/// thread count or on how the full range is split.
pub fn run_replications(cfg: &ScenarioConfig, reps: Range<u64>) -> Tally {
    let results: Vec<(u64, ReplicationOutcome)> = reps
        .into_par_iter()
        .map(|r| (r, run_replication(cfg, r).map_err(|e| e.to_string())))
        .collect();
    let mut tally = Tally::default();
    for (r, o) in results {
        tally.insert(r, o);
    }
    tally
}

/// Summarizes a tally. Fails when more than [`MAX_FAILURE_RATE`] of the
/// replications errored.
pub fn summarize(cfg: &ScenarioConfig, tally: &Tally, truth: f64) -> Result<SimReport> {
    let failures = tally.failures();
    let total = tally.replications();
    if failures.len() as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: total as usize,
            first: failures.first().map(|f| f.error.clone()).unwrap_or_default(),
        });
    }
    let tallies = tally.estimator_tallies(truth);
    let estimators = cfg
        .estimators
        .iter()
        .filter_map(|k| tallies.get(k).map(|t| EstimatorSummary::from_tally(*k, t, truth)))
        .collect();
    Ok(SimReport {
        scenario: cfg.clone(),
        true_theta: truth,
        replications: total,
        failed_replications: failures.len() as u64,
        failures,
        estimators,
        runtime_seconds: None,
    })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimReport> {
    cfg.validate()?;
    let start = Instant::now();
    let truth = true_theta(cfg)?;
    let tally = run_replications(cfg, 0..cfg.reps as u64);
    let mut report = summarize(cfg, &tally, truth)?;
    report.runtime_seconds = Some(start.elapsed().as_secs_f64());
    Ok(report)
}
