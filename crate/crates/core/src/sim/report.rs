use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{EstimatorKind, ScenarioConfig};

/// Streaming mean and sum of squared deviations, mergeable across chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        Moments {
            n,
            mean: self.mean + d * nb / n as f64,
            m2: self.m2 + other.m2 + d * d * na * nb / n as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.m2 / (self.n - 1) as f64
    }
}

/// Result of one estimator on one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutcome {
    pub estimate: f64,
    pub variance: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EstimatorTally {
    pub estimate: Moments,
    pub variance: Moments,
    pub covered: u64,
    pub rejected: u64,
}

impl EstimatorTally {
    pub fn push(&mut self, o: &EstimatorOutcome, truth: f64) {
        self.estimate.push(o.estimate);
        self.variance.push(o.variance);
        self.covered += (o.ci.0 <= truth && truth <= o.ci.1) as u64;
        self.rejected += (0.0 < o.ci.0 || 0.0 > o.ci.1) as u64;
    }
}

/// Outcome of one replication: every requested estimator, or the first error.
pub type ReplicationOutcome = std::result::Result<Vec<(EstimatorKind, EstimatorOutcome)>, String>;

/// Per-replication results of any subset of replications, keyed by index.
/// Merging is a union, and summaries are accumulated in index order, so
/// any split of a run merges back to exactly the same report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tally {
    pub outcomes: BTreeMap<u64, ReplicationOutcome>,
}

impl Tally {
    pub fn insert(&mut self, rep: u64, outcome: ReplicationOutcome) {
        self.outcomes.insert(rep, outcome);
    }

    pub fn merge(&self, other: &Tally) -> Tally {
        let mut outcomes = self.outcomes.clone();
        outcomes.extend(other.outcomes.iter().map(|(k, v)| (*k, v.clone())));
        Tally { outcomes }
    }

    pub fn replications(&self) -> u64 {
        self.outcomes.len() as u64
    }

    pub fn failures(&self) -> Vec<Failure> {
        self.outcomes
            .iter()
            .filter_map(|(k, v)| v.as_ref().err().map(|e| Failure { replication: *k, error: e.clone() }))
            .collect()
    }

    pub fn estimator_tallies(&self, truth: f64) -> BTreeMap<EstimatorKind, EstimatorTally> {
        let mut out: BTreeMap<EstimatorKind, EstimatorTally> = BTreeMap::new();
        for results in self.outcomes.values().filter_map(|v| v.as_ref().ok()) {
            for (kind, o) in results {
                out.entry(*kind).or_default().push(o, truth);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub replications: u64,
    pub mean_estimate: f64,
    pub mean_estimate_se: f64,
    pub bias: f64,
    pub empirical_sd: f64,
    pub empirical_variance: f64,
    pub empirical_variance_se: f64,
    pub mean_variance: f64,
    pub mean_variance_se: f64,
    pub variance_ratio: f64,
    pub variance_ratio_se: f64,
    pub coverage: f64,
    pub coverage_se: f64,
    pub rejection_rate: f64,
    pub rejection_rate_se: f64,
}

impl EstimatorSummary {
    pub fn from_tally(kind: EstimatorKind, t: &EstimatorTally, truth: f64) -> Self {
        let n = t.estimate.n as f64;
        let emp_var = t.estimate.variance();
        // normal-theory SE of a sample variance
        let emp_var_se = emp_var * (2.0 / (n - 1.0)).sqrt();
        let mean_var = t.variance.mean;
        let mean_var_se = (t.variance.variance() / n).sqrt();
        let ratio = mean_var / emp_var;
        let ratio_se = ratio * ((mean_var_se / mean_var).powi(2) + (emp_var_se / emp_var).powi(2)).sqrt();
        let rate = |k: u64| k as f64 / n;
        let rate_se = |p: f64| (p * (1.0 - p) / n).sqrt();
        let coverage = rate(t.covered);
        let rejection = rate(t.rejected);
        EstimatorSummary {
            estimator: kind.name().to_string(),
            replications: t.estimate.n,
            mean_estimate: t.estimate.mean,
            mean_estimate_se: (emp_var / n).sqrt(),
            bias: t.estimate.mean - truth,
            empirical_sd: emp_var.sqrt(),
            empirical_variance: emp_var,
            empirical_variance_se: emp_var_se,
            mean_variance: mean_var,
            mean_variance_se: mean_var_se,
            variance_ratio: ratio,
            variance_ratio_se: ratio_se,
            coverage,
            coverage_se: rate_se(coverage),
            rejection_rate: rejection,
            rejection_rate_se: rate_se(rejection),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replication: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: ScenarioConfig,
    pub true_theta: f64,
    pub replications: u64,
    pub failed_replications: u64,
    pub failures: Vec<Failure>,
    pub estimators: Vec<EstimatorSummary>,
    /// Wall-clock time; the only field that varies between identical runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

impl SimReport {
    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == kind.name())
    }

    pub fn without_timing(mut self) -> SimReport {
        self.runtime_seconds = None;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
