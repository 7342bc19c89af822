use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisMethod;
use crate::error::{Error, Result};
use crate::fit::ArmModel;
use crate::impute::Strategy;
use crate::mvn::{CovMatrix, MeanVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

impl ModelSpec {
    pub fn to_model(&self) -> Result<ArmModel> {
        ArmModel::new(MeanVector::new(self.mu.clone())?, CovMatrix::from_rows(&self.sigma)?)
    }
}

/// One hazard for every visit, or one per visit `1..=J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hazard {
    Constant(f64),
    PerVisit(Vec<f64>),
}

impl Hazard {
    fn at(&self, visit: usize) -> f64 {
        match self {
            Hazard::Constant(p) => *p,
            Hazard::PerVisit(v) => v[visit - 1],
        }
    }
}

/// Dropout mechanism for one arm. At each visit `j ≥ 1` a patient still in
/// follow-up drops out (last observation at `j − 1`) with the given hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mechanism {
    None,
    Mcar { rate: Hazard },
    /// `logit P(drop before j) = intercept + slope · Y_{j−1}`.
    MarLogistic { intercept: f64, slope: f64 },
}

impl Mechanism {
    /// Hazard of dropping out before `visit` given the previous outcome.
    pub fn hazard(&self, visit: usize, previous: f64) -> f64 {
        match self {
            Mechanism::None => 0.0,
            Mechanism::Mcar { rate } => rate.at(visit),
            Mechanism::MarLogistic { intercept, slope } => {
                1.0 / (1.0 + (-(intercept + slope * previous)).exp())
            }
        }
    }

    pub fn is_mcar(&self) -> bool {
        !matches!(self, Mechanism::MarLogistic { .. })
    }

    fn validate(&self, last_visit: usize) -> Result<()> {
        match self {
            Mechanism::None => Ok(()),
            Mechanism::Mcar { rate } => {
                let rates: Vec<f64> = match rate {
                    Hazard::Constant(p) => vec![*p],
                    Hazard::PerVisit(v) => {
                        if v.len() != last_visit {
                            return Err(Error::Config(format!(
                                "{} per-visit dropout rates for J = {last_visit}",
                                v.len()
                            )));
                        }
                        v.clone()
                    }
                };
                if rates.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::Config("dropout rates must lie in [0, 1]".into()));
                }
                Ok(())
            }
            Mechanism::MarLogistic { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    return Err(Error::Config("logistic dropout coefficients must be finite".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutSpec {
    pub reference: Mechanism,
    pub active: Mechanism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Proper MI with Rubin's rules.
    Rubin,
    /// Bootstrap-then-impute with random-intercepts pooling.
    BootMi,
    /// Observed-data MLE with the embedding-model variance decomposition
    /// (single follow-up only).
    SimplifiedMle,
    /// Congenial Bayesian posterior (single follow-up only).
    CongenialBayes,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Rubin => "rubin",
            EstimatorKind::BootMi => "boot_mi",
            EstimatorKind::SimplifiedMle => "simplified_mle",
            EstimatorKind::CongenialBayes => "congenial_bayes",
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_boot_m() -> usize {
    2
}

fn default_true() -> bool {
    true
}

fn default_bayes_draws() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n_a: usize,
    pub n_r: usize,
    #[serde(rename = "J")]
    pub last_visit: usize,
    pub true_ref: ModelSpec,
    pub true_act: ModelSpec,
    pub dropout: DropoutSpec,
    pub strategy: Strategy,
    pub estimators: Vec<EstimatorKind>,
    /// Imputations for Rubin's rules (and the simplified decomposition).
    #[serde(rename = "M")]
    pub m: usize,
    /// Bootstrap replicates for `boot_mi`.
    #[serde(rename = "B", default)]
    pub b: usize,
    /// Imputations per bootstrap replicate for `boot_mi`.
    #[serde(default = "default_boot_m")]
    pub boot_m: usize,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub analysis: AnalysisMethod,
    /// Whether Rubin's-rules imputations draw parameters from the posterior.
    #[serde(default = "default_true")]
    pub proper: bool,
    #[serde(default = "default_bayes_draws")]
    pub bayes_draws: usize,
    /// Overrides the computed estimand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_theta: Option<f64>,
}

impl ScenarioConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses by file extension: `.json` as JSON, anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            ScenarioConfig::from_json(&text)
        } else {
            ScenarioConfig::from_toml(&text)
        }
    }

    pub fn has(&self, kind: EstimatorKind) -> bool {
        self.estimators.contains(&kind)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.reps == 0 {
            return cfg("reps must be at least 1".into());
        }
        if self.n_a < 2 || self.n_r < 2 {
            return cfg("each arm needs at least 2 patients".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return cfg(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.estimators.is_empty() {
            return cfg("no estimators requested".into());
        }
        for (label, spec) in [("true_ref", &self.true_ref), ("true_act", &self.true_act)] {
            if spec.mu.len() != self.last_visit + 1 {
                return cfg(format!("{label}.mu has {} entries for J = {}", spec.mu.len(), self.last_visit));
            }
            spec.to_model().map_err(|e| Error::Config(format!("{label}: {e}")))?;
        }
        self.dropout.reference.validate(self.last_visit)?;
        self.dropout.active.validate(self.last_visit)?;
        if (self.has(EstimatorKind::Rubin) || self.has(EstimatorKind::SimplifiedMle)) && self.m < 2 {
            return cfg("M must be at least 2".into());
        }
        if self.has(EstimatorKind::BootMi) && (self.b < 2 || self.boot_m < 2) {
            return cfg("boot_mi needs B >= 2 and boot_m >= 2".into());
        }
        if (self.has(EstimatorKind::SimplifiedMle) || self.has(EstimatorKind::CongenialBayes)) && self.last_visit != 1 {
            return cfg("simplified_mle and congenial_bayes need J = 1".into());
        }
        if self.has(EstimatorKind::CongenialBayes) && self.bayes_draws < 2 {
            return cfg("bayes_draws must be at least 2".into());
        }
        Ok(())
    }
}
