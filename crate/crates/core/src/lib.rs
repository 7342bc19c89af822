//! Reference-based multiple imputation for longitudinal continuous trial
//! outcomes: jump-to-reference and MAR imputation, Rubin's rules, and
//! frequentist variance estimators (bootstrap-then-impute, closed forms for
//! a single follow-up visit, congenial Bayes), plus a Monte-Carlo harness.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod fit;
pub mod freqvar;
pub mod impute;
pub mod mvn;
pub mod rng;
pub mod sim;

pub use analysis::{AnalysisMethod, CompleteDataEstimate, PooledEstimate};
pub use data::{Arm, PatientRecord, TrialDataset};
pub use error::{Error, Result};
pub use fit::ArmModel;
pub use impute::Strategy;
pub use rng::SeedStream;
