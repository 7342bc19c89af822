//! Frequentist variance estimation for reference-based MI estimators.

mod bayes;
mod bootstrap;
mod simplified;

pub use bayes::{congenial_bayes_simplified, PosteriorSummary};
pub use bootstrap::{boot_then_impute, vonhippel_pool, BootMiEstimate, BootMiGrid, MAX_ATTEMPTS};
pub use simplified::{
    embedded_variance, simplified_mle_variance, simplified_point, simplified_var_active, EmbeddedVariance,
    SimplifiedStats,
};
