//! Linear-Gaussian models: the conjugate regression pair and probabilistic
//! PCA.

pub mod ppca;
pub mod regression;

pub use ppca::{ppca_em_fit, ppca_predictive, ppca_reconstruction_diagnostic, EmConfig, PpcaFit, PpcaParams};
pub use regression::{
    regression_diagnostic, regression_fit_a, regression_fit_b, regression_predictive, PredictiveVariance,
    RegressionPosterior, RegressionPosteriorA, RegressionPosteriorB,
};
