//! Heldout predictive checks, posterior predictive nulls and model-criticism
//! studies for a small registry of Bayesian models.

pub mod checks;
pub mod cli;
pub mod config;
pub mod data;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod linear;
pub mod mixture;
pub mod model;
pub mod outcome;
pub mod report;
pub mod rng;
pub mod special;

pub use checks::{heldout_predictive_check, posterior_predictive_pvalue, ppn_check, ppn_study, CheckConfig};
pub use data::{split_data, DataSplit, Dataset};
pub use diagnostics::{DiagnosticSpec, Reduction};
pub use error::{Error, Result};
pub use model::{FitConfig, Model, ModelKind};
pub use outcome::{CheckOutcome, PpnOutcome, StudyMode, StudyReport, Verdict, VerdictClass};
pub use rng::{Seed, VariateStream};
