//! Diagnostic reductions and the validation diagnostic.
//!
//! A realized diagnostic d(x, θ) depends on parameters. The validation
//! diagnostic removes that dependence by reducing over a posterior fitted to
//! a separate validation part, either by averaging over retained draws or by
//! evaluating at the highest-posterior point.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Fitted, Model};
use crate::rng::VariateStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// (1/B) Σ_b d(x, θ_b)
    Average,
    /// d(x, θ̂) at the highest-posterior state or point estimate.
    Map,
}

pub const DEFAULT_DRAWS: usize = 200;

/// Which model owns a diagnostic and how it is reduced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticSpec {
    pub owner: String,
    pub reduction: Reduction,
    /// Number of retained draws averaged over (B).
    pub draws: usize,
}

impl DiagnosticSpec {
    pub fn new(owner: impl Into<String>, reduction: Reduction, draws: usize) -> Result<Self> {
        let spec = DiagnosticSpec {
            owner: owner.into(),
            reduction,
            draws,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The model's default reduction with B = 200.
    pub fn for_model(model: &Model) -> Self {
        DiagnosticSpec {
            owner: model.id.clone(),
            reduction: model.kind.default_reduction(),
            draws: DEFAULT_DRAWS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reduction == Reduction::Average && self.draws == 0 {
            return Err(Error::param("draws", "average reduction needs at least one draw"));
        }
        Ok(())
    }
}

/// Mean of `f` over `items`.
pub fn average_reduction<T>(items: &[T], mut f: impl FnMut(&T) -> Result<f64>) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Data("no posterior draws to reduce over".into()));
    }
    let mut total = 0.0;
    for item in items {
        total += f(item)?;
    }
    Ok(total / items.len() as f64)
}

/// d(x; x_val): the owner's diagnostic of `x`, reduced over a posterior that
/// must have been fitted on a different dataset than `x`.
pub fn validation_diagnostic(
    x: &Dataset,
    spec: &DiagnosticSpec,
    fitted_on_val: &Fitted,
    stream: &mut VariateStream,
) -> Result<f64> {
    spec.validate()?;
    if fitted_on_val.model.id != spec.owner {
        return Err(Error::Wiring(format!(
            "diagnostic of `{}` evaluated with a posterior of `{}`",
            spec.owner, fitted_on_val.model.id
        )));
    }
    if fitted_on_val.source == x.label() {
        return Err(Error::Wiring(format!(
            "validation posterior was fitted on `{}`, the data being scored",
            x.label()
        )));
    }
    fitted_on_val.diagnostic(x, spec.reduction, spec.draws, stream)
}

/// Σ (x − E[x])² / Var(x) over all cells.
pub fn chi2_overall_diagnostic(x: &Dataset, mean: &DMatrix<f64>, variance: &DMatrix<f64>) -> Result<f64> {
    let values = x.values();
    if values.shape() != mean.shape() || values.shape() != variance.shape() {
        return Err(Error::Dimension(format!(
            "data {:?}, mean {:?}, variance {:?}",
            values.shape(),
            mean.shape(),
            variance.shape()
        )));
    }
    if variance.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("predictive variances must be positive".into()));
    }
    Ok(values
        .iter()
        .zip(mean.iter())
        .zip(variance.iter())
        .map(|((x, m), v)| (x - m).powi(2) / v)
        .sum())
}
