//! The intercept-only and intercept-plus-covariates regression pair with
//! flat priors and unit noise variance.
//!
//! ```text
//! A: y_i ~ Normal(θ, 1)
//! B: y_i ~ Normal(θ + x_iᵀβ, 1)
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::VariateStream;

const MAX_CONDITION: f64 = 1e12;

/// How replicate responses are drawn from a fitted regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictiveVariance {
    /// Draw the parameters once per replicate from their posterior, then
    /// every row with unit noise. Rows of one replicate share the parameter
    /// draw, so this is the joint posterior predictive.
    #[default]
    Conjugate,
    /// Independent rows with marginal variance 2 (model A) or
    /// 2 + hᵢ (model B), hᵢ the leverage of row i.
    AsPrinted,
}

/// Intercept-only posterior: θ | y ~ Normal(ȳ, 1/n).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPosteriorA {
    pub mean: f64,
    pub n: usize,
}

/// Covariate model posterior. Coefficients are the least-squares fit with
/// intercept; `gram_inverse` is the inverse of the centered Gram matrix, so
/// β | y ~ Normal(β̂, gram_inverse) and the intercept at the covariate mean
/// is Normal(ȳ, 1/n), independent of β.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPosteriorB {
    pub intercept: f64,
    pub coefficients: DVector<f64>,
    pub gram_inverse: DMatrix<f64>,
    pub covariate_mean: DVector<f64>,
    pub response_mean: f64,
    pub n: usize,
    gram_inverse_chol: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegressionPosterior {
    Intercept(RegressionPosteriorA),
    Covariates(RegressionPosteriorB),
}

pub fn regression_fit_a(y: &[f64]) -> Result<RegressionPosteriorA> {
    if y.is_empty() {
        return Err(Error::Data("regression needs at least one response".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite response".into()));
    }
    Ok(RegressionPosteriorA {
        mean: y.iter().sum::<f64>() / y.len() as f64,
        n: y.len(),
    })
}

pub fn regression_fit_b(y: &[f64], x: &DMatrix<f64>) -> Result<RegressionPosteriorB> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension(format!("{} responses but {n} covariate rows", y.len())));
    }
    if n <= p {
        return Err(Error::Dimension(format!("need more rows ({n}) than covariates ({p})")));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite regression input".into()));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let x_mean = DVector::from_iterator(p, x.column_iter().map(|c| c.mean()));
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-x_mean[j]);
    }
    let gram = xc.transpose() * &xc;
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(Error::Singular(format!("covariate Gram matrix is rank deficient (eigenvalues {min:e}..{max:e})")));
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("covariate Gram matrix is not positive definite".into()))?;
    let yv = DVector::from_column_slice(y);
    let beta = chol.solve(&(xc.transpose() * yv));
    let gram_inverse = chol.inverse();
    let gram_inverse_chol = gram_inverse
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("inverse Gram matrix is not positive definite".into()))?
        .l();
    Ok(RegressionPosteriorB {
        intercept: y_mean - x_mean.dot(&beta),
        coefficients: beta,
        gram_inverse,
        covariate_mean: x_mean,
        response_mean: y_mean,
        n,
        gram_inverse_chol,
    })
}

impl RegressionPosteriorB {
    fn check_covariates(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.coefficients.len() {
            return Err(Error::Dimension(format!(
                "model has {} covariates, data has {}",
                self.coefficients.len(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Leverage (x − x̄)ᵀ G⁻¹ (x − x̄) of every row of `x`.
    pub fn leverages(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_covariates(x)?;
        Ok(x.row_iter()
            .map(|row| {
                let d = row.transpose() - &self.covariate_mean;
                (&self.gram_inverse * &d).dot(&d)
            })
            .collect())
    }
}

impl RegressionPosterior {
    pub fn fit(y: &[f64], covariates: Option<&DMatrix<f64>>) -> Result<Self> {
        match covariates {
            None => regression_fit_a(y).map(RegressionPosterior::Intercept),
            Some(x) => regression_fit_b(y, x).map(RegressionPosterior::Covariates),
        }
    }

    fn covariates_for<'a>(&self, x: Option<&'a DMatrix<f64>>, n: usize) -> Result<Option<&'a DMatrix<f64>>> {
        match self {
            RegressionPosterior::Intercept(_) => Ok(None),
            RegressionPosterior::Covariates(b) => {
                let x = x.ok_or_else(|| Error::Data("covariate model needs covariates".into()))?;
                if x.nrows() != n {
                    return Err(Error::Dimension(format!("{n} responses but {} covariate rows", x.nrows())));
                }
                b.check_covariates(x)?;
                Ok(Some(x))
            }
        }
    }

    /// Posterior predictive mean E[y_i | data] at every row of `x`.
    pub fn predictive_mean(&self, x: Option<&DMatrix<f64>>, n: usize) -> Result<Vec<f64>> {
        match (self, self.covariates_for(x, n)?) {
            (RegressionPosterior::Intercept(a), _) => Ok(vec![a.mean; n]),
            (RegressionPosterior::Covariates(b), Some(x)) => {
                let fitted = x * &b.coefficients;
                Ok(fitted.iter().map(|f| b.intercept + f).collect())
            }
            _ => unreachable!("covariates checked above"),
        }
    }

    /// One replicate response vector of length `n` at covariates `x`.
    pub fn replicate(
        &self,
        x: Option<&DMatrix<f64>>,
        n: usize,
        mode: PredictiveVariance,
        stream: &mut VariateStream,
    ) -> Result<Vec<f64>> {
        let x = self.covariates_for(x, n)?;
        match (self, mode) {
            (RegressionPosterior::Intercept(a), PredictiveVariance::AsPrinted) => {
                Ok((0..n).map(|_| stream.normal(a.mean, 2f64.sqrt())).collect())
            }
            (RegressionPosterior::Intercept(a), PredictiveVariance::Conjugate) => {
                let theta = stream.normal(a.mean, (1.0 / a.n as f64).sqrt());
                Ok((0..n).map(|_| stream.normal(theta, 1.0)).collect())
            }
            (RegressionPosterior::Covariates(b), PredictiveVariance::AsPrinted) => {
                let x = x.expect("checked");
                let means = self.predictive_mean(Some(x), n)?;
                let lev = b.leverages(x)?;
                Ok(means
                    .iter()
                    .zip(&lev)
                    .map(|(m, h)| stream.normal(*m, (2.0 + h).sqrt()))
                    .collect())
            }
            (RegressionPosterior::Covariates(b), PredictiveVariance::Conjugate) => {
                let x = x.expect("checked");
                let p = b.coefficients.len();
                let z = DVector::from_fn(p, |_, _| stream.standard_normal());
                let beta = &b.coefficients + &b.gram_inverse_chol * z;
                let level = stream.normal(b.response_mean, (1.0 / b.n as f64).sqrt());
                Ok(x.row_iter()
                    .map(|row| {
                        let centered = row.transpose() - &b.covariate_mean;
                        stream.normal(level + centered.dot(&beta), 1.0)
                    })
                    .collect())
            }
        }
    }
}

/// `replicates` response vectors drawn from the posterior predictive at
/// covariates `x` (ignored by the intercept model).
pub fn regression_predictive(
    posterior: &RegressionPosterior,
    x: Option<&DMatrix<f64>>,
    n: usize,
    replicates: usize,
    mode: PredictiveVariance,
    stream: &mut VariateStream,
) -> Result<Vec<Vec<f64>>> {
    if replicates == 0 {
        return Err(Error::param("replicates", "must be at least 1"));
    }
    (0..replicates)
        .map(|r| posterior.replicate(x, n, mode, &mut stream.derive_index(r as u64)))
        .collect()
}

/// Σ (y_i − E[y_i | validation data])² with the expectation taken under
/// `fitted_on_val`.
pub fn regression_diagnostic(y: &[f64], x: Option<&DMatrix<f64>>, fitted_on_val: &RegressionPosterior) -> Result<f64> {
    let means = fitted_on_val.predictive_mean(x, y.len())?;
    Ok(y.iter().zip(&means).map(|(v, m)| (v - m).powi(2)).sum())
}
