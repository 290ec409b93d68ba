//! The model registry: fitting any supported model to a dataset, drawing
//! posterior predictive replicates, and evaluating its diagnostic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{DataKind, Dataset};
use crate::diagnostics::{average_reduction, Reduction};
use crate::error::{Error, Result};
use crate::linear::ppca::ppca_replicate;
use crate::linear::{ppca_em_fit, ppca_reconstruction_diagnostic, EmConfig, PpcaParams, PredictiveVariance, RegressionPosterior};
use crate::mixture::gmm::gmm_replicate;
use crate::mixture::multinomial::{multmix_chi2_codes, multmix_replicate};
use crate::mixture::{gmm_gibbs_fit, multmix_gibbs_fit, GibbsConfig, GmmState, MultMixState, PosteriorDraws, PreparedGmm};
use crate::rng::VariateStream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    /// Gaussian mixture with equal weights and diagonal covariances.
    Gmm { components: usize },
    /// Mixture of products of categorical distributions.
    MultinomialMixture { components: usize },
    /// Normal responses around a single level.
    RegressionIntercept,
    /// Normal responses around a linear function of the covariates.
    RegressionCovariates,
    /// Probabilistic PCA.
    Ppca { latent_dim: usize },
}

impl ModelKind {
    pub fn default_id(&self) -> String {
        match self {
            ModelKind::Gmm { components } => format!("gmm-k{components}"),
            ModelKind::MultinomialMixture { components } => format!("multmix-k{components}"),
            ModelKind::RegressionIntercept => "reg-intercept".into(),
            ModelKind::RegressionCovariates => "reg-covariates".into(),
            ModelKind::Ppca { latent_dim } => format!("ppca-{latent_dim}"),
        }
    }

    /// Posterior average for sampled models, the point estimate for PPCA.
    pub fn default_reduction(&self) -> Reduction {
        match self {
            ModelKind::Ppca { .. } => Reduction::Map,
            _ => Reduction::Average,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelKind::Gmm { components } | ModelKind::MultinomialMixture { components } if *components == 0 => {
                Err(Error::param("components", "must be at least 1"))
            }
            ModelKind::Ppca { latent_dim: 0 } => Err(Error::Dimension("latent dimension must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Model {
    pub id: String,
    #[serde(flatten)]
    pub kind: ModelKind,
}

impl Model {
    pub fn new(kind: ModelKind) -> Self {
        Model {
            id: kind.default_id(),
            kind,
        }
    }

    pub fn gmm(components: usize) -> Self {
        Model::new(ModelKind::Gmm { components })
    }

    pub fn multinomial(components: usize) -> Self {
        Model::new(ModelKind::MultinomialMixture { components })
    }

    pub fn ppca(latent_dim: usize) -> Self {
        Model::new(ModelKind::Ppca { latent_dim })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Inference settings shared by all models of a study.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub gibbs: GibbsConfig,
    pub em: EmConfig,
    pub regression_variance: PredictiveVariance,
}

#[derive(Debug, Clone)]
pub enum Posterior {
    Gmm {
        draws: PosteriorDraws<GmmState>,
        prepared: Vec<PreparedGmm>,
    },
    MultMix(PosteriorDraws<MultMixState>),
    Regression(RegressionPosterior),
    Ppca(PpcaParams),
}

/// A model fitted to one labelled dataset.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: Model,
    pub posterior: Posterior,
    /// Label of the dataset the posterior was fitted on.
    pub source: String,
    variance: PredictiveVariance,
}

impl Fitted {
    pub fn fit(model: &Model, data: &Dataset, cfg: &FitConfig, stream: &mut VariateStream) -> Result<Fitted> {
        model.kind.validate()?;
        let posterior = match &model.kind {
            ModelKind::Gmm { components } => {
                let mut draws = gmm_gibbs_fit(data, *components, &cfg.gibbs, stream)?;
                draws.model_id = model.id.clone();
                let prepared = draws.states.iter().map(GmmState::prepare).collect::<Result<_>>()?;
                Posterior::Gmm { draws, prepared }
            }
            ModelKind::MultinomialMixture { components } => {
                let mut draws = multmix_gibbs_fit(data, *components, &cfg.gibbs, stream)?;
                draws.model_id = model.id.clone();
                Posterior::MultMix(draws)
            }
            ModelKind::RegressionIntercept => {
                require_continuous(data)?;
                Posterior::Regression(RegressionPosterior::fit(&data.response(), None)?)
            }
            ModelKind::RegressionCovariates => {
                require_continuous(data)?;
                let x = data
                    .covariates()
                    .ok_or_else(|| Error::Data("covariate regression needs covariates".into()))?;
                Posterior::Regression(RegressionPosterior::fit(&data.response(), Some(x))?)
            }
            ModelKind::Ppca { latent_dim } => {
                require_continuous(data)?;
                Posterior::Ppca(ppca_em_fit(data, *latent_dim, &cfg.em)?.params)
            }
        };
        Ok(Fitted {
            model: model.clone(),
            posterior,
            source: data.label().to_string(),
            variance: cfg.regression_variance,
        })
    }

    /// Replicate `index` of a posterior predictive dataset shaped like
    /// `template` (same rows; same covariates for regressions). Sampled
    /// models use retained draw `index mod B`.
    pub fn replicate(&self, template: &Dataset, index: usize, stream: &mut VariateStream) -> Result<Dataset> {
        let n = template.n_rows();
        let data = match &self.posterior {
            Posterior::Gmm { draws, .. } => {
                Dataset::continuous(gmm_replicate(&draws.states[index % draws.len()], n, stream))?
            }
            Posterior::MultMix(draws) => multmix_replicate(&draws.states[index % draws.len()], n, stream)?,
            Posterior::Regression(post) => {
                let y = post.replicate(template.covariates(), n, self.variance, stream)?;
                let y = nalgebra::DMatrix::from_column_slice(n, 1, &y);
                match template.covariates() {
                    Some(x) => Dataset::with_covariates(y, x.clone())?,
                    None => Dataset::continuous(y)?,
                }
            }
            Posterior::Ppca(params) => Dataset::continuous(ppca_replicate(params, n, stream)?)?,
        };
        Ok(data.with_label("rep"))
    }

    /// Diagnostic of `x` under this posterior, reduced over `draws` retained
    /// states (average) or at the highest-posterior state (map). Regression
    /// diagnostics are closed-form and PPCA has a single point estimate, so
    /// both ignore the reduction.
    pub fn diagnostic(&self, x: &Dataset, reduction: Reduction, draws: usize, stream: &mut VariateStream) -> Result<f64> {
        match &self.posterior {
            Posterior::Gmm { draws: d, prepared } => {
                if x.n_cols() != prepared_dims(d) {
                    return Err(Error::Dimension(format!(
                        "data has {} columns, model has {}",
                        x.n_cols(),
                        prepared_dims(d)
                    )));
                }
                let idx = select(d, reduction, draws);
                let values = x.values();
                average_reduction(&idx, |&i| Ok(prepared[i].loglik_diagnostic(values, stream)))
            }
            Posterior::MultMix(d) => {
                if x.level_sizes() != Some(d.states[0].level_sizes().as_slice()) {
                    return Err(Error::Dimension("data levels differ from the model's".into()));
                }
                let codes = x.codes()?;
                let idx = select(d, reduction, draws);
                average_reduction(&idx, |&i| Ok(multmix_chi2_codes(&codes, &d.states[i])))
            }
            Posterior::Regression(post) => {
                crate::linear::regression_diagnostic(&x.response(), x.covariates(), post)
            }
            Posterior::Ppca(params) => ppca_reconstruction_diagnostic(x, params),
        }
    }

    /// Log-likelihood of each retained draw on the fitting data (sampled
    /// models only).
    pub fn log_likelihoods(&self) -> Option<&[f64]> {
        match &self.posterior {
            Posterior::Gmm { draws, .. } => Some(&draws.log_likelihoods),
            Posterior::MultMix(d) => Some(&d.log_likelihoods),
            _ => None,
        }
    }
}

fn prepared_dims(d: &PosteriorDraws<GmmState>) -> usize {
    d.states[0].dims()
}

fn select<S>(d: &PosteriorDraws<S>, reduction: Reduction, draws: usize) -> Vec<usize> {
    match reduction {
        Reduction::Average => d.subsample_indices(draws),
        Reduction::Map => d.map_index().into_iter().collect(),
    }
}

fn require_continuous(data: &Dataset) -> Result<()> {
    if data.kind() != DataKind::Continuous {
        return Err(Error::Data("model needs continuous data".into()));
    }
    Ok(())
}
