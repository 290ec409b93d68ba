//! Finite mixture models fitted by Gibbs sampling.

pub mod gmm;
pub mod multinomial;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gmm::{gmm_gibbs_fit, gmm_loglik_diagnostic, gmm_predictive, GmmState, PreparedGmm};
pub use multinomial::{multmix_chi2_diagnostic, multmix_gibbs_fit, multmix_predictive, MultMixState};

/// Length and thinning of a Gibbs chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GibbsConfig {
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            iters: 2000,
            burnin: 1000,
            thin: 5,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::param("thin", "must be at least 1"));
        }
        if self.iters <= self.burnin {
            return Err(Error::param("iters", "must exceed burnin"));
        }
        if self.retained() == 0 {
            return Err(Error::param("thin", "chain retains no draws"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iters.saturating_sub(self.burnin)) / self.thin.max(1)
    }

    pub(crate) fn keeps(&self, iter: usize) -> bool {
        iter >= self.burnin && (iter + 1 - self.burnin) % self.thin == 0
    }
}

/// Retained states of a posterior sampler, with the log-likelihood and
/// unnormalized log-posterior of each.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws<S> {
    pub states: Vec<S>,
    pub log_likelihoods: Vec<f64>,
    pub log_posteriors: Vec<f64>,
    pub model_id: String,
    pub source_id: String,
}

impl<S> PosteriorDraws<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The retained draw with the highest log-posterior.
    pub fn map_state(&self) -> Option<&S> {
        self.map_index().map(|i| &self.states[i])
    }

    /// `b` draws spread evenly over the chain (all of them when `b` covers
    /// the chain).
    pub fn subsample(&self, b: usize) -> Vec<&S> {
        self.subsample_indices(b).into_iter().map(|i| &self.states[i]).collect()
    }

    pub fn subsample_indices(&self, b: usize) -> Vec<usize> {
        let total = self.states.len();
        if b == 0 || b >= total {
            return (0..total).collect();
        }
        (0..b).map(|i| i * total / b).collect()
    }

    pub fn map_index(&self) -> Option<usize> {
        self.log_posteriors
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

/// Flattened parameters of one draw, for CSV export.
pub trait FlatParams {
    fn param_names(&self) -> Vec<String>;
    fn param_values(&self) -> Vec<f64>;
}

/// Write one row per retained draw: `draw, loglik, logpost, <params...>`.
pub fn write_draws_csv<S: FlatParams>(draws: &PosteriorDraws<S>, path: &Path) -> Result<()> {
    let first = draws
        .states
        .first()
        .ok_or_else(|| Error::Data("no draws to export".into()))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["draw".to_string(), "loglik".into(), "logpost".into()];
    header.extend(first.param_names());
    writeln!(out, "{}", header.join(","))?;
    for (i, s) in draws.states.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            draws.log_likelihoods[i].to_string(),
            draws.log_posteriors[i].to_string(),
        ];
        row.extend(s.param_values().iter().map(f64::to_string));
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retained_count_matches_defaults() {
        let cfg = GibbsConfig::default();
        assert_eq!(cfg.retained(), 200);
        assert_eq!((0..cfg.iters).filter(|t| cfg.keeps(*t)).count(), 200);
        assert!(GibbsConfig { iters: 10, burnin: 10, thin: 1 }.validate().is_err());
    }

    #[test]
    fn subsample_spreads() {
        let d = PosteriorDraws {
            states: (0..10).collect::<Vec<_>>(),
            log_likelihoods: vec![0.0; 10],
            log_posteriors: (0..10).map(|i| -((i as f64) - 6.0).abs()).collect(),
            model_id: "m".into(),
            source_id: "s".into(),
        };
        assert_eq!(d.subsample(5).into_iter().copied().collect::<Vec<_>>(), vec![0, 2, 4, 6, 8]);
        assert_eq!(d.subsample(0).len(), 10);
        assert_eq!(*d.map_state().unwrap(), 6);
    }
}
