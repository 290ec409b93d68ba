//! Mixture of products of categorical distributions.
//!
//! ```text
//! π        ~ Dirichlet(α_π 1_K)
//! θ_k^(j)  ~ Dirichlet(α 1_{L_j})
//! z_i      ~ Categorical(π)
//! x_i^(j)  ~ Categorical(θ_{z_i}^(j))
//! ```

use super::{log_sum_exp, FlatParams, GibbsConfig, PosteriorDraws};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::VariateStream;
use crate::special::ln_gamma;

pub const TABLE_CONCENTRATION: f64 = 2.0;
pub const WEIGHT_CONCENTRATION: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MultMixState {
    pub weights: Vec<f64>,
    /// `tables[k][j][c]`: probability of level `c` of variable `j` in class `k`.
    pub tables: Vec<Vec<Vec<f64>>>,
    pub assignments: Vec<usize>,
}

impl MultMixState {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.tables.first().map(|t| t.iter().map(Vec::len).collect()).unwrap_or_default()
    }

    /// Posterior class probabilities p(z = k | codes, θ) into `out`.
    fn responsibilities(&self, codes: &[usize], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mut p = self.weights[k];
            for (j, &c) in codes.iter().enumerate() {
                p *= self.tables[k][j][c];
            }
            *o = p;
        }
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|o| *o /= total);
        } else {
            // Every class gives this row probability 0; fall back to the
            // prior weights.
            out.copy_from_slice(&self.weights);
        }
    }

    fn row_log_likelihood(&self, codes: &[usize], scratch: &mut [f64]) -> f64 {
        for (k, s) in scratch.iter_mut().enumerate() {
            let mut l = self.weights[k].ln();
            for (j, &c) in codes.iter().enumerate() {
                l += self.tables[k][j][c].ln();
            }
            *s = l;
        }
        log_sum_exp(scratch)
    }

    pub fn log_likelihood(&self, codes: &[Vec<usize>]) -> f64 {
        let mut scratch = vec![0.0; self.components()];
        codes.iter().map(|row| self.row_log_likelihood(row, &mut scratch)).sum()
    }
}

impl FlatParams for MultMixState {
    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.components()).map(|k| format!("pi_{k}")).collect();
        for (k, t) in self.tables.iter().enumerate() {
            for (j, probs) in t.iter().enumerate() {
                for c in 0..probs.len() {
                    names.push(format!("theta_{k}_{j}_{c}"));
                }
            }
        }
        names
    }

    fn param_values(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        for t in &self.tables {
            for probs in t {
                v.extend(probs);
            }
        }
        v
    }
}

fn log_dirichlet(x: &[f64], alpha: f64) -> f64 {
    let k = x.len() as f64;
    ln_gamma(alpha * k) - k * ln_gamma(alpha) + x.iter().map(|v| (alpha - 1.0) * v.ln()).sum::<f64>()
}

fn log_prior(state: &MultMixState) -> f64 {
    let mut lp = log_dirichlet(&state.weights, WEIGHT_CONCENTRATION);
    for t in &state.tables {
        for probs in t {
            lp += log_dirichlet(probs, TABLE_CONCENTRATION);
        }
    }
    lp
}

fn check_levels(x: &Dataset) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    let levels = x
        .level_sizes()
        .ok_or_else(|| Error::Data("multinomial mixture needs categorical data".into()))?
        .to_vec();
    let codes = x.codes()?;
    Ok((levels, codes))
}

fn update_parameters(
    codes: &[Vec<usize>],
    levels: &[usize],
    state: &mut MultMixState,
    stream: &mut VariateStream,
) {
    let k = state.components();
    let mut class_counts = vec![0.0; k];
    let mut cell_counts: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|_| levels.iter().map(|&l| vec![0.0; l]).collect())
        .collect();
    for (row, &z) in codes.iter().zip(&state.assignments) {
        class_counts[z] += 1.0;
        for (j, &c) in row.iter().enumerate() {
            cell_counts[z][j][c] += 1.0;
        }
    }
    let conc: Vec<f64> = class_counts.iter().map(|n| WEIGHT_CONCENTRATION + n).collect();
    state.weights = stream.dirichlet(&conc);
    for (kk, counts) in cell_counts.iter().enumerate() {
        for (j, cc) in counts.iter().enumerate() {
            let conc: Vec<f64> = cc.iter().map(|n| TABLE_CONCENTRATION + n).collect();
            state.tables[kk][j] = stream.dirichlet(&conc);
        }
    }
}

fn update_assignments(codes: &[Vec<usize>], state: &mut MultMixState, stream: &mut VariateStream) {
    let k = state.components();
    let mut logw = vec![0.0; k];
    let mut scratch = Vec::with_capacity(k);
    let log_weights: Vec<f64> = state.weights.iter().map(|w| w.ln()).collect();
    let log_tables: Vec<Vec<Vec<f64>>> = state
        .tables
        .iter()
        .map(|t| t.iter().map(|p| p.iter().map(|v| v.ln()).collect()).collect())
        .collect();
    for (i, row) in codes.iter().enumerate() {
        for (kk, lw) in logw.iter_mut().enumerate() {
            *lw = log_weights[kk] + row.iter().enumerate().map(|(j, &c)| log_tables[kk][j][c]).sum::<f64>();
        }
        state.assignments[i] = stream.categorical_log(&logw, &mut scratch);
    }
}

pub(crate) fn run_chain(
    codes: &[Vec<usize>],
    levels: &[usize],
    k: usize,
    cfg: &GibbsConfig,
    stream: &mut VariateStream,
) -> Result<PosteriorDraws<MultMixState>> {
    if k == 0 {
        return Err(Error::param("components", "must be at least 1"));
    }
    cfg.validate()?;
    let mut state = MultMixState {
        weights: vec![1.0 / k as f64; k],
        tables: (0..k).map(|_| levels.iter().map(|&l| vec![1.0 / l as f64; l]).collect()).collect(),
        assignments: (0..codes.len())
            .map(|_| ((stream.uniform() * k as f64) as usize).min(k - 1))
            .collect(),
    };
    let mut draws = PosteriorDraws {
        states: Vec::with_capacity(cfg.retained()),
        log_likelihoods: Vec::with_capacity(cfg.retained()),
        log_posteriors: Vec::with_capacity(cfg.retained()),
        model_id: format!("multmix-k{k}"),
        source_id: String::new(),
    };
    for t in 0..cfg.iters {
        update_parameters(codes, levels, &mut state, stream);
        update_assignments(codes, &mut state, stream);
        if cfg.keeps(t) {
            let ll = state.log_likelihood(codes);
            draws.log_likelihoods.push(ll);
            draws.log_posteriors.push(ll + log_prior(&state));
            draws.states.push(state.clone());
        }
    }
    Ok(draws)
}

/// Fit a `k`-class mixture to one-hot categorical data by Gibbs sampling.
pub fn multmix_gibbs_fit(
    x: &Dataset,
    k: usize,
    cfg: &GibbsConfig,
    stream: &mut VariateStream,
) -> Result<PosteriorDraws<MultMixState>> {
    let (levels, codes) = check_levels(x)?;
    let mut draws = run_chain(&codes, &levels, k, cfg, stream)?;
    draws.source_id = x.label().to_string();
    Ok(draws)
}

/// Level codes of `n_rep` rows drawn from the mixture at `state`.
pub fn multmix_replicate_codes(state: &MultMixState, n_rep: usize, stream: &mut VariateStream) -> Vec<Vec<usize>> {
    (0..n_rep)
        .map(|_| {
            let z = stream.categorical(&state.weights);
            state.tables[z].iter().map(|p| stream.categorical(p)).collect()
        })
        .collect()
}

pub fn multmix_replicate(state: &MultMixState, n_rep: usize, stream: &mut VariateStream) -> Result<Dataset> {
    let codes = multmix_replicate_codes(state, n_rep, stream);
    Dataset::categorical_from_codes(&codes, &state.level_sizes())
}

/// Fit on `x_in` and draw `replicates` posterior predictive datasets of
/// `n_rep` rows each; replicate r uses retained draw r mod B.
pub fn multmix_predictive(
    x_in: &Dataset,
    k: usize,
    replicates: usize,
    n_rep: usize,
    cfg: &GibbsConfig,
    stream: &mut VariateStream,
) -> Result<Vec<Dataset>> {
    if replicates == 0 {
        return Err(Error::param("replicates", "must be at least 1"));
    }
    let draws = multmix_gibbs_fit(x_in, k, cfg, &mut stream.derive("fit"))?;
    (0..replicates)
        .map(|r| {
            let state = &draws.states[r % draws.len()];
            let mut s = stream.derive("rep").derive_index(r as u64);
            multmix_replicate(state, n_rep, &mut s).map(|d| d.with_label("rep"))
        })
        .collect()
}

/// χ² discrepancy on level codes: 2 Σ_i Σ_j −log E[x_i^(j) = observed | θ].
/// Returns +∞ when an observed cell has predicted probability 0.
pub fn multmix_chi2_codes(codes: &[Vec<usize>], state: &MultMixState) -> f64 {
    let k = state.components();
    let mut resp = vec![0.0; k];
    let mut total = 0.0;
    for row in codes {
        state.responsibilities(row, &mut resp);
        for (j, &c) in row.iter().enumerate() {
            let expected: f64 = (0..k).map(|kk| state.tables[kk][j][c] * resp[kk]).sum();
            if expected <= 0.0 {
                return f64::INFINITY;
            }
            total -= expected.ln();
        }
    }
    2.0 * total
}

/// The χ² discrepancy d(x, θ) of a categorical dataset under `state`.
pub fn multmix_chi2_diagnostic(x: &Dataset, state: &MultMixState) -> Result<f64> {
    let (levels, codes) = check_levels(x)?;
    if levels != state.level_sizes() {
        return Err(Error::Dimension(format!(
            "data level sizes {levels:?} differ from model {:?}",
            state.level_sizes()
        )));
    }
    Ok(multmix_chi2_codes(&codes, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    fn one_class(tables: Vec<Vec<f64>>) -> MultMixState {
        MultMixState {
            weights: vec![1.0],
            tables: vec![tables],
            assignments: vec![],
        }
    }

    #[test]
    fn chi2_perfect_prediction_is_zero() {
        let s = one_class(vec![vec![0.0, 1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let x = Dataset::categorical_from_codes(&[vec![1, 0, 2]], &[4, 3, 3]).unwrap();
        assert_eq!(multmix_chi2_diagnostic(&x, &s).unwrap(), 0.0);
    }

    #[test]
    fn chi2_half_probability() {
        let s = one_class(vec![vec![0.5, 0.5]]);
        let x = Dataset::categorical_from_codes(&[vec![0]], &[2]).unwrap();
        let v = multmix_chi2_diagnostic(&x, &s).unwrap();
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn chi2_zero_probability_is_infinite() {
        let s = one_class(vec![vec![1.0, 0.0]]);
        let x = Dataset::categorical_from_codes(&[vec![1]], &[2]).unwrap();
        assert_eq!(multmix_chi2_diagnostic(&x, &s).unwrap(), f64::INFINITY);
    }

    #[test]
    fn chi2_doubles_with_duplicated_data() {
        let s = MultMixState {
            weights: vec![0.3, 0.7],
            tables: vec![vec![vec![0.2, 0.8], vec![0.1, 0.3, 0.6]], vec![vec![0.6, 0.4], vec![0.5, 0.25, 0.25]]],
            assignments: vec![],
        };
        let x = Dataset::categorical_from_codes(&[vec![0, 1], vec![1, 2], vec![1, 0]], &[2, 3]).unwrap();
        let single = multmix_chi2_diagnostic(&x, &s).unwrap();
        let double = multmix_chi2_diagnostic(&x.concat(&x).unwrap(), &s).unwrap();
        assert!((double - 2.0 * single).abs() < 1e-12);
    }

    #[test]
    fn chi2_label_permutation() {
        let t0 = vec![vec![0.2, 0.8], vec![0.1, 0.3, 0.6]];
        let t1 = vec![vec![0.6, 0.4], vec![0.5, 0.25, 0.25]];
        let a = MultMixState { weights: vec![0.3, 0.7], tables: vec![t0.clone(), t1.clone()], assignments: vec![] };
        let b = MultMixState { weights: vec![0.7, 0.3], tables: vec![t1, t0], assignments: vec![] };
        let x = Dataset::categorical_from_codes(&[vec![0, 1], vec![1, 2], vec![1, 0]], &[2, 3]).unwrap();
        let da = multmix_chi2_diagnostic(&x, &a).unwrap();
        let db = multmix_chi2_diagnostic(&x, &b).unwrap();
        assert!((da - db).abs() < 1e-12);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let bad = nalgebra::DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        assert!(matches!(Dataset::categorical_onehot(bad, &[3]), Err(Error::Data(_))));
    }

    #[test]
    fn replicates_are_one_hot_and_deterministic() {
        let x = Dataset::categorical_from_codes(
            &(0..60).map(|i| vec![i % 4, i % 3, (i / 2) % 3]).collect::<Vec<_>>(),
            &[4, 3, 3],
        )
        .unwrap();
        let cfg = GibbsConfig { iters: 40, burnin: 20, thin: 2 };
        let a = multmix_predictive(&x, 2, 4, 50, &cfg, &mut Seed::new(2).stream("m")).unwrap();
        let b = multmix_predictive(&x, 2, 4, 50, &cfg, &mut Seed::new(2).stream("m")).unwrap();
        assert_eq!(a, b);
        for rep in &a {
            assert_eq!(rep.codes().unwrap().len(), 50);
        }
        assert!(multmix_predictive(&x, 2, 0, 50, &cfg, &mut Seed::new(2).stream("m")).is_err());
    }

    #[test]
    fn single_class_weight_is_degenerate() {
        let x = Dataset::categorical_from_codes(&[vec![0, 1], vec![1, 1], vec![1, 0]], &[2, 2]).unwrap();
        let cfg = GibbsConfig { iters: 30, burnin: 10, thin: 1 };
        let d = multmix_gibbs_fit(&x, 1, &cfg, &mut Seed::new(1).stream("f")).unwrap();
        assert!(d.states.iter().all(|s| s.weights == vec![1.0]));
    }
}
