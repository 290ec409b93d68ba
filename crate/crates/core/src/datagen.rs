//! Synthetic data generators for every experiment.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{Seed, VariateStream};

/// Component means of the three-cluster 2-D mixture, one row per component.
pub const GMM_MEANS: [[f64; 2]; 3] = [[-5.0, 5.0], [0.0, 0.0], [10.0, 5.0]];
/// Per-dimension variances matching [`GMM_MEANS`].
pub const GMM_VARIANCES: [[f64; 2]; 3] = [[1.0, 1.0], [2.0, 1.0], [2.0, 4.0]];

pub const MULTINOMIAL_LEVELS: [usize; 3] = [4, 3, 3];

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    Ok(())
}

fn stream(seed: u64, name: &str) -> VariateStream {
    Seed::new(seed).stream(&format!("datagen/{name}"))
}

/// Equal-weight three-component mixture in two dimensions.
pub fn gen_gmm_data(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut s = stream(seed, "gmm");
    let mut values = DMatrix::zeros(n, 2);
    for i in 0..n {
        let k = ((s.uniform() * 3.0) as usize).min(2);
        for d in 0..2 {
            values[(i, d)] = s.normal(GMM_MEANS[k][d], GMM_VARIANCES[k][d].sqrt());
        }
    }
    Dataset::continuous(values)
}

/// Responses y ~ Normal(theta, 1) with `p` independent standard-normal
/// covariates.
pub fn gen_regression_data(n: usize, p: usize, theta: f64, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    if p == 0 {
        return Err(Error::param("p", "must be at least 1"));
    }
    let mut s = stream(seed, "regression");
    let y = DMatrix::from_fn(n, 1, |_, _| s.normal(theta, 1.0));
    let x = DMatrix::from_fn(n, p, |_, _| s.standard_normal());
    Dataset::with_covariates(y, x)
}

/// Ten-dimensional data from two latent factors, each loading 5 on its own
/// block of five coordinates, plus unit noise.
pub fn gen_linear_factor_data(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut s = stream(seed, "linear-factor");
    let mut values = DMatrix::zeros(n, 10);
    for i in 0..n {
        let z = [s.standard_normal(), s.standard_normal()];
        for g in 0..10 {
            values[(i, g)] = 5.0 * z[g / 5] + s.standard_normal();
        }
    }
    Dataset::continuous(values)
}

/// Noise-free mean of the nonlinear factor map at latent point (z1, z2).
pub fn nonlinear_factor_mean(z1: f64, z2: f64) -> [f64; 7] {
    [
        7.0 * z1,
        6.0 * z1,
        5.0 * z1 * z1,
        4.0 * z2,
        3.0 * z2,
        2.0 * (FRAC_PI_2 * z2).sin(),
        z1 * z2,
    ]
}

/// Seven-dimensional data from two latent factors through a nonlinear map,
/// plus unit noise.
pub fn gen_nonlinear_factor_data(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut s = stream(seed, "nonlinear-factor");
    let mut values = DMatrix::zeros(n, 7);
    for i in 0..n {
        let mean = nonlinear_factor_mean(s.standard_normal(), s.standard_normal());
        for (g, m) in mean.iter().enumerate() {
            values[(i, g)] = m + s.standard_normal();
        }
    }
    Dataset::continuous(values)
}

/// Class tables `[class][variable][level]` and class weights of the default
/// two-class categorical preset: one class favours high scores, the other
/// low scores.
pub fn multmix_preset() -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let high = vec![vec![0.05, 0.1, 0.15, 0.7], vec![0.1, 0.2, 0.7], vec![0.1, 0.2, 0.7]];
    let low: Vec<Vec<f64>> = high.iter().map(|t| t.iter().rev().copied().collect()).collect();
    (vec![high, low], vec![0.5, 0.5])
}

fn check_simplex(field: &'static str, p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::param(field, "entries must be finite and nonnegative"));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::param(field, "must sum to 1"));
    }
    Ok(())
}

/// Categorical data from a product-multinomial mixture.
pub fn gen_multmix_data(n: usize, tables: &[Vec<Vec<f64>>], weights: &[f64], seed: u64) -> Result<Dataset> {
    check_n(n)?;
    check_simplex("weights", weights)?;
    if tables.len() != weights.len() {
        return Err(Error::param("tables", "need one table set per class"));
    }
    let levels: Vec<usize> = tables[0].iter().map(Vec::len).collect();
    for t in tables {
        let l: Vec<usize> = t.iter().map(Vec::len).collect();
        if l != levels {
            return Err(Error::param("tables", "classes disagree on level sizes"));
        }
        for p in t {
            check_simplex("tables", p)?;
        }
    }
    let mut s = stream(seed, "multinomial");
    let codes: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let z = s.categorical(weights);
            tables[z].iter().map(|p| s.categorical(p)).collect()
        })
        .collect();
    Dataset::categorical_from_codes(&codes, &levels)
}

/// Named generator presets, as exposed by the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DataPreset {
    Gmm,
    Regression,
    LinearFactor,
    NonlinearFactor,
    Multinomial,
}

impl DataPreset {
    /// Generate `n` rows with default parameters.
    pub fn generate(self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            DataPreset::Gmm => gen_gmm_data(n, seed),
            DataPreset::Regression => gen_regression_data(n, 10, 2.5, seed),
            DataPreset::LinearFactor => gen_linear_factor_data(n, seed),
            DataPreset::NonlinearFactor => gen_nonlinear_factor_data(n, seed),
            DataPreset::Multinomial => {
                let (tables, weights) = multmix_preset();
                gen_multmix_data(n, &tables, &weights, seed)
            }
        }
    }
}
