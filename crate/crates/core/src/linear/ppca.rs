//! Probabilistic PCA fitted by expectation-maximization.
//!
//! ```text
//! z_i ~ Normal(0, I_K)
//! x_i = mean + W z_i + ε_i,   ε_i ~ Normal(0, σ² I_G)
//! ```
//!
//! With a flat prior the MAP estimate is the maximum-likelihood one, which
//! EM reaches by iterating on the sample covariance of the centered data.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::VariateStream;

/// Relative floor for σ², as a fraction of the mean per-dimension variance.
/// Keeps noiseless data from driving the likelihood to infinity.
const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-8,
            max_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpcaParams {
    /// G×K loading matrix.
    pub loadings: DMatrix<f64>,
    pub noise_variance: f64,
    pub mean: DVector<f64>,
}

/// Result of an EM run: the estimate plus the log-likelihood after every
/// iteration (the first entry is at the initial point).
#[derive(Debug, Clone)]
pub struct PpcaFit {
    pub params: PpcaParams,
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

impl PpcaParams {
    pub fn dims(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.loadings.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.latent_dim() == 0 {
            return Err(Error::Dimension("latent dimension must be at least 1".into()));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::State("noise variance must be positive".into()));
        }
        if self.loadings.iter().chain(self.mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::State("loadings must be finite".into()));
        }
        Ok(())
    }

    /// Model covariance W Wᵀ + σ² I.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.loadings * self.loadings.transpose()
            + DMatrix::identity(self.dims(), self.dims()) * self.noise_variance
    }

    /// G×G projection x − mean ↦ W M⁻¹ Wᵀ (x − mean).
    fn reconstruction_operator(&self) -> Result<DMatrix<f64>> {
        let w = &self.loadings;
        let m = w.transpose() * w + DMatrix::identity(self.latent_dim(), self.latent_dim()) * self.noise_variance;
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| Error::Singular("latent posterior precision is singular".into()))?;
        Ok(w * m_inv * w.transpose())
    }
}

fn log_likelihood(w: &DMatrix<f64>, sigma2: f64, s: &DMatrix<f64>, n: usize) -> f64 {
    let (g, k) = w.shape();
    let m = w.transpose() * w + DMatrix::identity(k, k) * sigma2;
    let m_chol = m.clone().cholesky().expect("M is positive definite");
    let log_det_m: f64 = 2.0 * m_chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let log_det_c = (g - k) as f64 * sigma2.ln() + log_det_m;
    // C⁻¹ = σ⁻² (I − W M⁻¹ Wᵀ)
    let proj = w * m_chol.solve(&w.transpose());
    let trace = (s.trace() - (proj * s).trace()) / sigma2;
    -0.5 * n as f64 * (g as f64 * (2.0 * PI).ln() + log_det_c + trace)
}

fn initial_loadings(g: usize, k: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(g, k, |i, j| scale * (((i + 1) * (j + 2)) as f64 * 0.7 + j as f64).sin())
}

/// Maximum-likelihood probabilistic PCA with `k` latent dimensions.
pub fn ppca_em_fit(x: &Dataset, k: usize, cfg: &EmConfig) -> Result<PpcaFit> {
    let values = x.values();
    let (n, g) = values.shape();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in factor-model data".into()));
    }
    if k == 0 || k >= g {
        return Err(Error::Dimension(format!("latent dimension {k} must be in 1..{g}")));
    }
    if n <= k {
        return Err(Error::Dimension(format!("need more rows ({n}) than latent dimensions ({k})")));
    }
    if cfg.max_iters == 0 {
        return Err(Error::param("max_iters", "must be at least 1"));
    }
    let mean = DVector::from_iterator(g, values.column_iter().map(|c| c.mean()));
    let mut centered = values.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let s = centered.transpose() * &centered / n as f64;
    let avg_var = s.trace() / g as f64;
    if !(avg_var > 0.0) {
        return Err(Error::Data("factor-model data has zero variance".into()));
    }
    let floor = NOISE_FLOOR * avg_var;

    let mut w = initial_loadings(g, k, avg_var.sqrt());
    let mut sigma2 = avg_var;
    let mut lls = vec![log_likelihood(&w, sigma2, &s, n)];
    let mut converged = false;
    let eye_k = DMatrix::<f64>::identity(k, k);
    for _ in 0..cfg.max_iters {
        let m = w.transpose() * &w + &eye_k * sigma2;
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| Error::Singular("latent posterior precision is singular".into()))?;
        let sw = &s * &w;
        let inner = &eye_k * sigma2 + &m_inv * w.transpose() * &sw;
        let inner_inv = inner
            .try_inverse()
            .ok_or_else(|| Error::Singular("EM loading update is singular".into()))?;
        let w_new = &sw * inner_inv;
        let sigma2_new = ((&s - &sw * &m_inv * w_new.transpose()).trace() / g as f64).max(floor);
        w = w_new;
        sigma2 = sigma2_new;
        let ll = log_likelihood(&w, sigma2, &s, n);
        let prev = *lls.last().expect("nonempty");
        lls.push(ll);
        if ((ll - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(PpcaFit {
        params: PpcaParams {
            loadings: w,
            noise_variance: sigma2,
            mean,
        },
        log_likelihoods: lls,
        converged,
    })
}

/// `n_rep` rows drawn from the fitted model.
pub fn ppca_replicate(params: &PpcaParams, n_rep: usize, stream: &mut VariateStream) -> Result<DMatrix<f64>> {
    params.validate()?;
    let (g, k) = params.loadings.shape();
    let sd = params.noise_variance.sqrt();
    let mut out = DMatrix::zeros(n_rep, g);
    let mut z = DVector::zeros(k);
    for i in 0..n_rep {
        for zj in z.iter_mut() {
            *zj = stream.standard_normal();
        }
        let wz = &params.loadings * &z;
        for j in 0..g {
            out[(i, j)] = params.mean[j] + wz[j] + sd * stream.standard_normal();
        }
    }
    Ok(out)
}

/// `replicates` datasets of `n_rep` rows from the point estimate.
pub fn ppca_predictive(
    params: &PpcaParams,
    n_rep: usize,
    replicates: usize,
    stream: &mut VariateStream,
) -> Result<Vec<Dataset>> {
    if replicates == 0 {
        return Err(Error::param("replicates", "must be at least 1"));
    }
    (0..replicates)
        .map(|r| {
            let values = ppca_replicate(params, n_rep, &mut stream.derive_index(r as u64))?;
            Dataset::continuous(values).map(|d| d.with_label("rep"))
        })
        .collect()
}

/// Reconstruction loss Σ_i ‖x_i − (mean + W M⁻¹ Wᵀ (x_i − mean))‖².
pub fn ppca_reconstruction_diagnostic(x: &Dataset, params: &PpcaParams) -> Result<f64> {
    params.validate()?;
    if x.n_cols() != params.dims() {
        return Err(Error::Dimension(format!(
            "data has {} columns, model has {}",
            x.n_cols(),
            params.dims()
        )));
    }
    let op = params.reconstruction_operator()?;
    let g = params.dims();
    // residual = (I − P)(x − mean)
    let residual_op = DMatrix::<f64>::identity(g, g) - op;
    let mut total = 0.0;
    let mut centered = DVector::zeros(g);
    for row in x.values().row_iter() {
        for j in 0..g {
            centered[j] = row[j] - params.mean[j];
        }
        total += (&residual_op * &centered).norm_squared();
    }
    Ok(total)
}

/// Write `name,value` rows: `mean_g`, `w_g_k`, `sigma2`.
pub fn write_ppca_csv(params: &PpcaParams, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "name,value")?;
    for (g, m) in params.mean.iter().enumerate() {
        writeln!(out, "mean_{g},{m}")?;
    }
    for g in 0..params.dims() {
        for k in 0..params.latent_dim() {
            writeln!(out, "w_{g}_{k},{}", params.loadings[(g, k)])?;
        }
    }
    writeln!(out, "sigma2,{}", params.noise_variance)?;
    out.flush()?;
    Ok(())
}
