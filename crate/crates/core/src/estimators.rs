//! Density-based divergence between diagnostic samples, and harmonic-mean
//! evidence estimates.

use crate::error::{Error, Result};
use crate::mixture::log_sum_exp;

pub const GRID_POINTS: usize = 1024;
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Kernel contributions beyond this many bandwidths are dropped.
const KERNEL_CUTOFF: f64 = 10.0;

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample(format!("need at least 2 samples, got {}", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("non-finite sample value".into()));
    }
    Ok(())
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb: 0.9 · min(sd, IQR/1.34) · R^(−1/5). Falls back
/// to the standard deviation alone when the IQR is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample("samples have zero variance".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Gaussian kernel density estimate of `samples` at each grid point,
/// floored at 1e-12.
pub fn kde_density(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = KERNEL_CUTOFF * h;
    Ok(grid
        .iter()
        .map(|&g| {
            let start = sorted.partition_point(|&s| s < g - reach);
            let sum: f64 = sorted[start..]
                .iter()
                .take_while(|&&s| s <= g + reach)
                .map(|&s| {
                    let u = (g - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            (sum * norm).max(DENSITY_FLOOR)
        })
        .collect())
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    let inner: f64 = values.iter().sum();
    step * (inner - 0.5 * (values[0] + values[values.len() - 1]))
}

/// Symmetrized KL divergence ½ KL(P‖Q) + ½ KL(Q‖P) between the kernel
/// density estimates of two samples, integrated on a shared 1024-point grid.
///
/// The grid depends only on the pooled multiset of samples, so swapping the
/// arguments gives a bit-identical result.
pub fn sym_kl_estimate(samples_p: &[f64], samples_q: &[f64]) -> Result<f64> {
    check_samples(samples_p)?;
    check_samples(samples_q)?;
    let mut pooled: Vec<f64> = samples_p.iter().chain(samples_q).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let h = silverman_bandwidth(&pooled)?;
    let lo = pooled[0] - 3.0 * h;
    let hi = pooled[pooled.len() - 1] + 3.0 * h;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let p = kde_density(samples_p, &grid)?;
    let q = kde_density(samples_q, &grid)?;
    // ½ KL(P‖Q) + ½ KL(Q‖P) = ½ ∫ (p − q)(ln p − ln q). Swapping the
    // arguments negates both factors exactly, so the product is unchanged.
    let integrand: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a - b) * (a.ln() - b.ln())).collect();
    let d = 0.5 * trapezoid(&integrand, step);
    Ok(d.max(0.0))
}

/// Harmonic-mean estimate of log p(X | M) from log-likelihoods at posterior
/// draws: log R − logsumexp(−ℓ).
pub fn harmonic_mean_marginal_likelihood(loglik_draws: &[f64]) -> Result<f64> {
    if loglik_draws.is_empty() {
        return Err(Error::Data("harmonic mean needs at least one draw".into()));
    }
    if loglik_draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite log-likelihood draw".into()));
    }
    let neg: Vec<f64> = loglik_draws.iter().map(|v| -v).collect();
    Ok((loglik_draws.len() as f64).ln() - log_sum_exp(&neg))
}

/// Bayes factor p(X|A) / p(X|B) under equal prior model probabilities.
pub fn bayes_factor(log_ml_a: f64, log_ml_b: f64) -> f64 {
    (log_ml_a - log_ml_b).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;

    fn normals(seed: u64, n: usize, mean: f64) -> Vec<f64> {
        let mut s = Seed::new(seed).stream("kde");
        (0..n).map(|_| s.normal(mean, 1.0)).collect()
    }

    #[test]
    fn far_grid_point_hits_floor() {
        let x = normals(1, 100, 0.0);
        let d = kde_density(&x, &[1000.0]).unwrap();
        assert_eq!(d[0], DENSITY_FLOOR);
    }

    #[test]
    fn density_integrates_to_one() {
        let x = normals(2, 500, 0.0);
        let grid: Vec<f64> = (0..2001).map(|i| -6.0 + 12.0 * i as f64 / 2000.0).collect();
        let d = kde_density(&x, &grid).unwrap();
        let mass = trapezoid(&d, 12.0 / 2000.0);
        assert!((mass - 1.0).abs() < 0.01, "{mass}");
    }

    #[test]
    fn density_at_origin() {
        let x = normals(3, 100_000, 0.0);
        let d = kde_density(&x, &[0.0]).unwrap()[0];
        let truth = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((d / truth - 1.0).abs() < 0.03, "{d}");
    }

    #[test]
    fn zero_variance_is_degenerate() {
        assert!(matches!(kde_density(&[1.0, 1.0, 1.0], &[0.0]), Err(Error::DegenerateSample(_))));
        assert!(matches!(sym_kl_estimate(&[1.0, 2.0], &[f64::INFINITY, 1.0]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn identical_samples() {
        let x = normals(4, 300, 0.0);
        assert!(sym_kl_estimate(&x, &x).unwrap() <= 0.01);
    }

    #[test]
    fn swap_is_bit_identical() {
        let a = normals(5, 200, 0.0);
        let b = normals(6, 250, 0.7);
        assert_eq!(sym_kl_estimate(&a, &b).unwrap().to_bits(), sym_kl_estimate(&b, &a).unwrap().to_bits());
    }

    #[test]
    fn monotone_in_separation() {
        let a = normals(7, 2000, 0.0);
        let mut last = -1.0;
        for sep in [0.0, 1.0, 2.0, 3.0] {
            let b = normals(8, 2000, sep);
            let d = sym_kl_estimate(&a, &b).unwrap();
            assert!(d > last, "separation {sep}: {d} <= {last}");
            last = d;
        }
    }

    #[test]
    fn harmonic_mean_trivial_cases() {
        assert_eq!(harmonic_mean_marginal_likelihood(&[-3.5]).unwrap(), -3.5);
        let v = harmonic_mean_marginal_likelihood(&[-7.0; 10]).unwrap();
        assert!((v + 7.0).abs() < 1e-12);
        assert!(harmonic_mean_marginal_likelihood(&[]).is_err());
        assert!(harmonic_mean_marginal_likelihood(&[f64::NAN]).is_err());
    }

    #[test]
    fn harmonic_mean_shift() {
        let l = [-10.0, -12.5, -9.1, -11.0];
        let shifted: Vec<f64> = l.iter().map(|v| v + 4.25).collect();
        let a = harmonic_mean_marginal_likelihood(&l).unwrap();
        let b = harmonic_mean_marginal_likelihood(&shifted).unwrap();
        assert!((b - a - 4.25).abs() < 1e-12);
    }

    #[test]
    fn bayes_factor_equal() {
        assert_eq!(bayes_factor(-4.0, -4.0), 1.0);
    }
}
