//! Seeded, label-addressed random variate streams.
//!
//! Every random quantity in a study is drawn from a [`VariateStream`]
//! identified by a root [`Seed`] and a label path such as
//! `study/gmm-k3/rep/17`. The underlying generator is ChaCha12, keyed by the
//! root seed and positioned on the ChaCha stream selected by the hashed label
//! path, so streams with different labels never overlap and a stream's output
//! does not depend on how much any other stream has been consumed.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root seed of a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub root: u64,
}

impl Seed {
    pub fn new(root: u64) -> Self {
        Seed { root }
    }

    /// Open the stream for `label` under this seed.
    pub fn stream(self, label: &str) -> VariateStream {
        VariateStream::new(self, label)
    }
}

impl From<u64> for Seed {
    fn from(root: u64) -> Self {
        Seed { root }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a, then a splitmix finalizer for avalanche.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

fn key_from_root(root: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = root;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// A single-owner stream of random variates.
///
/// Output is a pure function of `(seed, label path)`. Streams are cloned or
/// derived, never shared between tasks.
#[derive(Debug, Clone)]
pub struct VariateStream {
    rng: ChaCha12Rng,
    root: u64,
    path: u64,
}

impl VariateStream {
    pub fn new(seed: Seed, label: &str) -> Self {
        Self::at_path(seed.root, splitmix64(hash_label(label) ^ 0x5eed))
    }

    fn at_path(root: u64, path: u64) -> Self {
        let mut rng = ChaCha12Rng::from_seed(key_from_root(root));
        rng.set_stream(path);
        VariateStream { rng, root, path }
    }

    /// A fresh child stream for `label`. Independent of how much of `self`
    /// has been consumed.
    pub fn derive(&self, label: &str) -> Self {
        Self::at_path(self.root, splitmix64(self.path ^ hash_label(label)))
    }

    /// A fresh child stream for an integer index (replicate, chain, ...).
    pub fn derive_index(&self, index: u64) -> Self {
        let salt = splitmix64(index.wrapping_add(0x1d8e_4e27_c47d_124f));
        Self::at_path(self.root, splitmix64(self.path.rotate_left(17) ^ salt))
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Gamma with `shape` and `scale` (mean = shape * scale).
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        Gamma::new(shape, scale)
            .expect("gamma parameters validated by caller")
            .sample(&mut self.rng)
    }

    /// Inverse-Gamma(shape, scale): reciprocal of Gamma(shape, 1/scale).
    pub fn inverse_gamma(&mut self, shape: f64, scale: f64) -> f64 {
        1.0 / self.gamma(shape, 1.0 / scale)
    }

    pub fn dirichlet(&mut self, alpha: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = alpha.iter().map(|&a| self.gamma(a, 1.0)).collect();
        let total: f64 = out.iter().sum();
        if total > 0.0 && total.is_finite() {
            out.iter_mut().for_each(|v| *v /= total);
        } else {
            // All gammas underflowed (tiny concentrations): fall back to the
            // largest-concentration vertex.
            let best = alpha
                .iter()
                .enumerate()
                .fold(0, |b, (i, a)| if *a > alpha[b] { i } else { b });
            out.iter_mut().enumerate().for_each(|(i, v)| *v = f64::from(u8::from(i == best)));
        }
        out
    }

    /// Index drawn with probability proportional to `weights` (nonnegative,
    /// not necessarily normalized).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        // Rounding pushed u past the end: return the last positive weight.
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }

    /// Categorical draw from unnormalized log-weights. `scratch` is reused
    /// to avoid allocation in hot loops.
    pub fn categorical_log(&mut self, log_weights: &[f64], scratch: &mut Vec<f64>) -> usize {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        scratch.clear();
        scratch.extend(log_weights.iter().map(|lw| (lw - max).exp()));
        self.categorical(scratch)
    }
}

impl RngCore for VariateStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Distributions available through [`sample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DistributionSpec {
    /// Normal with mean and variance.
    Normal { mean: f64, variance: f64 },
    /// Multivariate normal with diagonal covariance.
    DiagonalNormal { mean: Vec<f64>, variance: Vec<f64> },
    InverseGamma { shape: f64, scale: f64 },
    Dirichlet { alpha: Vec<f64> },
    Categorical { probs: Vec<f64> },
    /// One-trial multinomial, returned as a one-hot vector.
    Multinomial { probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variate {
    Scalar(f64),
    Vector(Vec<f64>),
    Category(usize),
}

impl Variate {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Variate::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Variate::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn category(&self) -> Option<usize> {
        match self {
            Variate::Category(c) => Some(*c),
            _ => None,
        }
    }
}

fn check_probs(field: &'static str, probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::param(field, "empty probability vector"));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::param(field, "entries must be finite and nonnegative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::param(field, format!("sums to {total}, expected 1")));
    }
    Ok(())
}

fn check_positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be positive and finite, got {v}")))
    }
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::Normal { mean, variance } => {
                if !mean.is_finite() {
                    return Err(Error::param("mean", "must be finite"));
                }
                check_positive("variance", *variance)
            }
            DistributionSpec::DiagonalNormal { mean, variance } => {
                if mean.len() != variance.len() || mean.is_empty() {
                    return Err(Error::param(
                        "variance",
                        "must be nonempty and match the mean's length",
                    ));
                }
                if mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::param("mean", "must be finite"));
                }
                variance.iter().try_for_each(|v| check_positive("variance", *v))
            }
            DistributionSpec::InverseGamma { shape, scale } => {
                check_positive("shape", *shape)?;
                check_positive("scale", *scale)
            }
            DistributionSpec::Dirichlet { alpha } => {
                if alpha.is_empty() {
                    return Err(Error::param("alpha", "empty concentration vector"));
                }
                alpha.iter().try_for_each(|a| check_positive("alpha", *a))
            }
            DistributionSpec::Categorical { probs } | DistributionSpec::Multinomial { probs } => {
                check_probs("probs", probs)
            }
        }
    }

    fn draw(&self, stream: &mut VariateStream) -> Variate {
        match self {
            DistributionSpec::Normal { mean, variance } => {
                Variate::Scalar(stream.normal(*mean, variance.sqrt()))
            }
            DistributionSpec::DiagonalNormal { mean, variance } => Variate::Vector(
                mean.iter()
                    .zip(variance)
                    .map(|(m, v)| stream.normal(*m, v.sqrt()))
                    .collect(),
            ),
            DistributionSpec::InverseGamma { shape, scale } => {
                Variate::Scalar(stream.inverse_gamma(*shape, *scale))
            }
            DistributionSpec::Dirichlet { alpha } => Variate::Vector(stream.dirichlet(alpha)),
            DistributionSpec::Categorical { probs } => Variate::Category(stream.categorical(probs)),
            DistributionSpec::Multinomial { probs } => {
                let c = stream.categorical(probs);
                let mut v = vec![0.0; probs.len()];
                v[c] = 1.0;
                Variate::Vector(v)
            }
        }
    }
}

/// Draw `count` i.i.d. variates from `dist`.
pub fn sample(dist: &DistributionSpec, count: usize, stream: &mut VariateStream) -> Result<Vec<Variate>> {
    dist.validate()?;
    Ok((0..count).map(|_| dist.draw(stream)).collect())
}
