//! One-dimensional Gaussian mixtures for intensity likelihoods, fitted by EM
//! from a seeded k-means++ start.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::{Error, Result};

/// Variance floor in HU^2.
pub const VAR_FLOOR: f64 = 1e-2;
/// Upper clamp for negative log-likelihoods.
pub const NLL_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    components: Vec<GaussianComponent>,
}

impl GmmModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture needs at least one component"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("weights must be >= 0 and sum to 1 (sum {total})")));
        }
        if components.iter().any(|c| !(c.variance >= VAR_FLOOR) || !c.mean.is_finite()) {
            return Err(Error::InvalidParameter(format!("variances must be >= {VAR_FLOOR}")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// `ln sum_k w_k N(x; mu_k, var_k)` by log-sum-exp.
    pub fn log_density(&self, x: f64) -> f64 {
        let mut logs = [0.0f64; 16];
        let mut heap;
        let terms: &mut [f64] = if self.components.len() <= logs.len() {
            &mut logs[..self.components.len()]
        } else {
            heap = vec![0.0; self.components.len()];
            &mut heap
        };
        for (t, c) in terms.iter_mut().zip(&self.components) {
            *t = component_log_density(c, x);
        }
        log_sum_exp(terms)
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.log_density(x)).sum()
    }
}

fn component_log_density(c: &GaussianComponent, x: f64) -> f64 {
    if c.weight <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let d = x - c.mean;
    math::ln(c.weight) - 0.5 * math::ln(2.0 * core::f64::consts::PI * c.variance) - 0.5 * d * d / c.variance
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + math::ln(v.iter().map(|&x| math::exp(x - m)).sum::<f64>())
}

/// `-ln p(x)` under the mixture, clamped to at most [`NLL_CLAMP`].
pub fn gmm_neg_log_likelihood(model: &GmmModel, value: f64) -> f64 {
    let nll = -model.log_density(value);
    if nll.is_nan() || nll > NLL_CLAMP {
        NLL_CLAMP
    } else {
        nll
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Log-likelihood after initialization and after every EM iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
}

impl GmmFit {
    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().unwrap_or(&f64::NEG_INFINITY)
    }
}

fn count_distinct(samples: &[f64]) -> usize {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s.dedup();
    s.len()
}

fn kmeans_pp_centers(samples: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centers = Vec::with_capacity(k);
    centers.push(samples[rng.random_range(0..samples.len())]);
    let mut d2: Vec<f64> = samples.iter().map(|&x| (x - centers[0]) * (x - centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = samples.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            samples[pick]
        } else {
            samples[rng.random_range(0..samples.len())]
        };
        centers.push(next);
        for (d, &x) in d2.iter_mut().zip(samples) {
            *d = d.min((x - next) * (x - next));
        }
    }
    centers
}

/// EM fit of a `k`-component mixture. Initial means come from k-means++
/// seeding; variances and weights from the induced hard assignment.
pub fn fit_gmm(samples: &[f64], k: usize, options: &EmOptions) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".into()));
    }
    let distinct = count_distinct(samples);
    if distinct < k {
        return Err(Error::InsufficientSamples { needed: k, got: distinct });
    }
    let n = samples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let centers = kmeans_pp_centers(samples, k, &mut rng);

    // hard assignment to nearest center
    let mut sum = vec![0.0; k];
    let mut sum2 = vec![0.0; k];
    let mut count = vec![0usize; k];
    for &x in samples {
        let j = (0..k)
            .min_by(|&a, &b| math::abs(x - centers[a]).total_cmp(&math::abs(x - centers[b])))
            .unwrap_or(0);
        sum[j] += x;
        sum2[j] += x * x;
        count[j] += 1;
    }
    let mut comps: Vec<GaussianComponent> = (0..k)
        .map(|j| {
            let c = count[j].max(1) as f64;
            let mean = if count[j] > 0 { sum[j] / c } else { centers[j] };
            let var = if count[j] > 0 { sum2[j] / c - mean * mean } else { 0.0 };
            GaussianComponent { weight: count[j] as f64 / n as f64, mean, variance: var.max(VAR_FLOOR) }
        })
        .collect();
    normalize_weights(&mut comps);

    let mut model = GmmModel { components: comps };
    let mut trace = vec![model.log_likelihood(samples)];
    let mut resp = vec![0.0; k];
    let mut iterations = 0;
    while iterations < options.max_iter {
        let mut nk = vec![0.0; k];
        let mut sx = vec![0.0; k];
        let mut sxx = vec![0.0; k];
        for &x in samples {
            for (r, c) in resp.iter_mut().zip(&model.components) {
                *r = component_log_density(c, x);
            }
            let lse = log_sum_exp(&resp);
            for j in 0..k {
                let w = math::exp(resp[j] - lse);
                nk[j] += w;
                sx[j] += w * x;
                sxx[j] += w * x * x;
            }
        }
        let mut next = model.components.clone();
        for j in 0..k {
            if nk[j] <= 0.0 {
                next[j].weight = 0.0;
                continue;
            }
            let mean = sx[j] / nk[j];
            let var = sxx[j] / nk[j] - mean * mean;
            next[j] = GaussianComponent { weight: nk[j] / n as f64, mean, variance: var.max(VAR_FLOOR) };
        }
        normalize_weights(&mut next);
        model = GmmModel { components: next };
        iterations += 1;
        let ll = model.log_likelihood(samples);
        let prev = *trace.last().unwrap_or(&f64::NEG_INFINITY);
        trace.push(ll);
        if (ll - prev).abs() <= options.tol {
            break;
        }
    }
    Ok(GmmFit { model, log_likelihood_trace: trace, iterations })
}

fn normalize_weights(c: &mut [GaussianComponent]) {
    let total: f64 = c.iter().map(|c| c.weight).sum();
    if total > 0.0 {
        c.iter_mut().for_each(|c| c.weight /= total);
    }
}
