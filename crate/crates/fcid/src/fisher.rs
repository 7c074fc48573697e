//! Fisher-vector encoding of an image's sample rows under a fitted mixture.
//!
//! The encoding is the gradient of the model log-likelihood with respect to
//! the mixture parameters — weights (reparameterized against component 1 to
//! absorb the sum-to-one constraint), means, and per-dimension standard
//! deviations — averaged over the rows and scaled by the diagonal
//! Fisher-information normalizers. Per-row averaging keeps encodings
//! comparable across images of different sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{GmmModel, Sample, SAMPLE_DIM};

/// Encoding options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FisherConfig {
    /// Apply signed square root and L2 normalization to the final vector.
    pub normalize: bool,
}

/// Dimension of the encoding: one weight derivative plus per-dimension mean
/// and deviation derivatives for every component.
pub fn fisher_dim(components: usize) -> usize {
    components * (1 + 2 * SAMPLE_DIM)
}

/// Gradient of the total log-likelihood `sum_n log p(x_n)` with respect to
/// the mixture parameters, accumulated over `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikGradients {
    /// d/dw_a with the constraint folded into component 0:
    /// `sum_n (g_n(a)/w_a - g_n(0)/w_0)`. Entry 0 is identically zero.
    pub weights: Vec<f64>,
    /// d/dmu_{a,v}.
    pub means: Vec<Sample>,
    /// d/dsigma_{a,v} where sigma is the standard deviation.
    pub sigmas: Vec<Sample>,
}

/// Accumulates the closed-form posterior-weighted gradients.
pub fn log_likelihood_gradients(model: &GmmModel, rows: &[Sample]) -> LogLikGradients {
    let k = model.components();
    let mut dw = vec![0.0; k];
    let mut dmu = vec![[0.0; SAMPLE_DIM]; k];
    let mut dsi = vec![[0.0; SAMPLE_DIM]; k];
    let weights = model.weights();
    let means = model.means();
    let sig: Vec<Sample> = model
        .variances()
        .iter()
        .map(|var| std::array::from_fn(|v| var[v].sqrt()))
        .collect();

    for x in rows {
        let g = model.posteriors(x);
        let anchor = g[0] / weights[0];
        for a in 0..k {
            dw[a] += g[a] / weights[a] - anchor;
            for v in 0..SAMPLE_DIM {
                let d = x[v] - means[a][v];
                let s = sig[a][v];
                dmu[a][v] += g[a] * d / (s * s);
                dsi[a][v] += g[a] * (d * d / (s * s * s) - 1.0 / s);
            }
        }
    }

    LogLikGradients {
        weights: dw,
        means: dmu,
        sigmas: dsi,
    }
}

/// Encodes one image's rows into its Fisher vector, laid out as
/// `[weight block | mean block | deviation block]` with components
/// major and dimensions minor inside the two per-dimension blocks.
pub fn encode_fisher(model: &GmmModel, rows: &[Sample], cfg: &FisherConfig) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::NoSamples);
    }
    let k = model.components();
    let n = rows.len() as f64;
    let grads = log_likelihood_gradients(model, rows);
    let weights = model.weights();

    let mut out = Vec::with_capacity(fisher_dim(k));
    for a in 0..k {
        let lambda = (1.0 / weights[a] + 1.0 / weights[0]).sqrt().recip();
        out.push(lambda * grads.weights[a] / n);
    }
    for a in 0..k {
        let root_w = weights[a].sqrt();
        for v in 0..SAMPLE_DIM {
            let sigma = model.variances()[a][v].sqrt();
            out.push(sigma / root_w * grads.means[a][v] / n);
        }
    }
    for a in 0..k {
        let root_2w = (2.0 * weights[a]).sqrt();
        for v in 0..SAMPLE_DIM {
            let sigma = model.variances()[a][v].sqrt();
            out.push(sigma / root_2w * grads.sigmas[a][v] / n);
        }
    }

    if cfg.normalize {
        for value in out.iter_mut() {
            *value = value.signum() * value.abs().sqrt();
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
    }

    debug_assert_eq!(out.len(), fisher_dim(k));
    Ok(out)
}
