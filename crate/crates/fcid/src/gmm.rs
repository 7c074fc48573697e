//! Diagonal-covariance Gaussian mixtures over 4-D pixel samples, fitted by
//! expectation-maximization from a k-means++ start.
//!
//! Sample rows are `[hue, saturation, dark/255, bright/255]` so every
//! dimension lives in `[0, 1]`; the divisor is recorded alongside persisted
//! models.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelPlanes;
use crate::error::{Error, Result};

/// Dimensions of a pixel sample.
pub const SAMPLE_DIM: usize = 4;

/// Divisor applied to the dark/bright channels before modeling.
pub const VALUE_SCALE: f64 = 255.0;

pub type Sample = [f64; SAMPLE_DIM];

const LN_2PI: f64 = 1.8378770664093453;

/// Pooled sample rows with per-image offsets, so each image's subset stays
/// addressable after concatenation.
#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    rows: Vec<Sample>,
    offsets: Vec<usize>,
}

impl SampleSet {
    pub fn new() -> Self {
        Self {
            rows: Vec::new(),
            offsets: vec![0],
        }
    }

    pub fn push_image(&mut self, rows: Vec<Sample>) {
        self.rows.extend(rows);
        self.offsets.push(self.rows.len());
    }

    pub fn rows(&self) -> &[Sample] {
        &self.rows
    }

    pub fn image_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Rows of image `i`.
    pub fn image_rows(&self, i: usize) -> &[Sample] {
        &self.rows[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// One 4-D row per pixel, in row-major order. When the pixel count exceeds
/// `max_samples`, a seeded uniform subsample is taken (row-major order
/// preserved).
pub fn build_sample_set(
    planes: &ChannelPlanes,
    max_samples: Option<usize>,
    seed: u64,
) -> Vec<Sample> {
    let n = planes.pixel_count();
    let row = |i: usize| {
        [
            planes.hue.values()[i],
            planes.saturation.values()[i],
            planes.dark.values()[i] / VALUE_SCALE,
            planes.bright.values()[i] / VALUE_SCALE,
        ]
    };
    match max_samples {
        Some(cap) if n > cap => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = sample_indices(&mut rng, n, cap).into_vec();
            keep.sort_unstable();
            keep.into_iter().map(row).collect()
        }
        _ => (0..n).map(row).collect(),
    }
}

/// Expectation-maximization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub tolerance: f64,
    pub variance_floor: f64,
    pub kmeans_iterations: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            variance_floor: 1e-6,
            kmeans_iterations: 10,
            seed: 0,
        }
    }
}

/// A fitted mixture: weights, means and per-dimension variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<Sample>,
    variances: Vec<Sample>,
}

/// Fit result: the model plus the log-likelihood after every iteration.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood of the training rows, one entry per EM
    /// iteration, evaluated under the parameters entering that iteration.
    pub log_likelihoods: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<Sample>, variances: Vec<Sample>) -> Self {
        assert_eq!(weights.len(), means.len());
        assert_eq!(weights.len(), variances.len());
        Self {
            weights,
            means,
            variances,
        }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Sample] {
        &self.means
    }

    pub fn variances(&self) -> &[Sample] {
        &self.variances
    }

    /// Per-component `log(w_a) + log N(x | mu_a, diag(var_a))`.
    fn log_joint(&self, x: &Sample) -> Vec<f64> {
        (0..self.components())
            .map(|a| {
                let mut quad = 0.0;
                let mut logdet = 0.0;
                for v in 0..SAMPLE_DIM {
                    let d = x[v] - self.means[a][v];
                    quad += d * d / self.variances[a][v];
                    logdet += self.variances[a][v].ln();
                }
                self.weights[a].ln() - 0.5 * (SAMPLE_DIM as f64 * LN_2PI + logdet + quad)
            })
            .collect()
    }

    /// `log p(x)` evaluated in log space for stability.
    pub fn log_density(&self, x: &Sample) -> f64 {
        log_sum_exp(&self.log_joint(x))
    }

    /// Component responsibilities for one sample; sums to 1.
    pub fn posteriors(&self, x: &Sample) -> Vec<f64> {
        let joint = self.log_joint(x);
        let lse = log_sum_exp(&joint);
        joint.iter().map(|&l| (l - lse).exp()).collect()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

fn squared_distance(a: &Sample, b: &Sample) -> f64 {
    let mut acc = 0.0;
    for v in 0..SAMPLE_DIM {
        let d = a[v] - b[v];
        acc += d * d;
    }
    acc
}

/// k-means++ seeding followed by a few Lloyd iterations.
fn kmeans_init(samples: &[Sample], k: usize, cfg: &EmConfig, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let n = samples.len();
    let mut centers: Vec<Sample> = Vec::with_capacity(k);
    centers.push(samples[rng.random_range(0..n)]);
    let mut dist: Vec<f64> = samples
        .iter()
        .map(|s| squared_distance(s, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = samples[pick];
        for (d, s) in dist.iter_mut().zip(samples) {
            *d = d.min(squared_distance(s, &c));
        }
        centers.push(c);
    }

    let mut assign = vec![0usize; n];
    for _ in 0..cfg.kmeans_iterations {
        for (i, s) in samples.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (a, c) in centers.iter().enumerate() {
                let d = squared_distance(s, c);
                if d < best_d {
                    best_d = d;
                    best = a;
                }
            }
            assign[i] = best;
        }
        let mut sums = vec![[0.0; SAMPLE_DIM]; k];
        let mut counts = vec![0usize; k];
        for (s, &a) in samples.iter().zip(&assign) {
            counts[a] += 1;
            for v in 0..SAMPLE_DIM {
                sums[a][v] += s[v];
            }
        }
        for a in 0..k {
            if counts[a] > 0 {
                for v in 0..SAMPLE_DIM {
                    centers[a][v] = sums[a][v] / counts[a] as f64;
                }
            }
        }
    }
    centers
}

/// Per-chunk E-step accumulators, merged in chunk order so the reduction
/// is deterministic regardless of thread count.
struct EStats {
    log_likelihood: f64,
    nk: Vec<f64>,
    sum: Vec<Sample>,
    sum_sq: Vec<Sample>,
}

impl EStats {
    fn zero(k: usize) -> Self {
        Self {
            log_likelihood: 0.0,
            nk: vec![0.0; k],
            sum: vec![[0.0; SAMPLE_DIM]; k],
            sum_sq: vec![[0.0; SAMPLE_DIM]; k],
        }
    }

    fn absorb(&mut self, other: &EStats) {
        self.log_likelihood += other.log_likelihood;
        for a in 0..self.nk.len() {
            self.nk[a] += other.nk[a];
            for v in 0..SAMPLE_DIM {
                self.sum[a][v] += other.sum[a][v];
                self.sum_sq[a][v] += other.sum_sq[a][v];
            }
        }
    }
}

const E_STEP_CHUNK: usize = 4096;

fn e_step(samples: &[Sample], model: &GmmModel) -> EStats {
    let k = model.components();
    let partials: Vec<EStats> = samples
        .par_chunks(E_STEP_CHUNK)
        .map(|chunk| {
            let mut stats = EStats::zero(k);
            for x in chunk {
                let joint = model.log_joint(x);
                let lse = log_sum_exp(&joint);
                stats.log_likelihood += lse;
                for a in 0..k {
                    let g = (joint[a] - lse).exp();
                    stats.nk[a] += g;
                    for v in 0..SAMPLE_DIM {
                        stats.sum[a][v] += g * x[v];
                        stats.sum_sq[a][v] += g * x[v] * x[v];
                    }
                }
            }
            stats
        })
        .collect();
    let mut total = EStats::zero(k);
    for p in &partials {
        total.absorb(p);
    }
    total
}

/// Fits a mixture of `components` diagonal Gaussians.
///
/// Deterministic given `(samples, components, cfg.seed)`. Returns an error
/// when there are fewer samples than components; all-identical samples
/// collapse onto floored variances without failing.
pub fn fit_gmm(samples: &[Sample], components: usize, cfg: &EmConfig) -> Result<GmmFit> {
    if components == 0 {
        return Err(Error::Config("component count must be >= 1".into()));
    }
    if samples.len() < components {
        return Err(Error::TooFewSamples {
            n: samples.len(),
            components,
        });
    }
    let n = samples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers = kmeans_init(samples, components, cfg, &mut rng);

    // Initial parameters from the k-means partition.
    let mut counts = vec![0usize; components];
    let mut sums = vec![[0.0; SAMPLE_DIM]; components];
    let mut sq = vec![[0.0; SAMPLE_DIM]; components];
    for s in samples {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (a, c) in centers.iter().enumerate() {
            let d = squared_distance(s, c);
            if d < best_d {
                best_d = d;
                best = a;
            }
        }
        counts[best] += 1;
        for v in 0..SAMPLE_DIM {
            sums[best][v] += s[v];
            sq[best][v] += s[v] * s[v];
        }
    }
    let mut global_var = [0.0; SAMPLE_DIM];
    {
        let mut mean = [0.0; SAMPLE_DIM];
        for s in samples {
            for v in 0..SAMPLE_DIM {
                mean[v] += s[v];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for s in samples {
            for v in 0..SAMPLE_DIM {
                let d = s[v] - mean[v];
                global_var[v] += d * d;
            }
        }
        for v in 0..SAMPLE_DIM {
            global_var[v] = (global_var[v] / n as f64).max(cfg.variance_floor);
        }
    }
    let mut weights = Vec::with_capacity(components);
    let mut means = Vec::with_capacity(components);
    let mut variances = Vec::with_capacity(components);
    for a in 0..components {
        weights.push((counts[a].max(1)) as f64);
        if counts[a] > 0 {
            let mut mu = [0.0; SAMPLE_DIM];
            let mut var = [0.0; SAMPLE_DIM];
            for v in 0..SAMPLE_DIM {
                mu[v] = sums[a][v] / counts[a] as f64;
                var[v] = (sq[a][v] / counts[a] as f64 - mu[v] * mu[v]).max(cfg.variance_floor);
            }
            means.push(mu);
            variances.push(var);
        } else {
            means.push(centers[a]);
            variances.push(global_var);
        }
    }
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);

    let mut model = GmmModel::new(weights, means, variances);
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..cfg.max_iterations {
        let stats = e_step(samples, &model);
        trace.push(stats.log_likelihood);

        let mut weights = Vec::with_capacity(components);
        let mut means = Vec::with_capacity(components);
        let mut variances = Vec::with_capacity(components);
        for a in 0..components {
            let nk = stats.nk[a].max(1e-10);
            weights.push(nk);
            let mut mu = [0.0; SAMPLE_DIM];
            let mut var = [0.0; SAMPLE_DIM];
            for v in 0..SAMPLE_DIM {
                mu[v] = stats.sum[a][v] / nk;
                var[v] = (stats.sum_sq[a][v] / nk - mu[v] * mu[v]).max(cfg.variance_floor);
            }
            means.push(mu);
            variances.push(var);
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
        model = GmmModel::new(weights, means, variances);

        let ll = stats.log_likelihood;
        if prev_ll.is_finite() {
            let rel = (ll - prev_ll).abs() / prev_ll.abs().max(1.0);
            if rel < cfg.tolerance {
                break;
            }
        }
        prev_ll = ll;
    }

    Ok(GmmFit {
        model,
        log_likelihoods: trace,
    })
}

/// Derives a per-stream seed from a base seed (splitmix64 step).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{extract_channel_planes, ChannelConfig};
    use crate::raster::RgbImage;
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RgbImage {
        RgbImage::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn sample_rows_read_off_planes() {
        let img = RgbImage::new(
            2,
            2,
            vec![[10, 200, 30], [0, 0, 0], [255, 255, 255], [100, 50, 25]],
        );
        let planes = extract_channel_planes(&img, &ChannelConfig { patch_radius: 0 });
        let rows = build_sample_set(&planes, None, 0);
        assert_eq!(rows.len(), 4);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row[0], planes.hue.values()[i]);
            assert_eq!(row[1], planes.saturation.values()[i]);
            assert_eq!(row[2], planes.dark.values()[i] / 255.0);
            assert_eq!(row[3], planes.bright.values()[i] / 255.0);
        }
    }

    #[test]
    fn constant_image_gives_identical_rows() {
        let img = RgbImage::from_fn(3, 3, |_, _| [40, 90, 160]);
        let planes = extract_channel_planes(&img, &ChannelConfig { patch_radius: 1 });
        let rows = build_sample_set(&planes, None, 0);
        assert!(rows.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn subsampling_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let img = random_image(&mut rng, 16, 16);
        let planes = extract_channel_planes(&img, &ChannelConfig { patch_radius: 1 });
        let a = build_sample_set(&planes, Some(64), 42);
        let b = build_sample_set(&planes, Some(64), 42);
        assert_eq!(a.len(), 64);
        assert_eq!(a, b);
        let c = build_sample_set(&planes, Some(64), 43);
        assert_ne!(a, c);
    }

    #[test]
    fn single_component_is_sample_mean_and_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let samples: Vec<Sample> = (0..500)
            .map(|_| {
                [
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                ]
            })
            .collect();
        let fit = fit_gmm(&samples, 1, &EmConfig::default()).unwrap();
        let model = &fit.model;
        assert_eq!(model.weights(), &[1.0]);
        let n = samples.len() as f64;
        for v in 0..SAMPLE_DIM {
            let mean: f64 = samples.iter().map(|s| s[v]).sum::<f64>() / n;
            let var: f64 = samples.iter().map(|s| (s[v] - mean).powi(2)).sum::<f64>() / n;
            assert!((model.means()[0][v] - mean).abs() < 1e-9);
            assert!((model.variances()[0][v] - var).abs() < 1e-9);
        }
    }

    #[test]
    fn recovers_two_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let centers = [[0.2, 0.2, 0.2, 0.2], [0.8, 0.8, 0.8, 0.8]];
        let mut samples = Vec::new();
        for i in 0..600 {
            let c = centers[i % 2];
            let mut s = [0.0; SAMPLE_DIM];
            for v in 0..SAMPLE_DIM {
                s[v] = c[v] + (rng.random::<f64>() - 0.5) * 0.1;
            }
            samples.push(s);
        }
        let fit = fit_gmm(&samples, 2, &EmConfig::default()).unwrap();
        let mut got: Vec<f64> = fit.model.means().iter().map(|m| m[0]).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((got[0] - 0.2).abs() < 0.05);
        assert!((got[1] - 0.8).abs() < 0.05);
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let samples: Vec<Sample> = (0..400)
            .map(|_| {
                [
                    rng.random::<f64>(),
                    rng.random::<f64>() * 0.5,
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                ]
            })
            .collect();
        let fit = fit_gmm(&samples, 4, &EmConfig::default()).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn degenerate_identical_samples_do_not_crash() {
        let samples = vec![[0.5, 0.5, 0.5, 0.5]; 100];
        let fit = fit_gmm(&samples, 3, &EmConfig::default()).unwrap();
        let model = &fit.model;
        let wsum: f64 = model.weights().iter().sum();
        assert!((wsum - 1.0).abs() < 1e-9);
        assert!(model.weights().iter().all(|&w| w > 0.0));
        for a in 0..model.components() {
            for v in 0..SAMPLE_DIM {
                assert!((model.means()[a][v] - 0.5).abs() < 1e-9);
                assert!(model.variances()[a][v] >= EmConfig::default().variance_floor);
            }
        }
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let samples = vec![[0.1, 0.2, 0.3, 0.4]; 3];
        assert!(matches!(
            fit_gmm(&samples, 5, &EmConfig::default()),
            Err(Error::TooFewSamples {
                n: 3,
                components: 5
            })
        ));
    }

    #[test]
    fn fitting_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let samples: Vec<Sample> = (0..300)
            .map(|_| {
                [
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                ]
            })
            .collect();
        let cfg = EmConfig {
            seed: 9,
            ..Default::default()
        };
        let a = fit_gmm(&samples, 3, &cfg).unwrap();
        let b = fit_gmm(&samples, 3, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihoods, b.log_likelihoods);
    }

    #[test]
    fn log_density_at_mean_of_unit_gaussian() {
        let model = GmmModel::new(vec![1.0], vec![[0.3, 0.4, 0.5, 0.6]], vec![[1.0; 4]]);
        let ld = model.log_density(&[0.3, 0.4, 0.5, 0.6]);
        assert!((ld - (-2.0 * LN_2PI)).abs() < 1e-12, "{ld}");
    }

    #[test]
    fn far_samples_stay_finite() {
        let model = GmmModel::new(
            vec![0.5, 0.5],
            vec![[0.0; 4], [1.0; 4]],
            vec![[1e-4; 4], [1e-4; 4]],
        );
        let ld = model.log_density(&[1e6, -1e6, 1e6, -1e6]);
        assert!(ld.is_finite());
        assert!(ld < -1e10);
    }

    #[test]
    fn log_density_matches_naive_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for _ in 0..50 {
            let k = rng.random_range(1..6);
            let mut weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.1).collect();
            let wsum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= wsum);
            let means: Vec<Sample> = (0..k)
                .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
                .collect();
            let variances: Vec<Sample> = (0..k)
                .map(|_| std::array::from_fn(|_| rng.random::<f64>() * 0.5 + 0.01))
                .collect();
            let model = GmmModel::new(weights.clone(), means.clone(), variances.clone());
            let x: Sample = std::array::from_fn(|_| rng.random::<f64>());
            // Direct evaluation of the mixture density.
            let mut p = 0.0;
            for a in 0..k {
                let mut quad = 0.0;
                let mut det = 1.0;
                for v in 0..SAMPLE_DIM {
                    quad += (x[v] - means[a][v]).powi(2) / variances[a][v];
                    det *= variances[a][v];
                }
                p += weights[a] * (-0.5 * quad).exp()
                    / ((2.0 * std::f64::consts::PI).powi(2) * det.sqrt());
            }
            assert!((model.log_density(&x) - p.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn posterior_properties() {
        let model = GmmModel::new(vec![1.0], vec![[0.5; 4]], vec![[0.1; 4]]);
        assert_eq!(model.posteriors(&[0.1, 0.9, 0.5, 0.5]), vec![1.0]);

        // Equidistant sample between two equal components.
        let model = GmmModel::new(
            vec![0.5, 0.5],
            vec![[0.0; 4], [1.0; 4]],
            vec![[0.2; 4], [0.2; 4]],
        );
        let g = model.posteriors(&[0.5; 4]);
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert!((g[1] - 0.5).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..100 {
            let model = GmmModel::new(
                vec![0.2, 0.3, 0.5],
                vec![
                    std::array::from_fn(|_| rng.random()),
                    std::array::from_fn(|_| rng.random()),
                    std::array::from_fn(|_| rng.random()),
                ],
                vec![[0.05; 4], [0.1; 4], [0.2; 4]],
            );
            let x: Sample = std::array::from_fn(|_| rng.random());
            let sum: f64 = model.posteriors(&x).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
