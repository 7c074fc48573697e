//! End-to-end flows over dataset manifests: training both detectors,
//! batch detection, protocol evaluation, grid search and cross-validation.
//!
//! Per-image work (decoding, channel extraction, histogramming, encoding)
//! runs in a work pool; global reductions are deterministic, so a fixed
//! seed yields identical models and predictions regardless of thread
//! count. Output order always follows input order.

use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{extract_channel_planes, ChannelConfig, ChannelPlanes};
use crate::error::{Error, Result};
use crate::eval::{
    average_thresholds, evaluate, k_fold_split_grouped, threshold_sweep, EvalReport,
    GridSearchResult,
};
use crate::fisher::encode_fisher;
use crate::gmm::{
    build_sample_set, derive_seed, fit_gmm, EmConfig, GmmModel, SampleSet, VALUE_SCALE,
};
use crate::hist::{
    distinctive_bins, hist_feature, image_counts, pool_class, BinCounts, ClassDistributions,
    DistinctiveBins, PoolingMode,
};
use crate::manifest::{assert_disjoint, DatasetManifest};
use crate::model::{FcidModel, FeSection, HistSection, Method, Provenance, MODEL_VERSION};
use crate::raster::load_image;
use crate::svm::{train_svm, Label, LabeledFeatures, SvmConfig};

// Seed streams; every random choice in the pipeline derives from the one
// configured seed.
const STREAM_SAMPLING: u64 = 1;
const STREAM_EM: u64 = 2;
const STREAM_CALIBRATION: u64 = 3;
const STREAM_FOLDS: u64 = 4;
const STREAM_GRID_SPLIT: u64 = 5;

/// Every knob of both detectors. Defaults reproduce the tuned settings:
/// 200 histogram bins, patch radius 7, 8 mixture components with a
/// 2048-pixel per-image cap, SVM (c, g) = (32, 1/2) for hist and (2, 1/2)
/// for fe, thresholds 0.455 and 0.492.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub channel: ChannelConfig,
    pub bins: BinCounts,
    pub pooling: PoolingMode,
    pub components: usize,
    pub sample_cap: usize,
    /// EM settings; its `seed` field is ignored here, the pipeline derives
    /// one from the master `seed` below.
    pub em: EmConfig,
    pub hist_svm: SvmConfig,
    pub fe_svm: SvmConfig,
    pub hist_threshold: f64,
    pub fe_threshold: f64,
    pub fisher: crate::fisher::FisherConfig,
    /// Master seed; every randomized stage derives its stream from it.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            bins: BinCounts::default(),
            pooling: PoolingMode::default(),
            components: 8,
            sample_cap: 2048,
            em: EmConfig::default(),
            hist_svm: SvmConfig::hist_default(),
            fe_svm: SvmConfig::fe_default(),
            hist_threshold: 0.455,
            fe_threshold: 0.492,
            fisher: crate::fisher::FisherConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Config("components must be >= 1".into()));
        }
        if self.sample_cap == 0 {
            return Err(Error::Config("sample_cap must be >= 1".into()));
        }
        for (name, t) in [
            ("hist_threshold", self.hist_threshold),
            ("fe_threshold", self.fe_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {t}")));
            }
        }
        Ok(())
    }

    fn svm_for(&self, method: Method) -> &SvmConfig {
        match method {
            Method::Hist => &self.hist_svm,
            Method::Fe => &self.fe_svm,
        }
    }
}

/// A decoded, channel-extracted image ready for any detector stage.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub path: PathBuf,
    pub label: Label,
    pub grayscale: bool,
    pub planes: ChannelPlanes,
}

/// Decodes and extracts channels for every manifest entry, in parallel,
/// preserving manifest order.
pub fn prepare_images(
    manifest: &DatasetManifest,
    channel: &ChannelConfig,
) -> Result<Vec<PreparedImage>> {
    manifest
        .entries()
        .par_iter()
        .map(|entry| {
            let loaded = load_image(&entry.path)?;
            Ok(PreparedImage {
                path: entry.path.clone(),
                label: entry.label,
                grayscale: loaded.grayscale,
                planes: extract_channel_planes(&loaded.image, channel),
            })
        })
        .collect()
}

fn provenance(images: &[&PreparedImage], cfg: &PipelineConfig, method: Method) -> Provenance {
    Provenance {
        seed: cfg.seed,
        pooling: cfg.pooling,
        em: match method {
            Method::Fe => Some(EmConfig {
                seed: derive_seed(cfg.seed, STREAM_EM),
                ..cfg.em
            }),
            Method::Hist => None,
        },
        svm: *cfg.svm_for(method),
        training_paths: images
            .iter()
            .map(|i| i.path.display().to_string())
            .collect(),
    }
}

/// Class histograms and distinctive bins from training images.
fn hist_statistics(
    images: &[&PreparedImage],
    cfg: &PipelineConfig,
) -> Result<(ClassDistributions, DistinctiveBins)> {
    let counts = images
        .par_iter()
        .map(|img| image_counts(&img.planes, &cfg.bins))
        .collect::<Result<Vec<_>>>()?;
    let mut natural = Vec::new();
    let mut fake = Vec::new();
    for (c, img) in counts.into_iter().zip(images) {
        match img.label {
            Label::Natural => natural.push(c),
            Label::Fake => fake.push(c),
        }
    }
    if natural.is_empty() {
        return Err(Error::EmptyClass("natural"));
    }
    if fake.is_empty() {
        return Err(Error::EmptyClass("fake"));
    }
    let dists = ClassDistributions {
        natural: pool_class(&natural, cfg.pooling)?,
        fake: pool_class(&fake, cfg.pooling)?,
    };
    let bins = distinctive_bins(&dists)?;
    Ok((dists, bins))
}

fn hist_features(
    images: &[&PreparedImage],
    bins: &BinCounts,
    distinctive: &DistinctiveBins,
) -> Result<LabeledFeatures> {
    let rows = images
        .par_iter()
        .map(|img| hist_feature(&img.planes, bins, distinctive).map(|f| f.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut data = LabeledFeatures::default();
    for (row, img) in rows.into_iter().zip(images) {
        data.push(row, img.label);
    }
    Ok(data)
}

/// Per-image capped sample subsets, concatenated with offsets retained.
fn build_pooled_samples(images: &[&PreparedImage], cap: usize, seed: u64) -> SampleSet {
    let per_image: Vec<_> = images
        .par_iter()
        .map(|img| build_sample_set(&img.planes, Some(cap), seed))
        .collect();
    let mut set = SampleSet::new();
    for rows in per_image {
        set.push_image(rows);
    }
    set
}

fn fisher_features(
    gmm: &GmmModel,
    set: &SampleSet,
    images: &[&PreparedImage],
    fisher: &crate::fisher::FisherConfig,
) -> Result<LabeledFeatures> {
    let rows = (0..set.image_count())
        .into_par_iter()
        .map(|i| encode_fisher(gmm, set.image_rows(i), fisher))
        .collect::<Result<Vec<_>>>()?;
    let mut data = LabeledFeatures::default();
    for (row, img) in rows.into_iter().zip(images) {
        data.push(row, img.label);
    }
    Ok(data)
}

/// Trains the histogram detector on already-prepared images.
pub fn train_hist_prepared(images: &[&PreparedImage], cfg: &PipelineConfig) -> Result<FcidModel> {
    cfg.validate()?;
    let (distributions, distinctive) =
        hist_statistics(images, cfg).map_err(Error::stage("class-distributions"))?;
    let data = hist_features(images, &cfg.bins, &distinctive)
        .map_err(Error::stage("feature-construction"))?;
    let svm = train_svm(
        &data,
        &cfg.hist_svm,
        derive_seed(cfg.seed, STREAM_CALIBRATION),
    )
    .map_err(Error::stage("svm-training"))?
    .with_threshold(cfg.hist_threshold);
    Ok(FcidModel {
        version: MODEL_VERSION.to_string(),
        method: Method::Hist,
        channel: cfg.channel,
        hist: Some(HistSection {
            bins: cfg.bins,
            distinctive,
            distributions,
        }),
        fe: None,
        svm,
        provenance: provenance(images, cfg, Method::Hist),
    })
}

/// Trains the feature-encoding detector on already-prepared images.
pub fn train_fe_prepared(images: &[&PreparedImage], cfg: &PipelineConfig) -> Result<FcidModel> {
    cfg.validate()?;
    let sampling_seed = derive_seed(cfg.seed, STREAM_SAMPLING);
    let set = build_pooled_samples(images, cfg.sample_cap, sampling_seed);
    let em = EmConfig {
        seed: derive_seed(cfg.seed, STREAM_EM),
        ..cfg.em
    };
    let fit = fit_gmm(set.rows(), cfg.components, &em).map_err(Error::stage("gmm-fitting"))?;
    let data = fisher_features(&fit.model, &set, images, &cfg.fisher)
        .map_err(Error::stage("fisher-encoding"))?;
    let svm = train_svm(
        &data,
        &cfg.fe_svm,
        derive_seed(cfg.seed, STREAM_CALIBRATION),
    )
    .map_err(Error::stage("svm-training"))?
    .with_threshold(cfg.fe_threshold);
    Ok(FcidModel {
        version: MODEL_VERSION.to_string(),
        method: Method::Fe,
        channel: cfg.channel,
        hist: None,
        fe: Some(FeSection {
            gmm: fit.model,
            sample_cap: cfg.sample_cap,
            sampling_seed,
            value_scale: VALUE_SCALE,
            fisher: cfg.fisher,
        }),
        svm,
        provenance: provenance(images, cfg, Method::Fe),
    })
}

/// Trains either detector from a manifest.
pub fn train(
    manifest: &DatasetManifest,
    method: Method,
    cfg: &PipelineConfig,
) -> Result<FcidModel> {
    let images =
        prepare_images(manifest, &cfg.channel).map_err(Error::stage("image-preparation"))?;
    let refs: Vec<&PreparedImage> = images.iter().collect();
    match method {
        Method::Hist => train_hist_prepared(&refs, cfg),
        Method::Fe => train_fe_prepared(&refs, cfg),
    }
}

/// One detection outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub label: Label,
    pub probability: f64,
}

/// Per-image detection result; failures are carried per image so a batch
/// survives bad files.
#[derive(Debug, Clone)]
pub struct DetectionRecord {
    pub path: PathBuf,
    pub grayscale: bool,
    pub outcome: std::result::Result<Detection, String>,
}

/// Runs one prepared image through the model's feature path and SVM.
pub fn detect_planes(model: &FcidModel, planes: &ChannelPlanes) -> Result<Detection> {
    let feature: Vec<f64> = match model.method {
        Method::Hist => {
            let section = model
                .hist
                .as_ref()
                .ok_or_else(|| Error::MethodMismatch("hist section missing".into()))?;
            hist_feature(planes, &section.bins, &section.distinctive)?.to_vec()
        }
        Method::Fe => {
            let section = model
                .fe
                .as_ref()
                .ok_or_else(|| Error::MethodMismatch("fe section missing".into()))?;
            let rows = build_sample_set(planes, Some(section.sample_cap), section.sampling_seed);
            encode_fisher(&section.gmm, &rows, &section.fisher)?
        }
    };
    let probability = model.svm.predict_probability(&feature)?;
    let label = if probability >= model.svm.threshold {
        Label::Fake
    } else {
        Label::Natural
    };
    Ok(Detection { label, probability })
}

/// Batch detection over image files. Output order matches input order;
/// unreadable images produce per-image error entries.
pub fn detect(model: &FcidModel, paths: &[PathBuf]) -> Vec<DetectionRecord> {
    paths
        .par_iter()
        .map(|path| match load_image(path) {
            Err(e) => DetectionRecord {
                path: path.clone(),
                grayscale: false,
                outcome: Err(e.to_string()),
            },
            Ok(loaded) => {
                let planes = extract_channel_planes(&loaded.image, &model.channel);
                DetectionRecord {
                    path: path.clone(),
                    grayscale: loaded.grayscale,
                    outcome: detect_planes(model, &planes).map_err(|e| e.to_string()),
                }
            }
        })
        .collect()
}

fn scores_for(model: &FcidModel, images: &[&PreparedImage]) -> Result<Vec<f64>> {
    images
        .par_iter()
        .map(|img| detect_planes(model, &img.planes).map(|d| d.probability))
        .collect()
}

/// Evaluation outcome: the fixed-threshold report plus the HTER curve over
/// the 0.00..=1.00 threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub report: EvalReport,
    pub sweep: crate::eval::ThresholdSweep,
}

/// Protocol evaluation of a trained model on a labeled manifest. Errors if
/// the manifest shares any image with the model's training set.
pub fn evaluate_model(model: &FcidModel, manifest: &DatasetManifest) -> Result<ModelEvaluation> {
    let trained_on: HashSet<&str> = model
        .provenance
        .training_paths
        .iter()
        .map(String::as_str)
        .collect();
    let shared: Vec<String> = manifest
        .entries()
        .iter()
        .map(|e| e.path.display().to_string())
        .filter(|p| trained_on.contains(p.as_str()))
        .collect();
    if let Some(first) = shared.first() {
        return Err(Error::SplitOverlap {
            count: shared.len(),
            first: first.clone(),
        });
    }

    let images =
        prepare_images(manifest, &model.channel).map_err(Error::stage("image-preparation"))?;
    let refs: Vec<&PreparedImage> = images.iter().collect();
    let scores = scores_for(model, &refs)?;
    let labels = manifest.labels();
    Ok(ModelEvaluation {
        report: evaluate(&scores, &labels, model.svm.threshold)?,
        sweep: threshold_sweep(&scores, &labels)?,
    })
}

/// One cross-validation fold's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub hter: f64,
    pub auc: f64,
    pub best_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub folds: Vec<FoldReport>,
    pub mean_hter: f64,
    pub mean_auc: f64,
    /// Mean of the per-fold optimal thresholds.
    pub averaged_threshold: f64,
}

/// k-fold cross-validation with pair-aware folds: each fold is held out
/// once while the remainder trains a fresh model; per-fold HTER/AUC are
/// computed at the configured threshold and a threshold sweep picks each
/// fold's optimum.
pub fn cross_validate(
    manifest: &DatasetManifest,
    method: Method,
    cfg: &PipelineConfig,
    k: usize,
) -> Result<CvReport> {
    cfg.validate()?;
    let images =
        prepare_images(manifest, &cfg.channel).map_err(Error::stage("image-preparation"))?;
    let labels = manifest.labels();
    let folds = k_fold_split_grouped(
        &manifest.pair_groups(),
        k,
        derive_seed(cfg.seed, STREAM_FOLDS),
    )?;

    let reports: Vec<FoldReport> = folds
        .par_iter()
        .enumerate()
        .map(|(fold_index, fold)| -> Result<FoldReport> {
            let held: HashSet<usize> = fold.iter().copied().collect();
            let train_imgs: Vec<&PreparedImage> = images
                .iter()
                .enumerate()
                .filter(|(i, _)| !held.contains(i))
                .map(|(_, img)| img)
                .collect();
            let mut test_idx: Vec<usize> = fold.clone();
            test_idx.sort_unstable();
            let test_imgs: Vec<&PreparedImage> = test_idx.iter().map(|&i| &images[i]).collect();
            let test_labels: Vec<Label> = test_idx.iter().map(|&i| labels[i]).collect();

            let model = match method {
                Method::Hist => train_hist_prepared(&train_imgs, cfg)?,
                Method::Fe => train_fe_prepared(&train_imgs, cfg)?,
            };
            let scores = scores_for(&model, &test_imgs)?;
            let report = evaluate(&scores, &test_labels, model.svm.threshold)?;
            let sweep = threshold_sweep(&scores, &test_labels)?;
            Ok(FoldReport {
                fold: fold_index,
                hter: report.hter,
                auc: report.auc,
                best_threshold: sweep.best_threshold,
            })
        })
        .collect::<Result<_>>()?;

    let n = reports.len() as f64;
    let mean_hter = reports.iter().map(|r| r.hter).sum::<f64>() / n;
    let mean_auc = reports.iter().map(|r| r.auc).sum::<f64>() / n;
    let optima: Vec<f64> = reports.iter().map(|r| r.best_threshold).collect();
    Ok(CvReport {
        method,
        folds: reports,
        mean_hter,
        mean_auc,
        averaged_threshold: average_thresholds(&optima),
    })
}

/// Cost/gamma grid search. Detector statistics (distinctive bins or the
/// mixture) are learned on the training side only; when no validation
/// manifest is given, a seeded pair-aware 50/50 split provides one.
pub fn grid_search_manifest(
    manifest: &DatasetManifest,
    validation: Option<&DatasetManifest>,
    method: Method,
    cfg: &PipelineConfig,
    c_grid: &[f64],
    g_grid: &[f64],
) -> Result<GridSearchResult> {
    cfg.validate()?;
    let (train_manifest, val_manifest) = match validation {
        Some(v) => {
            assert_disjoint(manifest, v)?;
            (manifest.clone(), v.clone())
        }
        None => manifest.split_pairs(derive_seed(cfg.seed, STREAM_GRID_SPLIT)),
    };
    let train_images =
        prepare_images(&train_manifest, &cfg.channel).map_err(Error::stage("image-preparation"))?;
    let val_images =
        prepare_images(&val_manifest, &cfg.channel).map_err(Error::stage("image-preparation"))?;
    let train_refs: Vec<&PreparedImage> = train_images.iter().collect();
    let val_refs: Vec<&PreparedImage> = val_images.iter().collect();

    let (train_feats, val_feats) = match method {
        Method::Hist => {
            let (_, distinctive) =
                hist_statistics(&train_refs, cfg).map_err(Error::stage("class-distributions"))?;
            (
                hist_features(&train_refs, &cfg.bins, &distinctive)?,
                hist_features(&val_refs, &cfg.bins, &distinctive)?,
            )
        }
        Method::Fe => {
            let sampling_seed = derive_seed(cfg.seed, STREAM_SAMPLING);
            let train_set = build_pooled_samples(&train_refs, cfg.sample_cap, sampling_seed);
            let val_set = build_pooled_samples(&val_refs, cfg.sample_cap, sampling_seed);
            let em = EmConfig {
                seed: derive_seed(cfg.seed, STREAM_EM),
                ..cfg.em
            };
            let fit = fit_gmm(train_set.rows(), cfg.components, &em)
                .map_err(Error::stage("gmm-fitting"))?;
            (
                fisher_features(&fit.model, &train_set, &train_refs, &cfg.fisher)?,
                fisher_features(&fit.model, &val_set, &val_refs, &cfg.fisher)?,
            )
        }
    };

    crate::eval::grid_search(
        &train_feats,
        Some(&val_feats),
        c_grid,
        g_grid,
        cfg.svm_for(method),
        derive_seed(cfg.seed, STREAM_CALIBRATION),
    )
}

/// Writes the class-distribution CSV (the histogram-dump export) for a
/// labeled manifest.
pub fn histdump<W: Write>(manifest: &DatasetManifest, cfg: &PipelineConfig, out: W) -> Result<()> {
    cfg.validate()?;
    let images =
        prepare_images(manifest, &cfg.channel).map_err(Error::stage("image-preparation"))?;
    let refs: Vec<&PreparedImage> = images.iter().collect();
    let (dists, _) = hist_statistics(&refs, cfg).map_err(Error::stage("class-distributions"))?;
    crate::hist::write_histogram_csv(&dists, out)
}
