//! Versioned on-disk detector models.
//!
//! Models serialize to JSON. The shortest-round-trip float encoding keeps
//! every parameter lossless, so a saved model reproduces its in-memory
//! predictions bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelConfig;
use crate::error::{Error, Result};
use crate::fisher::FisherConfig;
use crate::gmm::{EmConfig, GmmModel};
use crate::hist::{BinCounts, ClassDistributions, DistinctiveBins, PoolingMode};
use crate::svm::{SvmConfig, SvmModel};

pub const MODEL_VERSION: &str = "1";

/// Which detector a model implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hist,
    Fe,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hist" => Ok(Method::Hist),
            "fe" => Ok(Method::Fe),
            other => Err(format!("unknown method `{other}` (expected hist|fe)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Hist => "hist",
            Method::Fe => "fe",
        })
    }
}

/// Trained state specific to the histogram detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistSection {
    pub bins: BinCounts,
    pub distinctive: DistinctiveBins,
    pub distributions: ClassDistributions,
}

/// Trained state specific to the feature-encoding detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeSection {
    pub gmm: GmmModel,
    /// Per-image pixel sample cap applied at training and detection time.
    pub sample_cap: usize,
    /// Seed of the per-image pixel subsampler.
    pub sampling_seed: u64,
    /// Divisor applied to the dark/bright channels before modeling.
    pub value_scale: f64,
    pub fisher: FisherConfig,
}

/// Reproducibility record: seeds and configs the model was built with,
/// plus the training image paths (used to reject train/test overlap
/// during evaluation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub pooling: PoolingMode,
    pub em: Option<EmConfig>,
    pub svm: SvmConfig,
    pub training_paths: Vec<String>,
}

/// A complete, self-contained detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcidModel {
    pub version: String,
    pub method: Method,
    pub channel: ChannelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hist: Option<HistSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fe: Option<FeSection>,
    pub svm: SvmModel,
    pub provenance: Provenance,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: String,
}

impl FcidModel {
    /// The method tag must match the sections present.
    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Hist if self.hist.is_none() => Err(Error::MethodMismatch(
                "method is hist but the hist section is missing".into(),
            )),
            Method::Fe if self.fe.is_none() => Err(Error::MethodMismatch(
                "method is fe but the fe section is missing".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let probe: VersionProbe = serde_json::from_str(&text)?;
        if probe.version != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                found: probe.version,
                expected: MODEL_VERSION.to_string(),
            });
        }
        let model: FcidModel = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }
}
