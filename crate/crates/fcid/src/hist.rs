//! Normalized channel histograms, class-level distributions and the
//! 8-dimensional histogram detection feature.
//!
//! Per channel the feature carries two components: the image's histogram
//! mass at the class-level most distinctive bin, and the total variation
//! of the image's histogram.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelPlanes;
use crate::error::{Error, Result};
use crate::raster::Plane;

/// Which analysis channel a histogram was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Hue,
    Saturation,
    Dark,
    Bright,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 4] = [
        ChannelKind::Hue,
        ChannelKind::Saturation,
        ChannelKind::Dark,
        ChannelKind::Bright,
    ];

    /// Short code used in CSV exports.
    pub fn code(self) -> &'static str {
        match self {
            ChannelKind::Hue => "h",
            ChannelKind::Saturation => "s",
            ChannelKind::Dark => "dc",
            ChannelKind::Bright => "bc",
        }
    }
}

/// Histogram bin counts per channel. All four default to 200 bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCounts {
    pub hue: usize,
    pub saturation: usize,
    pub dark: usize,
    pub bright: usize,
}

impl BinCounts {
    pub fn uniform(k: usize) -> Self {
        Self {
            hue: k,
            saturation: k,
            dark: k,
            bright: k,
        }
    }

    pub fn get(&self, channel: ChannelKind) -> usize {
        match channel {
            ChannelKind::Hue => self.hue,
            ChannelKind::Saturation => self.saturation,
            ChannelKind::Dark => self.dark,
            ChannelKind::Bright => self.bright,
        }
    }
}

impl Default for BinCounts {
    fn default() -> Self {
        Self::uniform(200)
    }
}

/// A normalized histogram: non-negative bins summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    channel: ChannelKind,
    range: (f64, f64),
    bins: Vec<f64>,
}

impl Histogram {
    pub fn from_bins(channel: ChannelKind, range: (f64, f64), bins: Vec<f64>) -> Self {
        Self {
            channel,
            range,
            bins,
        }
    }

    pub fn channel(&self) -> ChannelKind {
        self.channel
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Center value of bin `i` in channel units.
    pub fn bin_center(&self, i: usize) -> f64 {
        let (lo, hi) = self.range;
        lo + (i as f64 + 0.5) * (hi - lo) / self.bins.len() as f64
    }
}

fn bin_index(v: f64, range: (f64, f64), k: usize) -> usize {
    let (lo, hi) = range;
    let idx = ((v - lo) / (hi - lo) * k as f64).floor();
    (idx.max(0.0) as usize).min(k - 1)
}

/// Raw bin counts of one plane.
fn plane_counts(plane: &Plane, k: usize) -> Result<Vec<u64>> {
    if k < 2 {
        return Err(Error::BadBinCount(k));
    }
    if plane.is_empty() {
        return Err(Error::EmptyPlane);
    }
    let mut counts = vec![0u64; k];
    for &v in plane.values() {
        counts[bin_index(v, plane.range(), k)] += 1;
    }
    Ok(counts)
}

fn normalize_counts(channel: ChannelKind, range: (f64, f64), counts: &[u64]) -> Histogram {
    let total: u64 = counts.iter().sum();
    let bins = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Histogram {
        channel,
        range,
        bins,
    }
}

/// Normalized histogram of a plane over its declared range. The top of the
/// range falls in the last bin.
pub fn normalized_histogram(plane: &Plane, channel: ChannelKind, k: usize) -> Result<Histogram> {
    let counts = plane_counts(plane, k)?;
    Ok(normalize_counts(channel, plane.range(), &counts))
}

/// The four per-channel histograms of one image or one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelHistograms {
    pub hue: Histogram,
    pub saturation: Histogram,
    pub dark: Histogram,
    pub bright: Histogram,
}

impl ChannelHistograms {
    pub fn get(&self, channel: ChannelKind) -> &Histogram {
        match channel {
            ChannelKind::Hue => &self.hue,
            ChannelKind::Saturation => &self.saturation,
            ChannelKind::Dark => &self.dark,
            ChannelKind::Bright => &self.bright,
        }
    }
}

/// Per-image histograms at the configured bin counts.
pub fn image_histograms(planes: &ChannelPlanes, bins: &BinCounts) -> Result<ChannelHistograms> {
    Ok(ChannelHistograms {
        hue: normalized_histogram(&planes.hue, ChannelKind::Hue, bins.hue)?,
        saturation: normalized_histogram(
            &planes.saturation,
            ChannelKind::Saturation,
            bins.saturation,
        )?,
        dark: normalized_histogram(&planes.dark, ChannelKind::Dark, bins.dark)?,
        bright: normalized_histogram(&planes.bright, ChannelKind::Bright, bins.bright)?,
    })
}

/// Per-image raw bin counts, the additive form used when pooling a class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCounts {
    pub hue: Vec<u64>,
    pub saturation: Vec<u64>,
    pub dark: Vec<u64>,
    pub bright: Vec<u64>,
}

impl ImageCounts {
    pub fn get(&self, channel: ChannelKind) -> &[u64] {
        match channel {
            ChannelKind::Hue => &self.hue,
            ChannelKind::Saturation => &self.saturation,
            ChannelKind::Dark => &self.dark,
            ChannelKind::Bright => &self.bright,
        }
    }
}

pub fn image_counts(planes: &ChannelPlanes, bins: &BinCounts) -> Result<ImageCounts> {
    Ok(ImageCounts {
        hue: plane_counts(&planes.hue, bins.hue)?,
        saturation: plane_counts(&planes.saturation, bins.saturation)?,
        dark: plane_counts(&planes.dark, bins.dark)?,
        bright: plane_counts(&planes.bright, bins.bright)?,
    })
}

/// How a class-level distribution is formed from its images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMode {
    /// Pool all pixels of the class, then normalize once.
    #[default]
    PixelPool,
    /// Normalize per image, then average the histograms with equal weight.
    ImageAverage,
}

fn channel_range(channel: ChannelKind) -> (f64, f64) {
    match channel {
        ChannelKind::Hue | ChannelKind::Saturation => (0.0, 1.0),
        ChannelKind::Dark | ChannelKind::Bright => (0.0, 255.0),
    }
}

/// Reduces per-image counts of one class into its four distributions.
/// Summation runs in input order, so results are reproducible.
pub fn pool_class(images: &[ImageCounts], mode: PoolingMode) -> Result<ChannelHistograms> {
    let first = images.first().ok_or(Error::EmptyClass("empty pool"))?;
    let mut out = Vec::with_capacity(4);
    for channel in ChannelKind::ALL {
        let k = first.get(channel).len();
        let range = channel_range(channel);
        let hist = match mode {
            PoolingMode::PixelPool => {
                let mut acc = vec![0u64; k];
                for img in images {
                    let counts = img.get(channel);
                    if counts.len() != k {
                        return Err(Error::BinCountMismatch {
                            left: k,
                            right: counts.len(),
                        });
                    }
                    for (a, &c) in acc.iter_mut().zip(counts) {
                        *a += c;
                    }
                }
                normalize_counts(channel, range, &acc)
            }
            PoolingMode::ImageAverage => {
                let mut acc = vec![0.0f64; k];
                for img in images {
                    let counts = img.get(channel);
                    if counts.len() != k {
                        return Err(Error::BinCountMismatch {
                            left: k,
                            right: counts.len(),
                        });
                    }
                    let total: u64 = counts.iter().sum();
                    for (a, &c) in acc.iter_mut().zip(counts) {
                        *a += c as f64 / total as f64;
                    }
                }
                let n = images.len() as f64;
                acc.iter_mut().for_each(|a| *a /= n);
                Histogram {
                    channel,
                    range,
                    bins: acc,
                }
            }
        };
        out.push(hist);
    }
    let mut it = out.into_iter();
    Ok(ChannelHistograms {
        hue: it.next().unwrap(),
        saturation: it.next().unwrap(),
        dark: it.next().unwrap(),
        bright: it.next().unwrap(),
    })
}

/// Class-level natural and fake channel distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistributions {
    pub natural: ChannelHistograms,
    pub fake: ChannelHistograms,
}

/// Builds the class distributions from training images of both classes.
pub fn class_distributions(
    natural: &[ChannelPlanes],
    fake: &[ChannelPlanes],
    bins: &BinCounts,
    mode: PoolingMode,
) -> Result<ClassDistributions> {
    if natural.is_empty() {
        return Err(Error::EmptyClass("natural"));
    }
    if fake.is_empty() {
        return Err(Error::EmptyClass("fake"));
    }
    let nat: Vec<ImageCounts> = natural
        .iter()
        .map(|p| image_counts(p, bins))
        .collect::<Result<_>>()?;
    let fak: Vec<ImageCounts> = fake
        .iter()
        .map(|p| image_counts(p, bins))
        .collect::<Result<_>>()?;
    Ok(ClassDistributions {
        natural: pool_class(&nat, mode)?,
        fake: pool_class(&fak, mode)?,
    })
}

/// Index of the bin with the largest absolute mass difference between the
/// two distributions. Ties resolve to the lowest index.
pub fn most_distinctive_bin(dist_n: &Histogram, dist_f: &Histogram) -> Result<usize> {
    if dist_n.len() != dist_f.len() {
        return Err(Error::BinCountMismatch {
            left: dist_n.len(),
            right: dist_f.len(),
        });
    }
    if dist_n.range != dist_f.range {
        return Err(Error::RangeMismatch);
    }
    let mut best = 0usize;
    let mut best_gap = f64::NEG_INFINITY;
    for (i, (n, f)) in dist_n.bins.iter().zip(&dist_f.bins).enumerate() {
        let gap = (n - f).abs();
        if gap > best_gap {
            best_gap = gap;
            best = i;
        }
    }
    Ok(best)
}

/// The most distinctive bin per channel, learned at training time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistinctiveBins {
    pub hue: usize,
    pub saturation: usize,
    pub dark: usize,
    pub bright: usize,
}

impl DistinctiveBins {
    pub fn get(&self, channel: ChannelKind) -> usize {
        match channel {
            ChannelKind::Hue => self.hue,
            ChannelKind::Saturation => self.saturation,
            ChannelKind::Dark => self.dark,
            ChannelKind::Bright => self.bright,
        }
    }
}

/// Most distinctive bin of every channel.
pub fn distinctive_bins(dists: &ClassDistributions) -> Result<DistinctiveBins> {
    Ok(DistinctiveBins {
        hue: most_distinctive_bin(&dists.natural.hue, &dists.fake.hue)?,
        saturation: most_distinctive_bin(&dists.natural.saturation, &dists.fake.saturation)?,
        dark: most_distinctive_bin(&dists.natural.dark, &dists.fake.dark)?,
        bright: most_distinctive_bin(&dists.natural.bright, &dists.fake.bright)?,
    })
}

/// Sum of absolute first differences across bins. Zero iff the histogram
/// is constant; at most 2 for a normalized histogram.
pub fn total_variation(hist: &Histogram) -> f64 {
    hist.bins.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Length of the histogram detection feature.
pub const HIST_FEATURE_DIM: usize = 8;

/// The 8-dimensional detection feature of one image, ordered
/// `[h(1), h(2), s(1), s(2), dc(1), dc(2), bc(1), bc(2)]` where `(1)` is
/// the mass at the distinctive bin and `(2)` the total variation.
pub fn hist_feature(
    planes: &ChannelPlanes,
    bins: &BinCounts,
    distinctive: &DistinctiveBins,
) -> Result<[f64; HIST_FEATURE_DIM]> {
    let hists = image_histograms(planes, bins)?;
    feature_from_histograms(&hists, bins, distinctive)
}

/// Same as [`hist_feature`] but starting from precomputed histograms.
pub fn feature_from_histograms(
    hists: &ChannelHistograms,
    bins: &BinCounts,
    distinctive: &DistinctiveBins,
) -> Result<[f64; HIST_FEATURE_DIM]> {
    let mut out = [0.0; HIST_FEATURE_DIM];
    for (slot, channel) in ChannelKind::ALL.into_iter().enumerate() {
        let hist = hists.get(channel);
        let index = distinctive.get(channel);
        if index >= bins.get(channel) || hist.len() != bins.get(channel) {
            return Err(Error::BadBinIndex {
                index,
                bins: bins.get(channel),
            });
        }
        out[2 * slot] = hist.bins[index];
        out[2 * slot + 1] = total_variation(hist);
    }
    Ok(out)
}

/// Writes the class distributions as CSV with columns
/// `channel,bin_index,bin_center,natural_mass,fake_mass,abs_diff`.
pub fn write_histogram_csv<W: Write>(dists: &ClassDistributions, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "channel",
        "bin_index",
        "bin_center",
        "natural_mass",
        "fake_mass",
        "abs_diff",
    ])?;
    for channel in ChannelKind::ALL {
        let n = dists.natural.get(channel);
        let f = dists.fake.get(channel);
        for i in 0..n.len() {
            w.write_record([
                channel.code().to_string(),
                i.to_string(),
                format!("{}", n.bin_center(i)),
                format!("{}", n.bins[i]),
                format!("{}", f.bins[i]),
                format!("{}", (n.bins[i] - f.bins[i]).abs()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
