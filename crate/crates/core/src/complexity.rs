//! Dataset difficulty measures built on per-image Shannon entropy.
//!
//! Segmentation and detection datasets are summarised by the mean of their
//! per-image entropies. Classification datasets are summarised by the
//! natural log of the summed Jensen-Shannon distances between every pair of
//! per-class entropy distributions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{intensity_histogram, GreyImage, IntensityHistogram};

/// Upper bound of 8-bit image entropy, in bits.
pub const MAX_ENTROPY_BITS: f64 = 8.0;

/// Default number of uniform entropy bins over `[0, 8]` bits.
pub const DEFAULT_BINS: usize = 64;

/// Allowed deviation of a probability vector's sum from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Shannon entropy of an intensity histogram, in bits.
///
/// Empty bins contribute nothing (`0 log 0 = 0`).
pub fn shannon_entropy(hist: &IntensityHistogram) -> Result<f64> {
    if hist.total() == 0 {
        return Err(Error::Degenerate("histogram has no pixels".into()));
    }
    let total = hist.total() as f64;
    let h: f64 = hist
        .counts()
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // a single occupied bin yields -0.0
    Ok(h.max(0.0))
}

/// Entropy of a greyscale image in bits.
pub fn image_entropy(image: &GreyImage) -> f64 {
    // histograms built from images always hold at least one pixel
    shannon_entropy(&intensity_histogram(image)).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySample {
    pub image_id: String,
    pub entropy_bits: f64,
}

/// Uniform binning of the entropy range `[0, 8]` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Binning {
    bins: usize,
}

impl Default for Binning {
    fn default() -> Self {
        Binning { bins: DEFAULT_BINS }
    }
}

impl Binning {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config(
                "entropy binning needs at least one bin".into(),
            ));
        }
        Ok(Binning { bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> f64 {
        MAX_ENTROPY_BITS / self.bins as f64
    }

    /// Lower edge of bin `k`.
    pub fn edge(&self, k: usize) -> f64 {
        k as f64 * self.width()
    }

    /// Bin holding `entropy`; the top edge (8 bits) falls into the last bin.
    pub fn bin_of(&self, entropy: f64) -> usize {
        let k = (entropy / self.width()).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.bins - 1)
        }
    }
}

/// Histogram of per-image entropies over a fixed [`Binning`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyDistribution {
    binning: Binning,
    counts: Vec<u64>,
    total: u64,
}

impl EntropyDistribution {
    pub fn empty(binning: Binning) -> Self {
        EntropyDistribution {
            binning,
            counts: vec![0; binning.bins()],
            total: 0,
        }
    }

    pub fn from_entropies<I: IntoIterator<Item = f64>>(binning: Binning, entropies: I) -> Self {
        let mut dist = Self::empty(binning);
        for h in entropies {
            dist.add(h);
        }
        dist
    }

    pub fn add(&mut self, entropy: f64) {
        self.counts[self.binning.bin_of(entropy)] += 1;
        self.total += 1;
    }

    /// Combine two partial distributions over the same binning.
    pub fn merge(&mut self, other: &EntropyDistribution) -> Result<()> {
        if self.binning != other.binning {
            return Err(Error::Shape {
                left: self.binning.bins(),
                right: other.binning.bins(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn binning(&self) -> Binning {
        self.binning
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sample_count(&self) -> u64 {
        self.total
    }

    /// Index of the most populated bin (lowest index on ties).
    pub fn mode_bin(&self) -> Option<usize> {
        if self.total == 0 {
            return None;
        }
        let max = *self.counts.iter().max()?;
        self.counts.iter().position(|&c| c == max)
    }

    pub fn normalized(&self) -> Result<ProbabilityVector> {
        if self.total == 0 {
            return Err(Error::Degenerate(
                "entropy distribution holds no samples".into(),
            ));
        }
        let total = self.total as f64;
        ProbabilityVector::new(self.counts.iter().map(|&c| c as f64 / total).collect())
    }
}

/// A discrete distribution: finite, non-negative entries summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::NotNormalized("no bins".into()));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::NotNormalized(format!("bin {k} holds {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::NotNormalized(format!("entries sum to {sum}")));
        }
        Ok(ProbabilityVector(probs))
    }

    /// Normalise non-negative weights with a positive sum.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::NotNormalized(format!("weights sum to {sum}")));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The equal-weight mixture `(P + Q) / 2`.
    pub fn midpoint(&self, other: &ProbabilityVector) -> Result<ProbabilityVector> {
        check_shape(self, other)?;
        Ok(ProbabilityVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(p, q)| 0.5 * (p + q))
                .collect(),
        ))
    }
}

fn check_shape(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(())
}

/// Kullback-Leibler divergence `D(P || Q)` in bits.
pub fn kl_divergence(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    check_shape(p, q)?;
    let mut d = 0.0;
    for (k, (&pk, &qk)) in p.0.iter().zip(&q.0).enumerate() {
        if pk > 0.0 {
            if qk <= 0.0 {
                return Err(Error::Support { bin: k });
            }
            d += pk * (pk / qk).log2();
        }
    }
    Ok(d.max(0.0))
}

/// Jensen-Shannon distance with base-2 logs, so the result lies in `[0, 1]`.
pub fn jensen_shannon_distance(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    let m = p.midpoint(q)?;
    let radicand = 0.5 * kl_divergence(p, &m)? + 0.5 * kl_divergence(q, &m)?;
    Ok(radicand.clamp(0.0, 1.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub label: String,
    pub distribution: EntropyDistribution,
}

/// Group labelled images into one entropy distribution per class, ordered by label.
pub fn class_distributions<I>(labeled: I, binning: Binning) -> Result<Vec<ClassDistribution>>
where
    I: IntoIterator<Item = (String, GreyImage)>,
{
    let mut by_label: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, image) in labeled {
        by_label
            .entry(label)
            .or_default()
            .push(image_entropy(&image));
    }
    class_distributions_from_entropies(by_label, binning)
}

/// Build class distributions from already-computed per-class entropies.
pub fn class_distributions_from_entropies(
    by_label: BTreeMap<String, Vec<f64>>,
    binning: Binning,
) -> Result<Vec<ClassDistribution>> {
    by_label
        .into_iter()
        .map(|(label, entropies)| {
            if entropies.is_empty() {
                return Err(Error::EmptyClass(label));
            }
            Ok(ClassDistribution {
                distribution: EntropyDistribution::from_entropies(binning, entropies),
                label,
            })
        })
        .collect()
}

/// Per-image samples plus their binned distribution.
pub fn dataset_entropy_distribution<I>(
    images: I,
    binning: Binning,
) -> Result<(Vec<EntropySample>, EntropyDistribution)>
where
    I: IntoIterator<Item = (String, GreyImage)>,
{
    let samples: Vec<EntropySample> = images
        .into_iter()
        .map(|(image_id, image)| EntropySample {
            entropy_bits: image_entropy(&image),
            image_id,
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::Degenerate("dataset contains no images".into()));
    }
    let dist = EntropyDistribution::from_entropies(binning, samples.iter().map(|s| s.entropy_bits));
    Ok((samples, dist))
}

pub fn mean_entropy(samples: &[EntropySample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no entropy samples".into()));
    }
    let sum: f64 = samples.iter().map(|s| s.entropy_bits).sum();
    Ok(sum / samples.len() as f64)
}

/// Sum of Jensen-Shannon distances over unordered class pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseJsd {
    pub sum: f64,
    pub terms: usize,
}

pub fn pairwise_jsd_sum(classes: &[ClassDistribution]) -> Result<PairwiseJsd> {
    if classes.len() < 2 {
        return Err(Error::Degenerate(format!(
            "pairwise class distances need at least 2 classes, got {}",
            classes.len()
        )));
    }
    let probs = classes
        .iter()
        .map(|c| c.distribution.normalized())
        .collect::<Result<Vec<_>>>()?;
    let mut sum = 0.0;
    let mut terms = 0;
    for (i, p) in probs.iter().enumerate() {
        for q in &probs[i + 1..] {
            sum += jensen_shannon_distance(p, q)?;
            terms += 1;
        }
    }
    Ok(PairwiseJsd { sum, terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplexityKind {
    MeanEntropy,
    LogSumJsd,
}

impl fmt::Display for ComplexityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComplexityKind::MeanEntropy => "mean-entropy",
            ComplexityKind::LogSumJsd => "log-sum-jsd",
        })
    }
}

impl std::str::FromStr for ComplexityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-entropy" => Ok(ComplexityKind::MeanEntropy),
            "log-sum-jsd" => Ok(ComplexityKind::LogSumJsd),
            other => Err(Error::Validation(format!(
                "unknown complexity kind '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore {
    pub dataset: String,
    pub kind: ComplexityKind,
    pub value: f64,
    /// Set when the value is usable but suspicious, e.g. a JSD sum below 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// `ln(sum)` of the pairwise JSD sum.
pub fn classification_complexity(dataset: &str, jsd_sum: f64) -> Result<ComplexityScore> {
    if !jsd_sum.is_finite() || jsd_sum <= 0.0 {
        return Err(Error::Degenerate(format!(
            "pairwise JSD sum for '{dataset}' is {jsd_sum}; its logarithm is undefined \
             (classes are indistinguishable)"
        )));
    }
    let warning = (jsd_sum < 1.0).then(|| {
        format!("pairwise JSD sum {jsd_sum} is below 1, so the complexity score is negative")
    });
    Ok(ComplexityScore {
        dataset: dataset.to_string(),
        kind: ComplexityKind::LogSumJsd,
        value: jsd_sum.ln(),
        warning,
    })
}

pub fn segmentation_detection_complexity(
    dataset: &str,
    samples: &[EntropySample],
) -> Result<ComplexityScore> {
    Ok(ComplexityScore {
        dataset: dataset.to_string(),
        kind: ComplexityKind::MeanEntropy,
        value: mean_entropy(samples)?,
        warning: None,
    })
}
