//! Gram-matrix and AdaIN style distances over a fixed multi-scale feature bank.
//!
//! The bank has five levels. Level 0 is the raw pixels. Levels 1 to 4 each
//! apply a seeded 3×3 convolution (zero padding, no bias), a 2×2 average
//! pool and a clamp at zero, widening to 16, 32, 64 and 128 channels.
//! All reductions use [`pairwise_sum`](crate::numeric::pairwise_sum) over
//! row-major pixel order so values are reproducible bit-for-bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageGrid;
use crate::numeric::{pairwise_sum, pairwise_sum_by};
use crate::rng::Stream;

pub const LEVELS: usize = 5;
pub const STAGE_WIDTHS: [usize; 4] = [16, 32, 64, 128];
pub const INPUT_CONVENTION: &str = "raw [0,1] pixels, no mean subtraction";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("feature map has no spatial extent")]
    EmptyFeature,
    #[error("no views to score")]
    EmptyViewList,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "feature length");
        assert!(data.iter().all(|v| v.is_finite()), "non-finite feature");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn from_image(image: &ImageGrid) -> Self {
        Self {
            channels: image.channels(),
            height: image.height(),
            width: image.width(),
            data: image.data().to_vec(),
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

#[derive(Debug, Clone)]
struct ConvStage {
    in_channels: usize,
    out_channels: usize,
    /// `[out][in][ky][kx]`
    weights: Vec<f64>,
}

impl ConvStage {
    fn seeded(in_channels: usize, out_channels: usize, rng: &mut Stream) -> Self {
        // Uniform He-style bound keeps activations at a similar scale per level.
        let bound = (6.0 / (in_channels * 9) as f64).sqrt();
        let weights = (0..out_channels * in_channels * 9)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        Self {
            in_channels,
            out_channels,
            weights,
        }
    }

    fn apply(&self, input: &FeatureMap) -> FeatureMap {
        let (h, w) = (input.height, input.width);
        let (oh, ow) = ((h / 2).max(1), (w / 2).max(1));
        let plane = oh * ow;
        let mut data = vec![0.0; self.out_channels * plane];
        data.par_chunks_mut(plane).enumerate().for_each(|(oc, out)| {
            let mut conv = vec![0.0; h * w];
            for ic in 0..self.in_channels {
                let src = input.plane(ic);
                let k = &self.weights[(oc * self.in_channels + ic) * 9..][..9];
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = 0.0;
                        for ky in 0..3 {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let row = &src[sy as usize * w..][..w];
                            for kx in 0..3 {
                                let sx = x as isize + kx as isize - 1;
                                if sx >= 0 && sx < w as isize {
                                    acc += k[ky * 3 + kx] * row[sx as usize];
                                }
                            }
                        }
                        conv[y * w + x] += acc;
                    }
                }
            }
            for oy in 0..oh {
                for ox in 0..ow {
                    let (y0, y1) = (2 * oy, (2 * oy + 2).min(h));
                    let (x0, x1) = (2 * ox, (2 * ox + 2).min(w));
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            acc += conv[y * w + x];
                        }
                    }
                    let pooled = acc / ((y1 - y0) * (x1 - x0)) as f64;
                    out[oy * ow + ox] = pooled.max(0.0);
                }
            }
        });
        FeatureMap::new(self.out_channels, oh, ow, data)
    }
}

/// Five-level feature extractor whose weights are a pure function of `seed`.
#[derive(Debug, Clone)]
pub struct FeatureBank {
    seed: u64,
    stages: Vec<ConvStage>,
}

impl FeatureBank {
    pub fn new(seed: u64) -> Self {
        let mut rng = Stream::new(seed);
        let mut in_channels = 3;
        let stages = STAGE_WIDTHS
            .iter()
            .map(|&out| {
                let stage = ConvStage::seeded(in_channels, out, &mut rng);
                in_channels = out;
                stage
            })
            .collect();
        Self { seed, stages }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn extract(&self, image: &ImageGrid) -> Result<Vec<FeatureMap>, MetricsError> {
        if image.channels() != 3 {
            return Err(MetricsError::ChannelMismatch {
                expected: 3,
                got: image.channels(),
            });
        }
        let mut levels = Vec::with_capacity(LEVELS);
        levels.push(FeatureMap::from_image(image));
        for stage in &self.stages {
            let next = stage.apply(levels.last().expect("level 0 present"));
            levels.push(next);
        }
        Ok(levels)
    }
}

pub fn extract_features(image: &ImageGrid, bank: &FeatureBank) -> Result<Vec<FeatureMap>, MetricsError> {
    bank.extract(image)
}

/// Symmetric C×C channel-correlation matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub size: usize,
    pub data: Vec<f64>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }
}

/// `G_ij = sum_{y,x} F_i F_j / (C H W)`.
pub fn gram(f: &FeatureMap) -> Result<GramMatrix, MetricsError> {
    let n = f.height * f.width;
    if n == 0 {
        return Err(MetricsError::EmptyFeature);
    }
    let c = f.channels;
    let norm = (c * n) as f64;
    let mut data = vec![0.0; c * c];
    for i in 0..c {
        let fi = f.plane(i);
        for j in i..c {
            let fj = f.plane(j);
            let v = pairwise_sum_by(0, n, |k| fi[k] * fj[k]) / norm;
            data[i * c + j] = v;
            data[j * c + i] = v;
        }
    }
    Ok(GramMatrix { size: c, data })
}

fn check_channels(a: &FeatureMap, b: &FeatureMap) -> Result<(), MetricsError> {
    if a.channels != b.channels {
        return Err(MetricsError::ChannelMismatch {
            expected: a.channels,
            got: b.channels,
        });
    }
    Ok(())
}

/// Frobenius norm of the Gram difference.
pub fn gram_distance(reference: &FeatureMap, generated: &FeatureMap) -> Result<f64, MetricsError> {
    check_channels(reference, generated)?;
    let (a, b) = (gram(reference)?, gram(generated)?);
    let sq: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).collect();
    Ok(pairwise_sum(&sq).sqrt())
}

/// Per-channel mean and population standard deviation.
pub fn channel_moments(f: &FeatureMap) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    let n = f.height * f.width;
    if n == 0 {
        return Err(MetricsError::EmptyFeature);
    }
    Ok((0..f.channels)
        .map(|c| {
            let (m, v) = crate::numeric::mean_variance(f.plane(c));
            (m, v.sqrt())
        })
        .unzip())
}

/// `‖μ_ref − μ_gen‖₂ + ‖σ_ref − σ_gen‖₂`.
pub fn adain_distance(reference: &FeatureMap, generated: &FeatureMap) -> Result<f64, MetricsError> {
    check_channels(reference, generated)?;
    let (ma, sa) = channel_moments(reference)?;
    let (mb, sb) = channel_moments(generated)?;
    let l2 = |x: &[f64], y: &[f64]| {
        let sq: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).collect();
        pairwise_sum(&sq).sqrt()
    };
    Ok(l2(&ma, &mb) + l2(&sa, &sb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleDistanceReport {
    pub gram: Vec<f64>,
    pub adain: Vec<f64>,
    pub mean_gram: f64,
    pub mean_adain: f64,
}

impl StyleDistanceReport {
    pub fn from_levels(gram: Vec<f64>, adain: Vec<f64>) -> Self {
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        Self {
            mean_gram: mean(&gram),
            mean_adain: mean(&adain),
            gram,
            adain,
        }
    }
}

/// Per-level distances between precomputed feature stacks.
pub fn feature_distance(a: &[FeatureMap], b: &[FeatureMap]) -> Result<StyleDistanceReport, MetricsError> {
    let mut gram = Vec::with_capacity(a.len());
    let mut adain = Vec::with_capacity(a.len());
    for (fa, fb) in a.iter().zip(b) {
        gram.push(gram_distance(fa, fb)?);
        adain.push(adain_distance(fa, fb)?);
    }
    Ok(StyleDistanceReport::from_levels(gram, adain))
}

pub fn style_distance(a: &ImageGrid, b: &ImageGrid, bank: &FeatureBank) -> Result<StyleDistanceReport, MetricsError> {
    feature_distance(&bank.extract(a)?, &bank.extract(b)?)
}

/// Elementwise mean of per-view reports against one reference.
pub fn multi_view_style_score(
    views: &[ImageGrid],
    reference: &ImageGrid,
    bank: &FeatureBank,
) -> Result<MultiViewReport, MetricsError> {
    if views.is_empty() {
        return Err(MetricsError::EmptyViewList);
    }
    let ref_features = bank.extract(reference)?;
    let per_view = views
        .iter()
        .map(|v| feature_distance(&ref_features, &bank.extract(v)?))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MultiViewReport::from_views(bank.seed(), per_view))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewLevels {
    pub gram: Vec<f64>,
    pub adain: Vec<f64>,
}

/// Serialized form of a multi-view score. `mean_gram`/`mean_adain` are
/// per-level averages over views; `aggregate` holds their level means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewReport {
    pub bank_seed: u64,
    pub input_convention: String,
    pub per_view: Vec<ViewLevels>,
    pub mean_gram: Vec<f64>,
    pub mean_adain: Vec<f64>,
    pub aggregate: StyleDistanceReport,
}

impl MultiViewReport {
    fn from_views(bank_seed: u64, reports: Vec<StyleDistanceReport>) -> Self {
        let levels = reports[0].gram.len();
        let n = reports.len() as f64;
        let avg = |pick: fn(&StyleDistanceReport) -> &Vec<f64>| -> Vec<f64> {
            (0..levels)
                .map(|l| reports.iter().map(|r| pick(r)[l]).sum::<f64>() / n)
                .collect()
        };
        let mean_gram = avg(|r| &r.gram);
        let mean_adain = avg(|r| &r.adain);
        Self {
            bank_seed,
            input_convention: INPUT_CONVENTION.to_string(),
            aggregate: StyleDistanceReport::from_levels(mean_gram.clone(), mean_adain.clone()),
            per_view: reports
                .into_iter()
                .map(|r| ViewLevels {
                    gram: r.gram,
                    adain: r.adain,
                })
                .collect(),
            mean_gram,
            mean_adain,
        }
    }
}
