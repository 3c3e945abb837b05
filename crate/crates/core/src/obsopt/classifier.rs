//! Linear softmax classifier over per-image features. Its score rows,
//! normalized per class, are the observation model.

use super::weights::ObservationWeights;
use crate::belief::{normalize_grouped, LikelihoodModel};
use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::textio::{join_f64, LineReader};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Feature vector of every image, indexed by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Mean of the appearance block on the image's own label. The block has
    /// one coordinate per label plus Gaussian noise of `nuisance_scale`, and
    /// is omitted when this is zero.
    pub appearance_cue: f64,
    /// Label-independent Gaussian coordinates appended to every image.
    pub nuisance_dims: usize,
    pub nuisance_scale: f64,
    /// Scores are floored here before taking logs.
    pub score_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            appearance_cue: 0.5,
            nuisance_dims: 8,
            nuisance_scale: 1.0,
            score_floor: 1e-3,
        }
    }
}

impl ImageFeatures {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidParams("image features must be non-empty".into()));
        }
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams("image features must be finite".into()));
            }
        }
        Ok(Self { dim, rows })
    }

    /// One indicator coordinate per image, so a linear classifier has a free
    /// logit vector for every image.
    pub fn one_hot(count: usize) -> Self {
        let rows = (0..count)
            .map(|i| (0..count).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { dim: count, rows }
    }

    /// Log scores, then the appearance block, then nuisance coordinates.
    /// With identity weights on the log part and zero elsewhere the
    /// classifier reproduces `scores`.
    pub fn from_scores<R: Rng + ?Sized>(
        scores: &[Vec<f64>],
        labels: &[usize],
        cfg: &FeatureConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if labels.len() != scores.len() {
            return Err(Error::DimensionMismatch {
                expected: scores.len(),
                found: labels.len(),
            });
        }
        if !(cfg.score_floor > 0.0) || !(cfg.nuisance_scale >= 0.0) {
            return Err(Error::InvalidParams(
                "score floor must be positive and nuisance scale non-negative".into(),
            ));
        }
        let rows = scores
            .iter()
            .zip(labels)
            .map(|(row, &label)| {
                let mut x: Vec<f64> = row.iter().map(|p| p.max(cfg.score_floor).ln()).collect();
                if cfg.appearance_cue != 0.0 {
                    for k in 0..row.len() {
                        let z: f64 = StandardNormal.sample(rng);
                        x.push(if k == label { cfg.appearance_cue } else { 0.0 } + cfg.nuisance_scale * z);
                    }
                }
                for _ in 0..cfg.nuisance_dims {
                    let z: f64 = StandardNormal.sample(rng);
                    x.push(cfg.nuisance_scale * z);
                }
                x
            })
            .collect();
        Self::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, image: usize) -> &[f64] {
        &self.rows[image]
    }
}

pub const PARAMS_MAGIC: &str = "aor-classifier";
pub const PARAMS_VERSION: u32 = 1;

/// Weights of a linear softmax classifier, `weights[label * dim + k]`.
///
/// ```text
/// aor-classifier 1
/// shape 2 3            # labels dim
/// row 0.5 0.0 -0.1
/// row -0.5 0.0 0.1
/// end
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodParams {
    num_labels: usize,
    dim: usize,
    weights: Vec<f64>,
}

impl LikelihoodParams {
    pub fn zeros(num_labels: usize, dim: usize) -> Self {
        Self {
            num_labels,
            dim,
            weights: vec![0.0; num_labels * dim],
        }
    }

    pub fn from_weights(num_labels: usize, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != num_labels * dim {
            return Err(Error::DimensionMismatch {
                expected: num_labels * dim,
                found: weights.len(),
            });
        }
        Ok(Self {
            num_labels,
            dim,
            weights,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{PARAMS_MAGIC} {PARAMS_VERSION}")?;
        writeln!(out, "shape {} {}", self.num_labels, self.dim)?;
        for row in self.weights.chunks(self.dim.max(1)) {
            writeln!(out, "row {}", join_f64(row))?;
        }
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn read(text: &str) -> Result<Self> {
        let mut reader = LineReader::new(text);
        reader.header(PARAMS_MAGIC, PARAMS_VERSION)?;
        let shape: Vec<usize> = reader.list("shape", Some(2))?;
        let (num_labels, dim) = (shape[0], shape[1]);
        let mut weights = Vec::with_capacity(num_labels * dim);
        for _ in 0..num_labels {
            weights.extend(reader.list::<f64>("row", Some(dim))?);
        }
        reader.finish()?;
        Self::from_weights(num_labels, dim, weights)
    }

    pub fn score_row(&self, x: &[f64]) -> Vec<f64> {
        softmax(&logits(&self.weights, self.dim, x))
    }

    /// Score row of every image.
    pub fn scores(&self, features: &ImageFeatures) -> Vec<Vec<f64>> {
        features.rows.iter().map(|x| self.score_row(x)).collect()
    }
}

fn logits(weights: &[f64], dim: usize, x: &[f64]) -> Vec<f64> {
    weights
        .chunks(dim)
        .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: usize,
    pub label: usize,
}

/// `Σ_i w_i · CE(softmax(W x_i), y_i) / n` over `examples` and its gradient
/// with respect to the flat weights.
pub fn weighted_cross_entropy(
    weights: &[f64],
    num_labels: usize,
    features: &ImageFeatures,
    examples: &[LabeledImage],
    image_weights: &ObservationWeights,
) -> Result<(f64, Vec<f64>)> {
    let dim = features.dim();
    if weights.len() != num_labels * dim {
        return Err(Error::DimensionMismatch {
            expected: num_labels * dim,
            found: weights.len(),
        });
    }
    let n = examples.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    for ex in examples {
        let w = image_weights
            .get(ex.image)
            .ok_or(Error::MissingValue { image: ex.image })?;
        if ex.label >= num_labels || ex.image >= features.len() {
            return Err(Error::InvalidParams(format!("example {ex:?} is out of range")));
        }
        if w == 0.0 {
            continue;
        }
        let x = features.row(ex.image);
        let p = softmax(&logits(weights, dim, x));
        loss -= w * p[ex.label].max(1e-300).ln() / n;
        for (label, pk) in p.iter().enumerate() {
            let delta = w * (pk - if label == ex.label { 1.0 } else { 0.0 }) / n;
            for (g, xk) in grad[label * dim..(label + 1) * dim].iter_mut().zip(x) {
                *g += delta * xk;
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainConfig {
    pub lr: f64,
    /// Full-batch gradient steps.
    pub epochs: usize,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self { lr: 0.5, epochs: 50 }
    }
}

/// Gradient descent on the weighted cross-entropy, starting from `params`.
pub fn reweighted_retrain(
    params: &LikelihoodParams,
    features: &ImageFeatures,
    examples: &[LabeledImage],
    image_weights: &ObservationWeights,
    cfg: &RetrainConfig,
) -> Result<LikelihoodParams> {
    if features.dim() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            found: features.dim(),
        });
    }
    let mut out = params.clone();
    for _ in 0..cfg.epochs {
        let (_, grad) = weighted_cross_entropy(&out.weights, out.num_labels, features, examples, image_weights)?;
        crate::nn::sgd_step(&mut out.weights, &grad, cfg.lr);
    }
    Ok(out)
}

/// Observation model whose images are `(config, obs)` cells with id
/// `config * num_observations + obs`, each config normalized on its own.
pub fn cell_model(scores: &[Vec<f64>], num_configs: usize, num_observations: usize) -> Result<LikelihoodModel> {
    if scores.len() != num_configs * num_observations {
        return Err(Error::DimensionMismatch {
            expected: num_configs * num_observations,
            found: scores.len(),
        });
    }
    let groups: Vec<usize> = (0..scores.len()).map(|i| i / num_observations).collect();
    let (columns, normalizers) = normalize_grouped(scores, &groups, num_configs)?;
    let num_states = columns[0].len();
    LikelihoodModel::new(num_states, num_configs, num_observations, columns.concat(), normalizers)
}
