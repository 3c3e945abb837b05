//! Per-image retraining weights and the file that stores them.
//!
//! ```text
//! aor-weights 1
//! images 3
//! w 0 1.25
//! w 4 0.5
//! w 9 1.25
//! end
//! ```

use crate::error::{Error, Result};
use crate::policy::{Rollout, Step};
use crate::textio::{parse_token, LineReader};
use std::io::Write;

pub const WEIGHTS_MAGIC: &str = "aor-weights";
pub const WEIGHTS_VERSION: u32 = 1;

/// Non-negative weights with mean 1, keyed by image id in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWeights {
    images: Vec<usize>,
    weights: Vec<f64>,
}

impl ObservationWeights {
    pub fn uniform(images: &[usize]) -> Result<Self> {
        Self::from_raw(images, &vec![1.0; images.len()])
    }

    /// Floors `raw` at zero and rescales it to mean 1.
    pub fn from_raw(images: &[usize], raw: &[f64]) -> Result<Self> {
        if images.len() != raw.len() {
            return Err(Error::DimensionMismatch {
                expected: images.len(),
                found: raw.len(),
            });
        }
        if raw.iter().any(|w| w.is_nan()) {
            return Err(Error::InvalidParams("retraining weights must not be NaN".into()));
        }
        let mut pairs: Vec<(usize, f64)> = images.iter().copied().zip(raw.iter().map(|w| w.max(0.0))).collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParams("duplicate image in retraining weights".into()));
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParams("every retraining weight is zero".into()));
        }
        let scale = pairs.len() as f64 / total;
        Ok(Self {
            images: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 * scale).collect(),
        })
    }

    pub fn get(&self, image: usize) -> Option<f64> {
        self.images.binary_search(&image).ok().map(|i| self.weights[i])
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{WEIGHTS_MAGIC} {WEIGHTS_VERSION}")?;
        writeln!(out, "images {}", self.images.len())?;
        for (image, w) in self.images.iter().zip(&self.weights) {
            writeln!(out, "w {image} {w:?}")?;
        }
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn read(text: &str) -> Result<Self> {
        let mut reader = LineReader::new(text);
        reader.header(WEIGHTS_MAGIC, WEIGHTS_VERSION)?;
        let count: usize = reader.scalar("images")?;
        let mut images = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            let tokens = reader.record("w")?;
            let line = reader.line_of_previous();
            let [image, w] = tokens.as_slice() else {
                return Err(Error::Parse {
                    line,
                    message: "expected 'w <image> <weight>'".into(),
                });
            };
            let image: usize = parse_token(image, line)?;
            let w: f64 = parse_token(w, line)?;
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("weight {w} must be finite and non-negative"),
                });
            }
            if images.last().is_some_and(|&prev| prev >= image) {
                return Err(Error::Parse {
                    line,
                    message: "images must be strictly increasing".into(),
                });
            }
            images.push(image);
            weights.push(w);
        }
        reader.finish()?;
        Ok(Self { images, weights })
    }
}

/// Weight of each training image from rollouts of a behavior policy.
///
/// Every step that lands on image `i` contributes the probability the
/// behavior policy gave its action, times the belief it held in the true
/// label before acting, times the value `value_of(i, t, step)` of the belief
/// at `i` reached by step `t`. Steps landing outside `training_images` are
/// skipped.
pub fn compute_image_weights(
    rollouts: &[Rollout],
    training_images: &[usize],
    image_of: impl Fn(&Step) -> usize,
    mut value_of: impl FnMut(usize, usize, &Step) -> Result<f64>,
) -> Result<ObservationWeights> {
    let mut sorted = training_images.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut raw = vec![0.0; sorted.len()];
    for tau in rollouts {
        if tau.behavior_probs.len() != tau.steps.len() {
            return Err(Error::DimensionMismatch {
                expected: tau.steps.len(),
                found: tau.behavior_probs.len(),
            });
        }
        for (t, (step, &p)) in tau.steps.iter().zip(&tau.behavior_probs).enumerate() {
            let image = image_of(step);
            let Ok(slot) = sorted.binary_search(&image) else {
                continue;
            };
            raw[slot] += p * step.belief.probs()[tau.true_label] * value_of(image, t, step)?;
        }
    }
    ObservationWeights::from_raw(&sorted, &raw)
}
