//! Reweighted retraining of the observation model toward the images that
//! help the planner's downstream accuracy.

mod classifier;
mod improve;
mod weights;

pub use classifier::{
    cell_model, reweighted_retrain, weighted_cross_entropy, FeatureConfig, ImageFeatures, LabeledImage,
    LikelihoodParams, RetrainConfig, PARAMS_MAGIC, PARAMS_VERSION,
};
pub use improve::{
    carve_validation, describe, first_iteration, iterate_improvement, next_iteration, ImprovementConfig,
    ImprovementRun, ImprovementSetup, Iteration,
};
pub use weights::{compute_image_weights, ObservationWeights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
