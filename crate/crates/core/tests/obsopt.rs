//! Reweighted retraining on generated worlds.

use aor_core::obsopt::*;
use aor_core::seed::stream_rng;
use aor_core::world::{design_scores, view_model, ConfusionDesign, ViewWorld};

fn paired_world() -> (ConfusionDesign, ViewWorld, ImageFeatures) {
    let mut design = ConfusionDesign::alternating_blocks(3, 2, 8, 2, vec![-2, -1, 1, 2]).unwrap();
    design.noise_level = 0.1;
    let scores = design_scores(&design, 11).unwrap();
    let world = ViewWorld::new(design.num_labels, design.views, design.offsets.clone(), 0.0).unwrap();
    let labels: Vec<usize> = (0..world.num_observations()).map(|o| world.label_of(o)).collect();
    let cfg = FeatureConfig {
        appearance_cue: 0.0,
        nuisance_dims: 4,
        ..Default::default()
    };
    let features = ImageFeatures::from_scores(&scores, &labels, &cfg, &mut stream_rng(11, "features")).unwrap();
    (design, world, features)
}

#[test]
fn upweighting_discriminative_views_sharpens_them() {
    let (design, world, features) = paired_world();
    let groups = design.group_of_labels();
    let images: Vec<usize> = (0..world.num_observations()).collect();
    let examples: Vec<LabeledImage> = images
        .iter()
        .map(|&image| LabeledImage {
            image,
            label: world.label_of(image),
        })
        .collect();
    let discriminative: Vec<usize> = images
        .iter()
        .copied()
        .filter(|&o| !design.is_ambiguous(groups[world.label_of(o)], world.view_of(o)))
        .collect();
    let raw: Vec<f64> = images
        .iter()
        .map(|o| if discriminative.contains(o) { 1.0 } else { 0.0 })
        .collect();
    // Identity weights on the log-score block reproduce the design rows.
    let (labels, dim) = (world.num_labels(), features.dim());
    let mut w = vec![0.0; labels * dim];
    for s in 0..labels {
        w[s * dim + s] = 1.0;
    }
    let initial = LikelihoodParams::from_weights(labels, dim, w).unwrap();
    let self_likelihood = |params: &LikelihoodParams| -> Vec<f64> {
        let model = view_model(&world, &params.scores(&features)).unwrap();
        discriminative
            .iter()
            .map(|&o| model.prob(world.label_of(o), world.view_of(o), o))
            .collect()
    };
    let weights = ObservationWeights::from_raw(&images, &raw).unwrap();
    let retrained = reweighted_retrain(&initial, &features, &examples, &weights, &RetrainConfig::default()).unwrap();
    let (before, after) = (self_likelihood(&initial), self_likelihood(&retrained));
    for (b, a) in before.iter().zip(&after) {
        assert!(a > b, "{a} <= {b}");
    }
}

#[test]
fn retrained_models_stay_valid() {
    let (_, world, features) = paired_world();
    let images: Vec<usize> = (0..world.num_observations()).collect();
    let examples: Vec<LabeledImage> = images
        .iter()
        .map(|&image| LabeledImage {
            image,
            label: world.label_of(image),
        })
        .collect();
    let raw: Vec<f64> = images.iter().map(|&o| (o % 5) as f64).collect();
    let weights = ObservationWeights::from_raw(&images, &raw).unwrap();
    assert!((weights.weights().iter().sum::<f64>() / images.len() as f64 - 1.0).abs() < 1e-9);
    let initial = LikelihoodParams::zeros(world.num_labels(), features.dim());
    let params = reweighted_retrain(&initial, &features, &examples, &weights, &RetrainConfig::default()).unwrap();
    let model = view_model(&world, &params.scores(&features)).unwrap();
    for pose in 0..world.views() {
        for s in 0..world.num_labels() {
            let total: f64 = images.iter().map(|&o| model.prob(s, pose, o)).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
