//! Run configuration. Every field is required so a config file fully
//! describes its run; `aor default-config` prints a complete one.

use aor_core::belief::RewardSpec;
use aor_core::obsopt::{FeatureConfig, ImprovementConfig};
use aor_core::planner::{params_from_epsilon, PlannerParams, RootAggregation};
use aor_core::policy::{RlConfig, Selection, SupervisedConfig};
use aor_core::world::{ConfusionDesign, SplitKind};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Not marked as the source, so chained reports print the parser's
    /// message once.
    #[error("cannot parse config: {0}")]
    Parse(toml::de::Error),

    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

impl From<toml::de::Error> for ConfigError {
    fn from(e: toml::de::Error) -> Self {
        ConfigError::Parse(e)
    }
}

fn invalid(field: &'static str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Independent runs; replicate `r` uses root seed `seed + r`.
    pub replicates: usize,
    pub output_dir: PathBuf,
    pub methods: Vec<Method>,
    pub world: WorldConfig,
    pub split: SplitConfig,
    pub planner: PlannerConfig,
    pub reward: RewardSpec,
    pub episodes: EpisodeConfig,
    pub supervised: SupervisedConfig,
    pub rl: RlConfig,
    pub obsopt: ObsOptConfig,
}

/// Groups of labels whose ambiguous views repeat with their own period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// `[run length, phase]` of each group's ambiguous views.
    pub blocks: Vec<[usize; 2]>,
    pub group_size: usize,
    pub views: usize,
    pub offsets: Vec<i64>,
    pub noise_level: f64,
    pub concentration: f64,
    pub floor: f64,
    pub jitter_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub kind: SplitKind,
    /// Views held out per object in a novel-views split.
    pub arc: usize,
    /// Share of labels used for training in a novel-objects split.
    pub train_fraction: f64,
    /// Training views per label set aside to validate reweighting.
    pub validation_arc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub epsilon: f64,
    pub r_max: f64,
    pub min_evidence: f64,
    pub root_aggregation: RootAggregation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub eval_episodes_per_start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsOptConfig {
    pub features: FeatureConfig,
    pub improvement: ImprovementConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rnd,
    Nfq,
    NfqGuided,
    Ac,
    AcGuided,
    Lstm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Rnd,
        Method::Nfq,
        Method::NfqGuided,
        Method::Ac,
        Method::AcGuided,
        Method::Lstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rnd => "rnd",
            Method::Nfq => "nfq",
            Method::NfqGuided => "nfq-guided",
            Method::Ac => "ac",
            Method::AcGuided => "ac-guided",
            Method::Lstm => "lstm",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// The recurrent policy is an action classifier and acts greedily; the
    /// others define stochastic policies and are sampled.
    pub fn selection(self) -> Selection {
        match self {
            Method::Lstm => Selection::Greedy,
            _ => Selection::Sample,
        }
    }

    pub fn needs_labels(self) -> bool {
        matches!(self, Method::NfqGuided | Method::AcGuided | Method::Lstm)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let gamma = 0.5;
        Self {
            seed: 1,
            replicates: 1,
            output_dir: PathBuf::from("runs/default"),
            methods: Method::ALL.to_vec(),
            world: WorldConfig {
                blocks: vec![[1, 0], [2, 0], [3, 0], [6, 0], [2, 1]],
                group_size: 2,
                views: 12,
                offsets: vec![1, 2, 4, 6],
                noise_level: 0.1,
                concentration: 0.95,
                floor: 0.0,
                jitter_prob: 0.1,
            },
            split: SplitConfig {
                kind: SplitKind::NovelViews,
                arc: 4,
                train_fraction: 0.6,
                validation_arc: 2,
            },
            planner: PlannerConfig {
                epsilon: 0.1,
                r_max: 1.0,
                min_evidence: 1e-2,
                root_aggregation: RootAggregation::Mean,
            },
            reward: RewardSpec {
                correct_reward: 1.0,
                step_cost: -0.05,
                gamma,
            },
            episodes: EpisodeConfig {
                max_steps: 5,
                eval_episodes_per_start: 2,
            },
            supervised: SupervisedConfig::default(),
            rl: RlConfig::default(),
            obsopt: ObsOptConfig {
                features: FeatureConfig::default(),
                improvement: ImprovementConfig::default(),
            },
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn design(&self) -> Result<ConfusionDesign, ConfigError> {
        let w = &self.world;
        let blocks: Vec<(usize, usize)> = w.blocks.iter().map(|b| (b[0], b[1])).collect();
        let mut design = ConfusionDesign::periodic_blocks(&blocks, w.group_size, w.views, w.offsets.clone())
            .map_err(|e| invalid("world", e))?;
        design.noise_level = w.noise_level;
        design.concentration = w.concentration;
        design.floor = w.floor;
        design.jitter_prob = w.jitter_prob;
        design.validate().map_err(|e| invalid("world", e))?;
        Ok(design)
    }

    pub fn planner_params(&self) -> Result<PlannerParams, ConfigError> {
        let p = &self.planner;
        let mut params =
            params_from_epsilon(p.epsilon, self.reward.gamma, p.r_max).map_err(|e| invalid("planner", e))?;
        params.min_evidence = p.min_evidence;
        params.root_aggregation = p.root_aggregation;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "list at least one method"));
        }
        self.reward.validate().map_err(|e| invalid("reward", e))?;
        self.design()?;
        self.planner_params()?;
        if !(self.planner.min_evidence >= 0.0) {
            return Err(invalid("planner.min_evidence", "must be non-negative"));
        }
        if self.episodes.max_steps == 0 {
            return Err(invalid("episodes.max_steps", "must be at least 1"));
        }
        if self.episodes.eval_episodes_per_start == 0 {
            return Err(invalid("episodes.eval_episodes_per_start", "must be at least 1"));
        }
        let s = &self.split;
        if s.arc == 0 || s.arc >= self.world.views {
            return Err(invalid("split.arc", format!("must be in 1..{}", self.world.views)));
        }
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return Err(invalid("split.train_fraction", "must be in (0, 1)"));
        }
        if s.validation_arc == 0 {
            return Err(invalid("split.validation_arc", "must be at least 1"));
        }
        if self.obsopt.improvement.iterations == 0 {
            return Err(invalid("obsopt.improvement.iterations", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let config = RunConfig::default();
        config.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&config.to_toml()).unwrap(), config);
    }

    #[test]
    fn errors_name_the_field() {
        let text = RunConfig::default().to_toml();
        let missing = text.replacen("seed = 1\n", "", 1);
        let err = RunConfig::from_toml(&missing).unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
        let unknown = text.replacen("seed = 1\n", "seed = 1\nsed = 2\n", 1);
        assert!(RunConfig::from_toml(&unknown).unwrap_err().to_string().contains("sed"));
        let bad = text.replacen("max_steps = 5", "max_steps = 0", 1);
        assert!(RunConfig::from_toml(&bad)
            .unwrap_err()
            .to_string()
            .contains("episodes.max_steps"));
    }

    #[test]
    fn methods_parse_by_name() {
        for m in Method::ALL {
            assert_eq!(Method::from_name(m.name()), Some(m));
        }
        assert_eq!(Method::from_name("dqn"), None);
    }
}
