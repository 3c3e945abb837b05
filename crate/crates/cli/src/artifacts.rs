//! Output directories. A run directory holds a verbatim config copy and one
//! subdirectory per replicate; each replicate directory repeats the config
//! and adds a manifest of its seeds and artifact format versions.

use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use aor_core::obsopt::{PARAMS_MAGIC, PARAMS_VERSION, WEIGHTS_MAGIC, WEIGHTS_VERSION};
use aor_core::planner::{LABELS_MAGIC, LABELS_VERSION};
use aor_core::policy::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
use aor_core::seed::stream_seed;
use aor_core::world::{DATASET_MAGIC, DATASET_VERSION, SPLIT_MAGIC, SPLIT_VERSION};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Named random streams; each stage draws only from its own.
pub const STREAMS: [&str; 12] = [
    "world",
    "split",
    "validation",
    "features",
    "rnd",
    "nfq",
    "nfq-guided",
    "ac",
    "ac-guided",
    "lstm",
    "eval",
    "obsopt",
];

pub const FORMATS: [(&str, u32); 6] = [
    (DATASET_MAGIC, DATASET_VERSION),
    (SPLIT_MAGIC, SPLIT_VERSION),
    (LABELS_MAGIC, LABELS_VERSION),
    (CHECKPOINT_MAGIC, CHECKPOINT_VERSION),
    (WEIGHTS_MAGIC, WEIGHTS_VERSION),
    (PARAMS_MAGIC, PARAMS_VERSION),
];

pub fn replicate_seed(config: &RunConfig, replicate: usize) -> u64 {
    config.seed.wrapping_add(replicate as u64)
}

pub fn manifest(config: &RunConfig, replicate: usize) -> String {
    let root = replicate_seed(config, replicate);
    let mut s = String::from("aor-manifest 1\n");
    let _ = writeln!(s, "replicate {replicate}");
    let _ = writeln!(s, "root-seed {root}");
    for name in STREAMS {
        let _ = writeln!(s, "stream {name} {}", stream_seed(root, name));
    }
    for (magic, version) in FORMATS {
        let _ = writeln!(s, "format {magic} {version}");
    }
    s.push_str("end\n");
    s
}

/// Writes `contents` unless an identical file is already there. A different
/// existing file means the directory belongs to another run.
fn write_once(path: &Path, contents: &str) -> Result<()> {
    if let Ok(existing) = fs::read_to_string(path) {
        if existing != contents {
            bail!(
                "{} exists with different contents; use a fresh output directory",
                path.display()
            );
        }
        return Ok(());
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Artifact directory of one replicate.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    pub seed: u64,
    pub replicate: usize,
}

impl RunDir {
    pub fn prepare(out: &Path, config_text: &str, config: &RunConfig, replicate: usize) -> Result<Self> {
        if replicate >= config.replicates {
            bail!(
                "replicate {replicate} is out of range for {} replicates",
                config.replicates
            );
        }
        let root = out.join(format!("rep-{replicate}"));
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        write_once(&out.join(CONFIG_FILE), config_text)?;
        write_once(&root.join(CONFIG_FILE), config_text)?;
        write_once(&root.join(MANIFEST_FILE), &manifest(config, replicate))?;
        Ok(Self {
            root,
            seed: replicate_seed(config, replicate),
            replicate,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    /// Reads an artifact produced by `stage`.
    pub fn read(&self, name: &str, stage: &str) -> Result<String> {
        let path = self.path(name);
        fs::read_to_string(&path).with_context(|| format!("cannot read {}; run `aor {stage}` first", path.display()))
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifests_list_every_stream_and_format() {
        let config = RunConfig::default();
        let m = manifest(&config, 2);
        assert!(m.contains(&format!("root-seed {}", config.seed + 2)));
        assert_eq!(m.lines().filter(|l| l.starts_with("stream ")).count(), STREAMS.len());
        assert!(m.contains("format aor-weights 1"));
        assert_eq!(m, manifest(&config, 2));
        assert_ne!(m, manifest(&config, 1));
    }

    #[test]
    fn a_directory_rejects_a_different_config() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig::default();
        let text = config.to_toml();
        RunDir::prepare(dir.path(), &text, &config, 0).unwrap();
        RunDir::prepare(dir.path(), &text, &config, 0).unwrap();
        assert!(RunDir::prepare(dir.path(), &format!("{text}\n"), &config, 0).is_err());
        assert!(RunDir::prepare(dir.path(), &text, &config, 1).is_err());
    }
}
