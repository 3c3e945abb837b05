//! Train/test partitions of the image set.

use super::ViewWorld;
use crate::error::{Error, Result};
use crate::textio::{join, LineReader};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const SPLIT_MAGIC: &str = "aor-split";
pub const SPLIT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    /// Every object appears in both halves; a contiguous arc of views is held out.
    NovelViews,
    /// Whole labels are held out, with all their views.
    NovelObjects,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::NovelViews => "novel-views",
            SplitKind::NovelObjects => "novel-objects",
        }
    }
}

/// Observation ids of each half, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub kind: SplitKind,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{SPLIT_MAGIC} {SPLIT_VERSION}")?;
        writeln!(out, "kind {}", self.kind.name())?;
        writeln!(out, "train {}", join(&self.train))?;
        writeln!(out, "test {}", join(&self.test))?;
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn read(text: &str) -> Result<Self> {
        let mut reader = LineReader::new(text);
        reader.header(SPLIT_MAGIC, SPLIT_VERSION)?;
        let kind: String = reader.scalar("kind")?;
        let kind = match kind.as_str() {
            "novel-views" => SplitKind::NovelViews,
            "novel-objects" => SplitKind::NovelObjects,
            other => {
                return Err(Error::Parse {
                    line: reader.line_of_previous(),
                    message: format!("unknown split kind '{other}'"),
                })
            }
        };
        let train = reader.list("train", None)?;
        let test = reader.list("test", None)?;
        reader.finish()?;
        Ok(Self { kind, train, test })
    }
}

/// Holds out `arc` consecutive views of every object, starting at a random
/// view per object.
pub fn novel_views_split<R: Rng + ?Sized>(world: &ViewWorld, arc: usize, rng: &mut R) -> Result<Split> {
    if arc == 0 || arc >= world.views() {
        return Err(Error::InvalidDesign(format!(
            "held-out arc {arc} must be in 1..{}",
            world.views()
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in 0..world.num_labels() {
        let start = rng.random_range(0..world.views());
        for view in 0..world.views() {
            let offset = (view + world.views() - start) % world.views();
            let obs = world.observation(label, view);
            if offset < arc {
                test.push(obs);
            } else {
                train.push(obs);
            }
        }
    }
    Ok(Split {
        kind: SplitKind::NovelViews,
        train,
        test,
    })
}

/// Assigns `round(train_fraction * labels)` randomly chosen labels, with
/// all their views, to training and the rest to testing.
pub fn novel_objects_split<R: Rng + ?Sized>(world: &ViewWorld, train_fraction: f64, rng: &mut R) -> Result<Split> {
    let labels = world.num_labels();
    let train_labels = (train_fraction * labels as f64).round() as usize;
    if train_labels == 0 || train_labels >= labels {
        return Err(Error::InvalidDesign(format!(
            "train fraction {train_fraction} leaves an empty half of {labels} labels"
        )));
    }
    let mut order: Vec<usize> = (0..labels).collect();
    order.shuffle(rng);
    let mut is_train = vec![false; labels];
    for &l in &order[..train_labels] {
        is_train[l] = true;
    }
    let (train, test) = (0..world.num_observations()).partition(|&obs| is_train[world.label_of(obs)]);
    Ok(Split {
        kind: SplitKind::NovelObjects,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn novel_views_holds_out_contiguous_arcs() {
        let world = ViewWorld::new(3, 12, vec![-1, 1], 0.0).unwrap();
        let split = novel_views_split(&world, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(split.test.len(), 12);
        assert_eq!(split.train.len(), 24);
        for label in 0..3 {
            let held: Vec<usize> = split
                .test
                .iter()
                .filter(|&&o| world.label_of(o) == label)
                .map(|&o| world.view_of(o))
                .collect();
            let starts = held.iter().filter(|&&v| !held.contains(&((v + 11) % 12))).count();
            assert_eq!(starts, 1, "arc of label {label} is not contiguous: {held:?}");
        }
    }

    #[test]
    fn novel_objects_holds_out_whole_labels() {
        let world = ViewWorld::new(10, 4, vec![-1, 1], 0.0).unwrap();
        let split = novel_objects_split(&world, 0.6, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(split.train.len(), 24);
        assert_eq!(split.test.len(), 16);
        for &o in &split.test {
            let label = world.label_of(o);
            assert!(!split.train.iter().any(|&t| world.label_of(t) == label));
        }
        assert!(novel_objects_split(&world, 0.01, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn split_round_trip() {
        let world = ViewWorld::new(2, 6, vec![-1, 1], 0.0).unwrap();
        let split = novel_views_split(&world, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut buf = Vec::new();
        split.write(&mut buf).unwrap();
        assert_eq!(Split::read(std::str::from_utf8(&buf).unwrap()).unwrap(), split);
    }
}
