//! Dataset files: a world header followed by one score row per image.
//!
//! ```text
//! aor-dataset 1
//! labels 2
//! views 2
//! offsets -1 1
//! jitter 0.0
//! row 0 0 0.9 0.1      # label view score_0 .. score_{labels-1}
//! row 0 1 0.5 0.5
//! row 1 0 0.1 0.9
//! row 1 1 0.5 0.5
//! end
//! ```
//!
//! Rows appear in observation-id order. The likelihood model is rebuilt from
//! the rows on load, so it is never stored twice.

use super::{view_model, ViewWorld};
use crate::belief::LikelihoodModel;
use crate::error::{Error, Result};
use crate::textio::{join, join_f64, parse_list, parse_token, LineReader};
use std::io::Write;
use std::path::Path;

pub const DATASET_MAGIC: &str = "aor-dataset";
pub const DATASET_VERSION: u32 = 1;

/// A world, its per-image score rows and the model derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDataset {
    pub world: ViewWorld,
    pub scores: Vec<Vec<f64>>,
    pub model: LikelihoodModel,
}

impl ViewDataset {
    pub fn new(world: ViewWorld, scores: Vec<Vec<f64>>) -> Result<Self> {
        let model = view_model(&world, &scores)?;
        Ok(Self { world, scores, model })
    }
}

pub fn write_dataset<W: Write>(dataset: &ViewDataset, out: &mut W) -> Result<()> {
    let world = &dataset.world;
    writeln!(out, "{DATASET_MAGIC} {DATASET_VERSION}")?;
    writeln!(out, "labels {}", world.num_labels())?;
    writeln!(out, "views {}", world.views())?;
    writeln!(out, "offsets {}", join(world.offsets()))?;
    writeln!(out, "jitter {:?}", world.jitter_prob())?;
    for (obs, row) in dataset.scores.iter().enumerate() {
        writeln!(
            out,
            "row {} {} {}",
            world.label_of(obs),
            world.view_of(obs),
            join_f64(row)
        )?;
    }
    writeln!(out, "end")?;
    Ok(())
}

pub fn read_dataset(text: &str) -> Result<ViewDataset> {
    let mut reader = LineReader::new(text);
    reader.header(DATASET_MAGIC, DATASET_VERSION)?;
    let labels: usize = reader.scalar("labels")?;
    let views: usize = reader.scalar("views")?;
    let offsets: Vec<i64> = reader.list("offsets", None)?;
    let jitter: f64 = reader.scalar("jitter")?;
    let world = ViewWorld::new(labels, views, offsets, jitter).map_err(|e| Error::Parse {
        line: reader.line_of_previous(),
        message: e.to_string(),
    })?;
    let mut scores = Vec::with_capacity(world.num_observations());
    for obs in 0..world.num_observations() {
        let tokens = reader.record("row")?;
        let line = reader.line_of_previous();
        if tokens.len() != labels + 2 {
            return Err(Error::Parse {
                line,
                message: format!("row needs label, view and {labels} scores"),
            });
        }
        let label: usize = parse_token(tokens[0], line)?;
        let view: usize = parse_token(tokens[1], line)?;
        if world.observation(label, view) != obs || label >= labels || view >= views {
            return Err(Error::Parse {
                line,
                message: format!("row for ({label}, {view}) out of order"),
            });
        }
        scores.push(parse_list(&tokens[2..], Some(labels), line)?);
    }
    reader.finish()?;
    let end_line = reader.line_of_previous();
    ViewDataset::new(world, scores).map_err(|e| Error::Parse {
        line: end_line,
        message: e.to_string(),
    })
}

pub fn save_dataset(dataset: &ViewDataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<ViewDataset> {
    read_dataset(&std::fs::read_to_string(path)?)
}
