//! Planner output: one root belief and action-value vector per image.
//!
//! ```text
//! aor-labels 1
//! states 2
//! actions 2
//! record 3 1 | 0.8 0.2 | 1.2 1.4     # obs context | belief | action-values
//! end
//! ```

use crate::belief::{argmax, Belief};
use crate::error::{Error, Result};
use crate::textio::{join_f64, parse_list, parse_token, LineReader};
use std::io::Write;

pub const LABELS_MAGIC: &str = "aor-labels";
pub const LABELS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub obs: usize,
    pub context: usize,
    pub belief: Belief,
    pub action_values: Vec<f64>,
}

impl LabelRecord {
    pub fn value(&self) -> f64 {
        self.action_values[self.best_action()]
    }

    /// Highest-valued action, lowest index on ties.
    pub fn best_action(&self) -> usize {
        argmax(&self.action_values)
    }
}

/// Records sorted by observation id.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionValueLabels {
    num_actions: usize,
    records: Vec<LabelRecord>,
}

impl ActionValueLabels {
    pub fn new(num_actions: usize, mut records: Vec<LabelRecord>) -> Result<Self> {
        records.sort_by_key(|r| r.obs);
        if records.windows(2).any(|w| w[0].obs == w[1].obs) {
            return Err(Error::InvalidParams("duplicate observation in labels".into()));
        }
        if let Some(r) = records.iter().find(|r| r.action_values.len() != num_actions) {
            return Err(Error::DimensionMismatch {
                expected: num_actions,
                found: r.action_values.len(),
            });
        }
        Ok(Self { num_actions, records })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, obs: usize) -> Option<&LabelRecord> {
        self.records
            .binary_search_by_key(&obs, |r| r.obs)
            .ok()
            .map(|i| &self.records[i])
    }

    /// Record with the closest belief (L1), earliest on ties. Panics when empty.
    pub fn nearest(&self, belief: &Belief) -> &LabelRecord {
        let mut best = &self.records[0];
        let mut best_d = best.belief.l1(belief);
        for r in &self.records[1..] {
            let d = r.belief.l1(belief);
            if d < best_d {
                best = r;
                best_d = d;
            }
        }
        best
    }
}

pub fn write_labels<W: Write>(labels: &ActionValueLabels, out: &mut W) -> Result<()> {
    let states = labels.records.first().map(|r| r.belief.len()).unwrap_or(0);
    writeln!(out, "{LABELS_MAGIC} {LABELS_VERSION}")?;
    writeln!(out, "states {states}")?;
    writeln!(out, "actions {}", labels.num_actions)?;
    for r in &labels.records {
        writeln!(
            out,
            "record {} {} | {} | {}",
            r.obs,
            r.context,
            join_f64(r.belief.probs()),
            join_f64(&r.action_values)
        )?;
    }
    writeln!(out, "end")?;
    Ok(())
}

pub fn read_labels(text: &str) -> Result<ActionValueLabels> {
    let mut reader = LineReader::new(text);
    reader.header(LABELS_MAGIC, LABELS_VERSION)?;
    let states: usize = reader.scalar("states")?;
    let actions: usize = reader.scalar("actions")?;
    let mut records = Vec::new();
    while reader.peek_name() == Some("record") {
        let tokens = reader.record("record")?;
        let line = reader.line_of_previous();
        let parts: Vec<&[&str]> = tokens.split(|t| *t == "|").collect();
        let [head, belief, values] = parts.as_slice() else {
            return Err(Error::Parse {
                line,
                message: "record needs three '|'-separated parts".into(),
            });
        };
        let [obs, context] = head else {
            return Err(Error::Parse {
                line,
                message: "record needs obs and context".into(),
            });
        };
        let probs = parse_list(belief, Some(states), line)?;
        let belief = Belief::restore(probs).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        records.push(LabelRecord {
            obs: parse_token(obs, line)?,
            context: parse_token(context, line)?,
            belief,
            action_values: parse_list(values, Some(actions), line)?,
        });
    }
    reader.finish()?;
    ActionValueLabels::new(actions, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ActionValueLabels {
        let records = vec![
            LabelRecord {
                obs: 4,
                context: 1,
                belief: Belief::new(vec![0.25, 0.75]).unwrap(),
                action_values: vec![0.5, 0.5],
            },
            LabelRecord {
                obs: 1,
                context: 0,
                belief: Belief::new(vec![0.9, 0.1]).unwrap(),
                action_values: vec![1.0 / 3.0, -0.05],
            },
        ];
        ActionValueLabels::new(2, records).unwrap()
    }

    #[test]
    fn lookups() {
        let labels = sample();
        assert_eq!(labels.records()[0].obs, 1);
        assert_eq!(labels.get(4).unwrap().context, 1);
        assert!(labels.get(2).is_none());
        assert_eq!(labels.nearest(&Belief::new(vec![0.8, 0.2]).unwrap()).obs, 1);
        assert_eq!(labels.get(4).unwrap().best_action(), 0);
    }

    #[test]
    fn round_trip() {
        let labels = sample();
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert_eq!(read_labels(std::str::from_utf8(&buf).unwrap()).unwrap(), labels);
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = "aor-labels 1\nstates 2\nactions 2\nrecord 1 0 | 0.5 0.5 | 1.0\nend\n";
        assert!(matches!(read_labels(text), Err(Error::Parse { line: 4, .. })));
    }
}
