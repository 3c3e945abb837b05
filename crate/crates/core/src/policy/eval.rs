//! Accuracy-versus-steps evaluation and its tables.

use super::rollout::{EpisodeSource, Selection};
use super::Policy;
use crate::belief::argmax;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes_per_start: usize,
    /// Stochastic policies are evaluated by sampling; learned ones greedily.
    pub greedy: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes_per_start: 2,
            greedy: true,
        }
    }
}

/// Fraction of episodes whose belief argmax is the true label, after
/// `0..=max_steps` actions. Every start in `source` is used
/// `episodes_per_start` times.
pub fn evaluate<R: Rng>(
    policy: &mut dyn Policy,
    source: &EpisodeSource<'_>,
    episodes_per_start: usize,
    selection: Selection,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut hits = vec![0usize; source.max_steps + 1];
    let mut episodes = 0usize;
    for &start in source.starts {
        for _ in 0..episodes_per_start {
            let tau = source.run_from(start, policy, selection, rng)?;
            for (t, b) in tau.beliefs().into_iter().enumerate() {
                hits[t] += usize::from(argmax(b.probs()) == tau.true_label);
            }
            episodes += 1;
        }
    }
    if episodes == 0 {
        return Err(Error::InvalidParams("evaluation needs at least one episode".into()));
    }
    Ok(hits.into_iter().map(|h| h as f64 / episodes as f64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub method: String,
    pub step: usize,
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: f64,
    pub seeds: usize,
}

impl AccuracyRow {
    pub fn std_error(&self) -> f64 {
        self.std / (self.seeds.max(1) as f64).sqrt()
    }
}

/// Mean and spread of per-step accuracy, one block of rows per method.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyTable {
    rows: Vec<AccuracyRow>,
}

pub const CSV_HEADER: &str = "method,step,mean,std,seeds";

impl AccuracyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `method` from one accuracy curve per seed.
    pub fn add_runs(&mut self, method: &str, runs: &[Vec<f64>]) -> Result<()> {
        let steps = runs.first().map(Vec::len).unwrap_or(0);
        if runs.iter().any(|r| r.len() != steps) {
            return Err(Error::InvalidParams(format!("runs of {method} have different lengths")));
        }
        let n = runs.len();
        for step in 0..steps {
            let values: Vec<f64> = runs.iter().map(|r| r[step]).collect();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            self.rows.push(AccuracyRow {
                method: method.to_string(),
                step,
                mean,
                std,
                seeds: n,
            });
        }
        Ok(())
    }

    pub fn rows(&self) -> &[AccuracyRow] {
        &self.rows
    }

    pub fn get(&self, method: &str, step: usize) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.method == method && r.step == step)
    }

    /// Methods in first-seen order.
    pub fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method.as_str()) {
                out.push(&r.method);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{},{},{:?},{:?},{}", r.method, r.step, r.mean, r.std, r.seeds)?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header '{CSV_HEADER}'"),
                })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("'{s}': {e}")));
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("'{s}': {e}")));
            rows.push(AccuracyRow {
                method: fields[0].to_string(),
                step: int(fields[1])?,
                mean: num(fields[2])?,
                std: num(fields[3])?,
                seeds: int(fields[4])?,
            });
        }
        Ok(Self { rows })
    }

    /// Plain-text table: one line per method, one column per step, cells
    /// `mean±std`.
    pub fn summary(&self) -> String {
        let steps = self.rows.iter().map(|r| r.step + 1).max().unwrap_or(0);
        let width = self.methods().iter().map(|m| m.len()).max().unwrap_or(6).max(6);
        let mut s = String::new();
        let _ = write!(s, "{:<width$}", "method");
        for t in 0..steps {
            let _ = write!(s, " {:>13}", format!("{t} actions"));
        }
        s.push('\n');
        for m in self.methods() {
            let _ = write!(s, "{m:<width$}");
            for t in 0..steps {
                match self.get(m, t) {
                    Some(r) => {
                        let _ = write!(s, " {:>13}", format!("{:.3}±{:.3}", r.mean, r.std));
                    }
                    None => {
                        let _ = write!(s, " {:>13}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}
