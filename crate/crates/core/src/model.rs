use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Maps a feature row to a score in [0, 1].
pub trait Scorer: Send + Sync + fmt::Debug {
    fn score(&self, row: &[f64]) -> f64;
}

/// Uses one feature column, clamped to [0, 1], as the score. Handy for
/// evaluating externally produced scores.
#[derive(Debug, Clone, Copy)]
pub struct ColumnScorer(pub usize);

impl Scorer for ColumnScorer {
    fn score(&self, row: &[f64]) -> f64 {
        row[self.0].clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Threshold {
    Global {
        value: f64,
    },
    /// Group-dependent thresholds keyed on a sensitive column: `values[a]`
    /// applies to rows with that column equal to `a`.
    PerGroup {
        column: String,
        values: [f64; 2],
    },
}

impl Threshold {
    pub fn global(value: f64) -> Self {
        Threshold::Global { value }
    }
}

/// A trained scorer plus its decision rule: predict 1 iff score > threshold.
#[derive(Clone)]
pub struct ScoreModel {
    scorer: Arc<dyn Scorer>,
    threshold: Threshold,
    provenance: String,
    flags: BTreeMap<String, String>,
}

impl fmt::Debug for ScoreModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoreModel")
            .field("scorer", &self.scorer)
            .field("threshold", &self.threshold)
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl ScoreModel {
    pub fn new(
        scorer: Arc<dyn Scorer>,
        threshold: Threshold,
        provenance: impl Into<String>,
    ) -> Self {
        Self {
            scorer,
            threshold,
            provenance: provenance.into(),
            flags: BTreeMap::new(),
        }
    }

    pub fn with_flag(mut self, key: &str, value: impl ToString) -> Self {
        self.flags.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_threshold(mut self, threshold: Threshold) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn scorer(&self) -> &Arc<dyn Scorer> {
        &self.scorer
    }

    pub fn threshold(&self) -> &Threshold {
        &self.threshold
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn flags(&self) -> &BTreeMap<String, String> {
        &self.flags
    }

    pub fn scores(&self, data: &Dataset) -> Vec<f64> {
        data.rows().map(|r| self.scorer.score(r)).collect()
    }

    /// Threshold that applies to each row.
    pub fn row_thresholds(&self, data: &Dataset) -> Result<Vec<f64>> {
        match &self.threshold {
            Threshold::Global { value } => Ok(vec![*value; data.n_rows()]),
            Threshold::PerGroup { column, values } => Ok(data
                .sensitive(column)?
                .iter()
                .map(|&a| values[a as usize])
                .collect()),
        }
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<u8>> {
        let thresholds = self.row_thresholds(data)?;
        Ok(data
            .rows()
            .zip(thresholds)
            .map(|(r, t)| u8::from(self.scorer.score(r) > t))
            .collect())
    }
}

pub(crate) fn check_unit_interval(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|p| !(0.0..=1.0).contains(p)) {
        Some(i) => Err(Error::InvalidParameter(format!(
            "{what}[{i}] = {} is outside [0, 1]",
            values[i]
        ))),
        None => Ok(()),
    }
}
