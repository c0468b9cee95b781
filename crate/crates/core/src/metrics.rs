//! Group confusion statistics and the independence / separation /
//! sufficiency deviation metrics.
//!
//! All probabilities are weighted empirical probabilities using the row
//! weights of the evaluated dataset. A prediction is positive iff the score
//! is strictly greater than the threshold.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{ScoreModel, Scorer};

/// Weighted confusion counts of one sensitive group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

impl ConfusionCounts {
    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> f64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> f64 {
        self.tn + self.fp
    }

    pub fn predicted_positive(&self) -> f64 {
        self.tp + self.fp
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.positives())
    }

    pub fn fnr(&self) -> Option<f64> {
        ratio(self.fn_, self.positives())
    }

    pub fn tnr(&self) -> Option<f64> {
        ratio(self.tn, self.negatives())
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.negatives())
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn positive_rate(&self) -> Option<f64> {
        ratio(self.predicted_positive(), self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.predicted_positive())
    }
}

/// Confusion counts for groups A=0 (`groups[0]`) and A=1 (`groups[1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub column: String,
    pub groups: [ConfusionCounts; 2],
}

impl GroupConfusion {
    pub fn from_predictions(data: &Dataset, predictions: &[u8], column: &str) -> Result<Self> {
        let sensitive = data.sensitive(column)?;
        if predictions.len() != data.n_rows() {
            return Err(Error::InvalidParameter(format!(
                "{} predictions for {} rows",
                predictions.len(),
                data.n_rows()
            )));
        }
        let mut groups = [ConfusionCounts::default(); 2];
        let labels = data.labels();
        for i in 0..data.n_rows() {
            let w = data.weights()[i];
            let g = &mut groups[sensitive[i] as usize];
            match (predictions[i], labels[i]) {
                (1, 1) => g.tp += w,
                (1, _) => g.fp += w,
                (_, 1) => g.fn_ += w,
                _ => g.tn += w,
            }
        }
        Ok(Self {
            column: column.to_string(),
            groups,
        })
    }

    fn group(&self, a: usize) -> Result<&ConfusionCounts> {
        let g = &self.groups[a];
        if g.total() > 0.0 {
            Ok(g)
        } else {
            Err(Error::EmptyGroup {
                column: self.column.clone(),
                group: a as u8,
            })
        }
    }

    fn rate(
        &self,
        a: usize,
        name: &str,
        f: fn(&ConfusionCounts) -> Option<f64>,
        cond: &str,
    ) -> Result<f64> {
        f(self.group(a)?).ok_or_else(|| {
            Error::EmptyCell(format!("{name}: no rows with {cond}, {}={a}", self.column))
        })
    }

    pub fn accuracy(&self) -> Option<f64> {
        let [g0, g1] = &self.groups;
        ratio(g0.tp + g0.tn + g1.tp + g1.tn, g0.total() + g1.total())
    }

    /// Mean of the two group accuracies.
    pub fn balanced_accuracy(&self) -> Result<f64> {
        let a0 = self.group(0)?.accuracy().unwrap();
        let a1 = self.group(1)?.accuracy().unwrap();
        Ok(0.5 * (a0 + a1))
    }

    /// |P(Ŷ=1 | A=1) − P(Ŷ=1 | A=0)|
    pub fn ind(&self) -> Result<f64> {
        let p1 = self.group(1)?.positive_rate().unwrap();
        let p0 = self.group(0)?.positive_rate().unwrap();
        Ok((p1 - p0).abs())
    }

    /// Ratio of the smaller to the larger positive-prediction rate (the
    /// quantity bounded by the four-fifths rule). 1 when both rates are 0.
    pub fn independence_quotient(&self) -> Result<f64> {
        let p1 = self.group(1)?.positive_rate().unwrap();
        let p0 = self.group(0)?.positive_rate().unwrap();
        let hi = p0.max(p1);
        Ok(if hi > 0.0 { p0.min(p1) / hi } else { 1.0 })
    }

    fn error_rate_gaps(&self) -> Result<(f64, f64)> {
        let fpr1 = self.rate(1, "FPR", ConfusionCounts::fpr, "Y=0")?;
        let fpr0 = self.rate(0, "FPR", ConfusionCounts::fpr, "Y=0")?;
        let fnr1 = self.rate(1, "FNR", ConfusionCounts::fnr, "Y=1")?;
        let fnr0 = self.rate(0, "FNR", ConfusionCounts::fnr, "Y=1")?;
        Ok((fpr1 - fpr0, fnr1 - fnr0))
    }

    /// ½·|(FPR₁ − FPR₀) + (FNR₁ − FNR₀)|, with the absolute value around the
    /// sum. Opposite-sign gaps cancel; see [`GroupConfusion::sp_abs`].
    pub fn sp(&self) -> Result<f64> {
        let (dfpr, dfnr) = self.error_rate_gaps()?;
        Ok(0.5 * (dfpr + dfnr).abs())
    }

    /// ½·(|FPR₁ − FPR₀| + |FNR₁ − FNR₀|)
    pub fn sp_abs(&self) -> Result<f64> {
        let (dfpr, dfnr) = self.error_rate_gaps()?;
        Ok(0.5 * (dfpr.abs() + dfnr.abs()))
    }

    /// |P(Y=1 | Ŷ=1, A=1) − P(Y=1 | Ŷ=1, A=0)|
    pub fn sf(&self) -> Result<f64> {
        let p1 = self.rate(1, "precision", ConfusionCounts::precision, "Ŷ=1")?;
        let p0 = self.rate(0, "precision", ConfusionCounts::precision, "Ŷ=1")?;
        Ok((p1 - p0).abs())
    }
}

pub fn confusion(data: &Dataset, model: &ScoreModel, column: &str) -> Result<GroupConfusion> {
    let predictions = model.predict(data)?;
    GroupConfusion::from_predictions(data, &predictions, column)
}

pub fn accuracy(data: &Dataset, model: &ScoreModel) -> Result<f64> {
    let predictions = model.predict(data)?;
    let labels = data.labels();
    let w = data.weights();
    let total: f64 = w.iter().sum();
    let hit: f64 = (0..data.n_rows())
        .filter(|&i| predictions[i] == labels[i])
        .map(|i| w[i])
        .sum();
    Ok(hit / total)
}

pub fn balanced_accuracy(data: &Dataset, model: &ScoreModel, column: &str) -> Result<f64> {
    confusion(data, model, column)?.balanced_accuracy()
}

pub fn ind_metric(data: &Dataset, model: &ScoreModel, column: &str) -> Result<f64> {
    confusion(data, model, column)?.ind()
}

pub fn sp_metric(data: &Dataset, model: &ScoreModel, column: &str) -> Result<f64> {
    confusion(data, model, column)?.sp()
}

pub fn sp_metric_abs(data: &Dataset, model: &ScoreModel, column: &str) -> Result<f64> {
    confusion(data, model, column)?.sp_abs()
}

pub fn sf_metric(data: &Dataset, model: &ScoreModel, column: &str) -> Result<f64> {
    confusion(data, model, column)?.sf()
}

pub const MAX_THRESHOLD_GRID: usize = 512;

/// Candidate thresholds for a set of scores: the midpoints between
/// consecutive distinct scores plus the largest score (the all-negative
/// rule), thinned to at most [`MAX_THRESHOLD_GRID`] points evenly spaced by
/// rank. A threshold equal to a score classifies exactly like the midpoint
/// above it, so distinct scores other than the maximum are omitted.
pub fn default_threshold_grid(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut grid: Vec<f64> = distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if let Some(&max) = distinct.last() {
        grid.push(max);
    }
    if grid.len() > MAX_THRESHOLD_GRID {
        let last = grid.len() - 1;
        grid = (0..MAX_THRESHOLD_GRID)
            .map(|k| grid[(k * last + (MAX_THRESHOLD_GRID - 1) / 2) / (MAX_THRESHOLD_GRID - 1)])
            .collect();
        grid.dedup();
    }
    grid
}

/// Threshold maximizing validation balanced accuracy over `grid` (or the
/// default grid when `None`). Ties go to the smallest threshold.
pub fn select_threshold_from_scores(
    scores: &[f64],
    validation: &Dataset,
    column: &str,
    grid: Option<&[f64]>,
) -> Result<f64> {
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_threshold_grid(scores);
            &owned
        }
    };
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty threshold grid".into()));
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best: Option<(f64, f64)> = None;
    let mut predictions = vec![0u8; scores.len()];
    for &t in &sorted {
        for (p, s) in predictions.iter_mut().zip(scores) {
            *p = u8::from(*s > t);
        }
        let ba = GroupConfusion::from_predictions(validation, &predictions, column)?
            .balanced_accuracy()?;
        if best.is_none_or(|(_, b)| ba > b) {
            best = Some((t, ba));
        }
    }
    Ok(best.unwrap().0)
}

pub fn select_threshold(
    scorer: &dyn Scorer,
    validation: &Dataset,
    column: &str,
    grid: Option<&[f64]>,
) -> Result<f64> {
    let scores: Vec<f64> = validation.rows().map(|r| scorer.score(r)).collect();
    select_threshold_from_scores(&scores, validation, column, grid)
}
