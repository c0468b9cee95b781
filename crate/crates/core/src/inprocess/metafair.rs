//! Error minimization under a min/max group-performance ratio constraint,
//! realized as a search over group-dependent thresholds on a logistic score.

use serde::{Deserialize, Serialize};

use super::engine::{train_logistic, LogisticParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{ScoreModel, Threshold};

/// Which group performance quantity `q_a` the ratio rule constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMetric {
    /// `P(Ŷ=1 | A=a)`
    Independence,
    /// `P(Ŷ=1 | A=a, Y=0)`
    EqualOpportunity,
    /// `P(Ŷ=1 | A=a, Y=0)` and `P(Ŷ=0 | A=a, Y=1)`, both constrained.
    Separation,
    /// `P(Y=1 | A=a, Ŷ=1)`
    Sufficiency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupGrid {
    /// Per group, the empirical score quantiles at levels k/count.
    Quantiles { count: usize },
    /// The same explicit threshold list for both groups.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaFairParams {
    pub metric: FairnessMetric,
    /// Lower bound on min_a q_a / max_a q_a, in (0, 1].
    pub tau_rule: f64,
    pub grid: GroupGrid,
}

impl Default for MetaFairParams {
    fn default() -> Self {
        Self {
            metric: FairnessMetric::Separation,
            tau_rule: 0.8,
            grid: GroupGrid::Quantiles { count: 64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub thresholds: [f64; 2],
    /// Weighted error rate at the chosen pair.
    pub error: f64,
    /// Smallest min/max ratio over the constrained quantities.
    pub ratio: f64,
    pub feasible: bool,
}

/// Weighted counts for one group at one threshold.
#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    pos_y1: f64,
    pos_y0: f64,
}

fn ratio(q0: Option<f64>, q1: Option<f64>) -> f64 {
    match (q0, q1) {
        (Some(a), Some(b)) => {
            let hi = a.max(b);
            if hi > 0.0 {
                a.min(b) / hi
            } else {
                1.0
            }
        }
        _ => 0.0,
    }
}

fn div(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

fn group_grid(grid: &GroupGrid, scores: &[f64]) -> Result<Vec<f64>> {
    let mut values = match grid {
        GroupGrid::Explicit { values } => values.clone(),
        GroupGrid::Quantiles { count } => {
            if *count == 0 {
                return Err(Error::InvalidParameter("empty threshold grid".into()));
            }
            let mut sorted = scores.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let last = (sorted.len() - 1) as f64;
            (0..*count)
                .map(|k| sorted[((k as f64 / *count as f64) * last).round() as usize])
                .collect()
        }
    };
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty threshold grid".into()));
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    Ok(values)
}

/// Exhaustive search over threshold pairs `(t0, t1)`.
///
/// Among pairs meeting the ratio rule, returns the one with the lowest
/// weighted error; ties go to the lexicographically smallest pair. When no
/// pair is feasible, returns the pair with the largest ratio (then lowest
/// error) and marks the result infeasible.
pub fn search_group_thresholds(
    scores: &[f64],
    labels: &[u8],
    groups: &[u8],
    weights: &[f64],
    params: &MetaFairParams,
) -> Result<ThresholdSearch> {
    if !(params.tau_rule > 0.0 && params.tau_rule <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tau_rule {} outside (0, 1]",
            params.tau_rule
        )));
    }
    let mut mass = [[0.0f64; 2]; 2];
    let mut group_scores: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for i in 0..scores.len() {
        mass[groups[i] as usize][labels[i] as usize] += weights[i];
        group_scores[groups[i] as usize].push(scores[i]);
    }
    for a in 0..2 {
        if group_scores[a].is_empty() {
            return Err(Error::EmptyGroup {
                column: "metafair".into(),
                group: a as u8,
            });
        }
        let needs = match params.metric {
            FairnessMetric::Independence | FairnessMetric::Sufficiency => vec![],
            FairnessMetric::EqualOpportunity => vec![0],
            FairnessMetric::Separation => vec![0, 1],
        };
        for y in needs {
            if mass[a][y] <= 0.0 {
                return Err(Error::EmptyCell(format!("metafair: A={a}, Y={y}")));
            }
        }
    }
    let grids = [
        group_grid(&params.grid, &group_scores[0])?,
        group_grid(&params.grid, &group_scores[1])?,
    ];
    // cells[a][k]: weighted positives predicted in group a at threshold k.
    let mut cells: [Vec<Cell>; 2] = [
        vec![Cell::default(); grids[0].len()],
        vec![Cell::default(); grids[1].len()],
    ];
    for i in 0..scores.len() {
        let a = groups[i] as usize;
        // thresholds are sorted: the row is positive for every t < score.
        let upto = grids[a].partition_point(|&t| t < scores[i]);
        for cell in &mut cells[a][..upto] {
            if labels[i] == 1 {
                cell.pos_y1 += weights[i];
            } else {
                cell.pos_y0 += weights[i];
            }
        }
    }
    let total: f64 = weights.iter().sum();
    let q = |a: usize, c: &Cell| -> Vec<Option<f64>> {
        let m = mass[a];
        match params.metric {
            FairnessMetric::Independence => vec![div(c.pos_y1 + c.pos_y0, m[0] + m[1])],
            FairnessMetric::EqualOpportunity => vec![div(c.pos_y0, m[0])],
            FairnessMetric::Separation => vec![div(c.pos_y0, m[0]), div(m[1] - c.pos_y1, m[1])],
            FairnessMetric::Sufficiency => vec![div(c.pos_y1, c.pos_y1 + c.pos_y0)],
        }
    };
    let q_cache: [Vec<Vec<Option<f64>>>; 2] = [
        cells[0].iter().map(|c| q(0, c)).collect(),
        cells[1].iter().map(|c| q(1, c)).collect(),
    ];

    let mut best_feasible: Option<(f64, usize, usize, f64)> = None;
    let mut best_fallback: Option<(f64, f64, usize, usize)> = None;
    for (i, c0) in cells[0].iter().enumerate() {
        for (j, c1) in cells[1].iter().enumerate() {
            let errors =
                (mass[0][1] - c0.pos_y1) + c0.pos_y0 + (mass[1][1] - c1.pos_y1) + c1.pos_y0;
            let error = errors / total;
            let r = q_cache[0][i]
                .iter()
                .zip(&q_cache[1][j])
                .map(|(a, b)| ratio(*a, *b))
                .fold(f64::INFINITY, f64::min);
            if r >= params.tau_rule {
                if best_feasible.is_none_or(|(e, ..)| error < e) {
                    best_feasible = Some((error, i, j, r));
                }
            } else if best_fallback.is_none_or(|(br, be, ..)| r > br || (r == br && error < be)) {
                best_fallback = Some((r, error, i, j));
            }
        }
    }
    Ok(match (best_feasible, best_fallback) {
        (Some((error, i, j, r)), _) => ThresholdSearch {
            thresholds: [grids[0][i], grids[1][j]],
            error,
            ratio: r,
            feasible: true,
        },
        (None, Some((r, error, i, j))) => ThresholdSearch {
            thresholds: [grids[0][i], grids[1][j]],
            error,
            ratio: r,
            feasible: false,
        },
        (None, None) => unreachable!("grids are nonempty"),
    })
}

/// Fits a logistic score on `train`, then group thresholds on the same rows.
pub fn train_metafair(
    train: &Dataset,
    column: &str,
    params: &MetaFairParams,
    base: &LogisticParams,
) -> Result<ScoreModel> {
    let model = train_logistic(train, base)?;
    let scores = model.scores(train);
    let groups = train.sensitive(column)?;
    let found = search_group_thresholds(&scores, train.labels(), groups, train.weights(), params)
        .map_err(|e| match e {
        Error::EmptyGroup { group, .. } => Error::EmptyGroup {
            column: column.to_string(),
            group,
        },
        other => other,
    })?;
    Ok(model
        .with_threshold(Threshold::PerGroup {
            column: column.to_string(),
            values: found.thresholds,
        })
        .with_flag("metafair_feasible", found.feasible)
        .with_flag("metafair_ratio", found.ratio)
        .with_flag("metafair_metric", format!("{:?}", params.metric)))
}
