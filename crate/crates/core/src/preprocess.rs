//! Data-level processors: reweighing and disparate-impact repair.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Reweighing factors `w(a, y) = P(A=a)·P(Y=y) / P(A=a, Y=y)`, indexed
/// `[a][y]`, from the weighted joint of the sensitive column and the label.
pub fn reweigh_factors(data: &Dataset, column: &str) -> Result<[[f64; 2]; 2]> {
    let sensitive = data.sensitive(column)?;
    let labels = data.labels();
    let mut joint = [[0.0f64; 2]; 2];
    for ((&a, &y), &w) in sensitive.iter().zip(labels).zip(data.weights()) {
        joint[a as usize][y as usize] += w;
    }
    let total: f64 = joint.iter().flatten().sum();
    let pa = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let py = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut factors = [[0.0; 2]; 2];
    for a in 0..2 {
        for y in 0..2 {
            if joint[a][y] <= 0.0 {
                return Err(Error::EmptyCell(format!("reweighing: {column}={a}, Y={y}")));
            }
            factors[a][y] = pa[a] * py[y] / (total * joint[a][y]);
        }
    }
    Ok(factors)
}

/// Multiplies the reweighing factor of each row's (a, y) cell onto its weight.
pub fn reweigh(data: &Dataset, column: &str) -> Result<Dataset> {
    let factors = reweigh_factors(data, column)?;
    let sensitive = data.sensitive(column)?;
    let labels = data.labels();
    let weights = data
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w * factors[sensitive[i] as usize][labels[i] as usize])
        .collect();
    data.clone().with_weights(weights)
}

/// Draws `n` rows with replacement, proportionally to the reweighed weights.
/// The returned rows carry unit weight.
pub fn reweigh_resample(data: &Dataset, column: &str, seed: u64) -> Result<Dataset> {
    let weighted = reweigh(data, column)?;
    let dist = WeightedIndex::new(weighted.weights())
        .map_err(|e| Error::InvalidParameter(format!("resampling weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = (0..data.n_rows()).map(|_| dist.sample(&mut rng)).collect();
    data.subset(&idx).with_weights(vec![1.0; idx.len()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepairParams {
    /// 0 leaves the data untouched, 1 is a full repair.
    pub lambda: f64,
    /// Feature names to repair. `None` selects every non-binary feature.
    pub columns: Option<Vec<String>>,
    pub quantile_grid: usize,
}

impl Default for RepairParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            columns: None,
            quantile_grid: 100,
        }
    }
}

impl RepairParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!(
                "repair lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if self.quantile_grid < 2 {
            return Err(Error::InvalidParameter("quantile_grid must be >= 2".into()));
        }
        Ok(())
    }
}

/// Linear-interpolation quantile (order statistics at positions u·(n−1)).
fn quantile(sorted: &[f64], u: f64) -> f64 {
    let pos = u * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Evaluates a piecewise-linear function given by `values` at the uniform
/// knots 0, 1/(K−1), …, 1.
fn interp_knots(values: &[f64], u: f64) -> f64 {
    let k = values.len() - 1;
    let pos = (u * k as f64).clamp(0.0, k as f64);
    let lo = (pos.floor() as usize).min(k - 1);
    let frac = pos - lo as f64;
    values[lo] + frac * (values[lo + 1] - values[lo])
}

/// Inverse of [`interp_knots`] for nondecreasing `values`: the quantile level
/// of `x`. Flat stretches map to their midpoint level; `x` outside the knot
/// range is clamped.
fn cdf_from_knots(values: &[f64], x: f64) -> f64 {
    let k = values.len() - 1;
    let step = 1.0 / k as f64;
    if x <= values[0] {
        let last = values.iter().rposition(|&v| v <= values[0]).unwrap();
        return 0.5 * last as f64 * step;
    }
    if x >= values[k] {
        let first = values.iter().position(|&v| v >= values[k]).unwrap();
        return 0.5 * (first as f64 + k as f64) * step;
    }
    let first_ge = values.partition_point(|&v| v < x);
    let last_le = values.partition_point(|&v| v <= x);
    if last_le > first_ge {
        // x equals knots first_ge..last_le
        return 0.5 * (first_ge + last_le - 1) as f64 * step;
    }
    let (lo, hi) = (first_ge - 1, first_ge);
    let frac = (x - values[lo]) / (values[hi] - values[lo]);
    (lo as f64 + frac) * step
}

#[derive(Debug, Clone)]
struct ColumnRepair {
    index: usize,
    /// Group quantile functions at the knots, `[a][k]`.
    group_knots: [Vec<f64>; 2],
    /// Median quantile function at the knots.
    median_knots: Vec<f64>,
}

/// Fitted disparate-impact repair, reusable on validation and test rows.
///
/// A value `x` of group `a` at quantile level `u = F_a(x)` is mapped to
/// `(1 − λ)·x + λ·F_M⁻¹(u)`, where `F_M⁻¹` is the pointwise median of the
/// group quantile functions. Since `F_a⁻¹(F_a(x)) = x` on the group's
/// support, this is the value-space interpolation between the group
/// quantile function and the median one.
#[derive(Debug, Clone)]
pub struct Repairer {
    column: String,
    lambda: f64,
    columns: Vec<ColumnRepair>,
}

impl Repairer {
    pub fn fit(train: &Dataset, column: &str, params: &RepairParams) -> Result<Self> {
        params.validate()?;
        let sensitive = train.sensitive(column)?;
        for a in 0..2u8 {
            let count = sensitive.iter().filter(|&&s| s == a).count();
            if count < 2 {
                return Err(Error::InvalidParameter(format!(
                    "disparate-impact repair needs >= 2 rows in {column}={a}, found {count}"
                )));
            }
        }
        let names = train.feature_names();
        let indices: Vec<usize> = match &params.columns {
            Some(cols) => cols
                .iter()
                .map(|c| {
                    names.iter().position(|n| n == c).ok_or_else(|| {
                        Error::InvalidParameter(format!("no feature named `{c}` to repair"))
                    })
                })
                .collect::<Result<_>>()?,
            None => (0..names.len())
                .filter(|&j| train.rows().any(|r| r[j] != 0.0 && r[j] != 1.0))
                .collect(),
        };
        let levels: Vec<f64> = (0..params.quantile_grid)
            .map(|k| k as f64 / (params.quantile_grid - 1) as f64)
            .collect();
        let columns = indices
            .into_iter()
            .map(|j| {
                let mut by_group: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
                for (r, &a) in train.rows().zip(sensitive) {
                    by_group[a as usize].push(r[j]);
                }
                let group_knots = by_group.map(|mut v| {
                    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    levels
                        .iter()
                        .map(|&u| quantile(&v, u))
                        .collect::<Vec<f64>>()
                });
                // The median of two values is their midpoint.
                let median_knots = group_knots[0]
                    .iter()
                    .zip(&group_knots[1])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                ColumnRepair {
                    index: j,
                    group_knots,
                    median_knots,
                }
            })
            .collect();
        Ok(Self {
            column: column.to_string(),
            lambda: params.lambda,
            columns,
        })
    }

    /// Indices of the repaired feature columns.
    pub fn repaired_columns(&self) -> Vec<usize> {
        self.columns.iter().map(|c| c.index).collect()
    }

    pub fn repair_value(&self, column: usize, group: u8, x: f64) -> f64 {
        let c = &self.columns[column];
        let u = cdf_from_knots(&c.group_knots[group as usize], x);
        (1.0 - self.lambda) * x + self.lambda * interp_knots(&c.median_knots, u)
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let sensitive = data.sensitive(&self.column)?;
        let d = data.n_features();
        let mut features = data.features().to_vec();
        for (k, c) in self.columns.iter().enumerate() {
            if c.index >= d {
                return Err(Error::InvalidDataset(
                    "feature layout differs from training".into(),
                ));
            }
            for (i, &a) in sensitive.iter().enumerate() {
                let x = &mut features[i * d + c.index];
                *x = self.repair_value(k, a, *x);
            }
        }
        data.clone().with_features(features)
    }
}

/// Fits the repair on `train` and returns the repaired training data with
/// the fitted [`Repairer`].
pub fn di_remove(
    train: &Dataset,
    column: &str,
    params: &RepairParams,
) -> Result<(Dataset, Repairer)> {
    let repairer = Repairer::fit(train, column, params)?;
    Ok((repairer.transform(train)?, repairer))
}
