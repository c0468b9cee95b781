use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inprocess::engine::{fit_univariate, sigmoid, LogisticParams};

/// Per-group logistic calibration maps `sigmoid(slope·s + intercept)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPlatt {
    pub slope: [f64; 2],
    pub intercept: [f64; 2],
    /// Set when a group lacked one of the labels and uses the pooled map.
    pub pooled: [bool; 2],
}

fn platt_params() -> LogisticParams {
    LogisticParams {
        l2: 1e-6,
        learning_rate: 1.0,
        max_epochs: 2000,
        tol: 1e-12,
    }
}

pub fn fit_group_platt(scores: &[f64], labels: &[u8], sensitive: &[u8]) -> Result<GroupPlatt> {
    if labels.len() != scores.len() || sensitive.len() != scores.len() {
        return Err(Error::InvalidDataset(
            "calibration inputs differ in length".into(),
        ));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::InvalidDataset(
            "calibration needs both label values".into(),
        ));
    }
    let params = platt_params();
    let pooled_fit = fit_univariate(scores, labels, &vec![1.0; scores.len()], &params)?;
    let mut out = GroupPlatt {
        slope: [pooled_fit.0; 2],
        intercept: [pooled_fit.1; 2],
        pooled: [true; 2],
    };
    for a in 0..2u8 {
        let idx: Vec<usize> = (0..scores.len()).filter(|&i| sensitive[i] == a).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        if y.contains(&0) && y.contains(&1) {
            let (slope, intercept) = fit_univariate(&s, &y, &vec![1.0; s.len()], &params)?;
            out.slope[a as usize] = slope;
            out.intercept[a as usize] = intercept;
            out.pooled[a as usize] = false;
        }
    }
    Ok(out)
}

pub fn apply_group_platt(gp: &GroupPlatt, scores: &[f64], sensitive: &[u8]) -> Vec<f64> {
    scores
        .iter()
        .zip(sensitive)
        .map(|(&s, &a)| sigmoid(gp.slope[a as usize] * s + gp.intercept[a as usize]))
        .collect()
}
