//! Logistic regression regularized by the prejudice index.
//!
//! The estimator is `PI = Σ_i w_i Σ_y f(y | x_i) · ln(P(y | a_i) / P(y))`,
//! where `P(y | a)` and `P(y)` are weighted averages of the model's own
//! probabilities within group `a` and overall. For the gradient the log
//! ratios are held fixed within an epoch and refreshed after every accepted
//! step, so the objective optimized in an epoch is
//! `NLL(θ) + η·Σ_i w_i Σ_y f(y | x_i; θ)·r[a_i][y] + (l2/2)‖θ‖²` with `r` frozen.

use std::sync::Arc;

use super::engine::{
    baseline_objective, check_features, descend, sigmoid, softplus_sigmoid, LogisticParams,
    LogisticScorer, Objective, Standardizer, Trace, TrainingMatrix,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{ScoreModel, Threshold};

/// `ln(P(y | a) / P(y))`, indexed `[a][y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiRatios(pub [[f64; 2]; 2]);

impl PiRatios {
    /// Ratios from predicted probabilities of Y=1, per-row groups, and
    /// weights summing to one.
    pub fn from_probabilities(probs: &[f64], groups: &[u8], w: &[f64]) -> Self {
        let mut mass = [0.0f64; 2];
        let mut pos = [0.0f64; 2];
        for ((&p, &a), &wi) in probs.iter().zip(groups).zip(w) {
            mass[a as usize] += wi;
            pos[a as usize] += wi * p;
        }
        let overall = (pos[0] + pos[1]) / (mass[0] + mass[1]);
        let mut r = [[0.0; 2]; 2];
        for a in 0..2 {
            let p1 = pos[a] / mass[a];
            r[a][1] = (p1 / overall).ln();
            r[a][0] = ((1.0 - p1) / (1.0 - overall)).ln();
        }
        PiRatios(r)
    }
}

pub fn prejudice_index_with(
    m: &TrainingMatrix,
    theta: &[f64],
    groups: &[u8],
    ratios: &PiRatios,
) -> f64 {
    (0..m.n)
        .map(|i| {
            let p = sigmoid(m.logit(i, theta));
            let r = ratios.0[groups[i] as usize];
            m.w[i] * (p * r[1] + (1.0 - p) * r[0])
        })
        .sum()
}

/// Prejudice index with ratios computed at `theta`.
pub fn prejudice_index(m: &TrainingMatrix, theta: &[f64], groups: &[u8]) -> f64 {
    let ratios = PiRatios::from_probabilities(&m.probabilities(theta), groups, &m.w);
    prejudice_index_with(m, theta, groups, &ratios)
}

/// Regularized objective with frozen ratios, and its gradient.
pub fn pi_objective(
    m: &TrainingMatrix,
    theta: &[f64],
    groups: &[u8],
    ratios: &PiRatios,
    l2: f64,
    eta: f64,
) -> (f64, Vec<f64>) {
    if eta == 0.0 {
        return baseline_objective(m, theta, l2);
    }
    let mut loss = 0.5 * l2 * theta.iter().map(|t| t * t).sum::<f64>();
    let mut grad: Vec<f64> = theta.iter().map(|t| l2 * t).collect();
    for i in 0..m.n {
        let z = m.logit(i, theta);
        let (sp, p) = softplus_sigmoid(z);
        let r = ratios.0[groups[i] as usize];
        loss += m.w[i] * (sp - m.y[i] * z + eta * (p * r[1] + (1.0 - p) * r[0]));
        let coef = m.w[i] * (p - m.y[i] + eta * (r[1] - r[0]) * p * (1.0 - p));
        for (g, x) in grad.iter_mut().zip(m.row(i)) {
            *g += coef * x;
        }
    }
    (loss, grad)
}

struct Regularized<'a> {
    m: &'a TrainingMatrix,
    groups: &'a [u8],
    ratios: PiRatios,
    l2: f64,
    eta: f64,
}

impl Objective for Regularized<'_> {
    fn refresh(&mut self, theta: &[f64]) {
        if self.eta != 0.0 {
            self.ratios =
                PiRatios::from_probabilities(&self.m.probabilities(theta), self.groups, &self.m.w);
        }
    }

    fn refreshes(&self) -> bool {
        true
    }

    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        pi_objective(self.m, theta, self.groups, &self.ratios, self.l2, self.eta)
    }
}

pub fn train_pi_regularized_traced(
    train: &Dataset,
    column: &str,
    params: &LogisticParams,
    eta: f64,
) -> Result<(ScoreModel, Trace)> {
    params.validate()?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eta must be >= 0, got {eta}"
        )));
    }
    check_features(train)?;
    let groups = train.sensitive(column)?;
    for a in 0..2u8 {
        if !groups.contains(&a) {
            return Err(Error::EmptyGroup {
                column: column.to_string(),
                group: a,
            });
        }
    }
    let standardizer = Standardizer::fit(train);
    let m = TrainingMatrix::new(train, &standardizer)?;
    let mut obj = Regularized {
        m: &m,
        groups,
        ratios: PiRatios([[0.0; 2]; 2]),
        l2: params.l2,
        eta,
    };
    let mut trace = Trace::default();
    let theta = descend(&mut obj, vec![0.0; m.p], params, &mut trace)?;
    let scorer = LogisticScorer {
        standardizer,
        theta,
    };
    let model =
        ScoreModel::new(Arc::new(scorer), Threshold::global(0.5), "pireg").with_flag("eta", eta);
    Ok((model, trace))
}

pub fn train_pi_regularized(
    train: &Dataset,
    column: &str,
    params: &LogisticParams,
    eta: f64,
) -> Result<ScoreModel> {
    train_pi_regularized_traced(train, column, params, eta).map(|(m, _)| m)
}
