//! Full-batch gradient descent for weighted logistic models.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{ScoreModel, Scorer, Threshold};

/// Rejected steps in a row before training is declared divergent.
pub const MAX_REJECTED_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticParams {
    /// Coefficient of the (l2/2)·‖θ‖² penalty.
    pub l2: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the objective changes by less than this between epochs.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            learning_rate: 0.1,
            max_epochs: 500,
            tol: 1e-7,
        }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.l2 >= 0.0
            && self.l2.is_finite()
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "bad logistic parameters {self:?}"
            )))
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `(softplus(z), sigmoid(z))` from a single exponential.
pub fn softplus_sigmoid(z: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let sp = z.max(0.0) + e.ln_1p();
    let sg = if z >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    };
    (sp, sg)
}

/// Per-feature affine standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let (n, d) = (data.n_rows() as f64, data.n_features());
        let mut mean = vec![0.0; d];
        for r in data.rows() {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in data.rows() {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    /// Design row `[1, z_1, …, z_d]`.
    pub fn design_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        out.extend(
            row.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .map(|((x, m), s)| (x - m) / s),
        );
    }
}

/// Standardized design matrix with intercept column, binary targets and
/// row weights normalized to sum to one.
#[derive(Debug, Clone)]
pub struct TrainingMatrix {
    pub x: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl TrainingMatrix {
    pub fn new(data: &Dataset, standardizer: &Standardizer) -> Result<Self> {
        if data.features().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("training features".into()));
        }
        let p = data.n_features() + 1;
        let mut x = Vec::with_capacity(data.n_rows() * p);
        let mut buf = Vec::with_capacity(p);
        for r in data.rows() {
            standardizer.design_row(r, &mut buf);
            x.extend_from_slice(&buf);
        }
        let total: f64 = data.weights().iter().sum();
        Ok(Self {
            x,
            n: data.n_rows(),
            p,
            y: data.labels().iter().map(|&v| f64::from(v)).collect(),
            w: data.weights().iter().map(|w| w / total).collect(),
        })
    }

    /// Builds a matrix from explicit design rows (intercept included).
    pub fn from_design(x: Vec<f64>, p: usize, y: Vec<f64>, w: Vec<f64>) -> Self {
        let total: f64 = w.iter().sum();
        Self {
            n: y.len(),
            x,
            p,
            y,
            w: w.into_iter().map(|v| v / total).collect(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn logit(&self, i: usize, theta: &[f64]) -> f64 {
        self.row(i).iter().zip(theta).map(|(a, b)| a * b).sum()
    }

    pub fn probabilities(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| sigmoid(self.logit(i, theta))).collect()
    }
}

/// Weighted negative log-likelihood (weights summing to one) plus
/// (l2/2)·‖θ‖², and its gradient.
pub fn baseline_objective(m: &TrainingMatrix, theta: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let mut loss = 0.5 * l2 * theta.iter().map(|t| t * t).sum::<f64>();
    let mut grad: Vec<f64> = theta.iter().map(|t| l2 * t).collect();
    for i in 0..m.n {
        let z = m.logit(i, theta);
        let (sp, p) = softplus_sigmoid(z);
        loss += m.w[i] * (sp - m.y[i] * z);
        let r = m.w[i] * (p - m.y[i]);
        for (g, x) in grad.iter_mut().zip(m.row(i)) {
            *g += r * x;
        }
    }
    (loss, grad)
}

/// Gradient of [`baseline_objective`] given the probabilities at `theta`.
pub(crate) fn baseline_gradient(
    m: &TrainingMatrix,
    probs: &[f64],
    theta: &[f64],
    l2: f64,
) -> Vec<f64> {
    let mut grad: Vec<f64> = theta.iter().map(|t| l2 * t).collect();
    for (i, p) in probs.iter().enumerate() {
        let r = m.w[i] * (p - m.y[i]);
        for (g, x) in grad.iter_mut().zip(m.row(i)) {
            *g += r * x;
        }
    }
    grad
}

/// An objective that may be re-linearized between epochs.
pub(crate) trait Objective {
    /// Called after every accepted step (and once before the first epoch).
    fn refresh(&mut self, _theta: &[f64]) {}
    fn refreshes(&self) -> bool {
        false
    }
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>);
}

/// Per-epoch record of a descent run.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// Parameters after each accepted epoch, starting with the initial ones.
    pub thetas: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    pub backtracks: usize,
}

/// Gradient descent with step halving: a step that increases the objective is
/// rejected and the learning rate halved.
pub(crate) fn descend<O: Objective>(
    obj: &mut O,
    mut theta: Vec<f64>,
    params: &LogisticParams,
    trace: &mut Trace,
) -> Result<Vec<f64>> {
    obj.refresh(&theta);
    let (mut loss, mut grad) = obj.eval(&theta);
    if !loss.is_finite() {
        return Err(Error::NonFinite("initial loss".into()));
    }
    trace.thetas.push(theta.clone());
    trace.losses.push(loss);
    let mut lr = params.learning_rate;
    let mut rejected = 0;
    for _ in 0..params.max_epochs {
        let trial: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - lr * g).collect();
        let (trial_loss, trial_grad) = obj.eval(&trial);
        if !trial_loss.is_finite() || trial_loss > loss {
            lr *= 0.5;
            rejected += 1;
            trace.backtracks += 1;
            if rejected >= MAX_REJECTED_STEPS {
                return Err(Error::Divergence(rejected));
            }
            continue;
        }
        rejected = 0;
        theta = trial;
        let (new_loss, new_grad) = if obj.refreshes() {
            obj.refresh(&theta);
            obj.eval(&theta)
        } else {
            (trial_loss, trial_grad)
        };
        trace.thetas.push(theta.clone());
        trace.losses.push(new_loss);
        let delta = (loss - new_loss).abs();
        loss = new_loss;
        grad = new_grad;
        if delta < params.tol {
            break;
        }
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("trained parameters".into()));
    }
    Ok(theta)
}

/// sigmoid(θᵀ[1, standardized x]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticScorer {
    pub standardizer: Standardizer,
    pub theta: Vec<f64>,
}

impl LogisticScorer {
    pub fn logit(&self, row: &[f64]) -> f64 {
        let s = &self.standardizer;
        self.theta[0]
            + row
                .iter()
                .zip(&s.mean)
                .zip(&s.scale)
                .zip(&self.theta[1..])
                .map(|(((x, m), sc), t)| t * (x - m) / sc)
                .sum::<f64>()
    }
}

impl Scorer for LogisticScorer {
    fn score(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }
}

struct Baseline<'a> {
    m: &'a TrainingMatrix,
    l2: f64,
}

impl Objective for Baseline<'_> {
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        baseline_objective(self.m, theta, self.l2)
    }
}

pub(crate) fn check_features(train: &Dataset) -> Result<()> {
    if train.features().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("training features".into()));
    }
    Ok(())
}

/// Baseline weighted logistic regression; parameters start at zero.
pub fn train_logistic_traced(
    train: &Dataset,
    params: &LogisticParams,
) -> Result<(ScoreModel, Trace)> {
    params.validate()?;
    check_features(train)?;
    let standardizer = Standardizer::fit(train);
    let m = TrainingMatrix::new(train, &standardizer)?;
    let mut trace = Trace::default();
    let theta = descend(
        &mut Baseline {
            m: &m,
            l2: params.l2,
        },
        vec![0.0; m.p],
        params,
        &mut trace,
    )?;
    let scorer = LogisticScorer {
        standardizer,
        theta,
    };
    Ok((
        ScoreModel::new(Arc::new(scorer), Threshold::global(0.5), "logistic"),
        trace,
    ))
}

pub fn train_logistic(train: &Dataset, params: &LogisticParams) -> Result<ScoreModel> {
    train_logistic_traced(train, params).map(|(m, _)| m)
}

/// Fits sigmoid(a·s + b) to binary labels for a single score column and
/// returns `(a, b)` in raw score units.
pub(crate) fn fit_univariate(
    scores: &[f64],
    labels: &[u8],
    weights: &[f64],
    params: &LogisticParams,
) -> Result<(f64, f64)> {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
    let x = scores
        .iter()
        .flat_map(|s| [1.0, (s - mean) / scale])
        .collect();
    let m = TrainingMatrix::from_design(
        x,
        2,
        labels.iter().map(|&v| f64::from(v)).collect(),
        weights.to_vec(),
    );
    let mut trace = Trace::default();
    let theta = descend(
        &mut Baseline {
            m: &m,
            l2: params.l2,
        },
        vec![0.0; 2],
        params,
        &mut trace,
    )?;
    let slope = theta[1] / scale;
    Ok((slope, theta[0] - slope * mean))
}
