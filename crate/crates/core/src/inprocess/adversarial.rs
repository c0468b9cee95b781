//! Adversarial debiasing with a logistic classifier and a logistic adversary.
//!
//! Each epoch the adversary takes one gradient step at predicting the
//! sensitive attribute from the classifier output (and the label, in
//! separation mode). The classifier then moves along
//! `g − proj_h(g) − α_t·h`, where `g` is the gradient of its own loss and `h`
//! the gradient of the adversary loss with respect to the classifier weights.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::engine::{
    baseline_gradient, check_features, sigmoid, softplus, LogisticParams, LogisticScorer,
    Standardizer, TrainingMatrix,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{ScoreModel, Threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryInputs {
    /// Predicted probability only (targets independence).
    PredictionOnly,
    /// Predicted probability and true label (targets separation).
    PredictionAndLabel,
}

impl AdversaryInputs {
    fn width(self) -> usize {
        match self {
            AdversaryInputs::PredictionOnly => 2,
            AdversaryInputs::PredictionAndLabel => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversaryParams {
    pub alpha: f64,
    /// Use α_t = α/√t at epoch t.
    pub decay: bool,
    /// Remove the component of the classifier gradient along the adversary
    /// gradient.
    pub project: bool,
    pub inputs: AdversaryInputs,
    /// Standard deviation of the adversary's random initial weights.
    pub init_scale: f64,
}

impl Default for AdversaryParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            decay: true,
            project: true,
            inputs: AdversaryInputs::PredictionAndLabel,
            init_scale: 0.01,
        }
    }
}

/// Adversary loss and its gradients.
#[derive(Debug, Clone)]
pub struct AdversaryLoss {
    pub loss: f64,
    /// With respect to the classifier parameters.
    pub grad_classifier: Vec<f64>,
    /// With respect to the adversary parameters `[bias, w_prob, (w_label)]`.
    pub grad_adversary: Vec<f64>,
}

fn adversary_input(adversary: &[f64], p: f64, y: f64, inputs: AdversaryInputs) -> f64 {
    let s = adversary[0] + adversary[1] * p;
    match inputs {
        AdversaryInputs::PredictionOnly => s,
        AdversaryInputs::PredictionAndLabel => s + adversary[2] * y,
    }
}

/// Adversary gradients `(classifier, adversary)` given classifier
/// probabilities.
fn adversary_gradients(
    m: &TrainingMatrix,
    probs: &[f64],
    adversary: &[f64],
    groups: &[f64],
    inputs: AdversaryInputs,
) -> (Vec<f64>, Vec<f64>) {
    let mut grad_classifier = vec![0.0; m.p];
    let mut grad_adversary = vec![0.0; adversary.len()];
    for (i, &p) in probs.iter().enumerate() {
        let s = adversary_input(adversary, p, m.y[i], inputs);
        let r = m.w[i] * (sigmoid(s) - groups[i]);
        grad_adversary[0] += r;
        grad_adversary[1] += r * p;
        if inputs == AdversaryInputs::PredictionAndLabel {
            grad_adversary[2] += r * m.y[i];
        }
        let back = r * adversary[1] * p * (1.0 - p);
        for (g, x) in grad_classifier.iter_mut().zip(m.row(i)) {
            *g += back * x;
        }
    }
    (grad_classifier, grad_adversary)
}

/// Weighted cross-entropy of the adversary predicting `groups` from the
/// classifier probability (and label).
pub fn adversary_objective(
    m: &TrainingMatrix,
    theta: &[f64],
    adversary: &[f64],
    groups: &[f64],
    inputs: AdversaryInputs,
) -> AdversaryLoss {
    let probs = m.probabilities(theta);
    let loss = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let s = adversary_input(adversary, p, m.y[i], inputs);
            m.w[i] * (softplus(s) - groups[i] * s)
        })
        .sum();
    let (grad_classifier, grad_adversary) =
        adversary_gradients(m, &probs, adversary, groups, inputs);
    AdversaryLoss {
        loss,
        grad_classifier,
        grad_adversary,
    }
}

/// `g − proj_h(g) − α·h`, with the projection taken as zero when ‖h‖ < 1e-12
/// or when `project` is false.
pub fn debiased_direction(g: &[f64], h: &[f64], alpha: f64, project: bool) -> Vec<f64> {
    let hh: f64 = h.iter().map(|v| v * v).sum();
    let coef = if project && hh.sqrt() >= 1e-12 {
        g.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / hh
    } else {
        0.0
    };
    g.iter()
        .zip(h)
        .map(|(gi, hi)| gi - coef * hi - alpha * hi)
        .collect()
}

/// One classifier update, kept for inspection.
#[derive(Debug, Clone)]
pub struct AdversarialStep {
    pub grad_classifier: Vec<f64>,
    pub grad_adversary: Vec<f64>,
    pub alpha: f64,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct AdversarialTrace {
    /// Classifier parameters, starting with the initial ones.
    pub thetas: Vec<Vec<f64>>,
    pub steps: Vec<AdversarialStep>,
    pub adversary: Vec<f64>,
}

pub fn train_adversarial_traced(
    train: &Dataset,
    column: &str,
    clf: &LogisticParams,
    adv: &AdversaryParams,
    seed: u64,
) -> Result<(ScoreModel, AdversarialTrace)> {
    clf.validate()?;
    if !(adv.alpha >= 0.0 && adv.alpha.is_finite()) || adv.init_scale < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "bad adversary parameters {adv:?}"
        )));
    }
    check_features(train)?;
    let groups: Vec<f64> = train
        .sensitive(column)?
        .iter()
        .map(|&a| f64::from(a))
        .collect();
    let standardizer = Standardizer::fit(train);
    let m = TrainingMatrix::new(train, &standardizer)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Normal::new(0.0, adv.init_scale.max(f64::MIN_POSITIVE)).unwrap();
    let mut adversary: Vec<f64> = (0..adv.inputs.width())
        .map(|_| init.sample(&mut rng))
        .collect();
    let mut theta = vec![0.0; m.p];
    let lr = clf.learning_rate;

    let mut trace = AdversarialTrace {
        thetas: vec![theta.clone()],
        ..Default::default()
    };
    for t in 1..=clf.max_epochs {
        let probs = m.probabilities(&theta);
        let (_, grad_adversary) = adversary_gradients(&m, &probs, &adversary, &groups, adv.inputs);
        for (w, g) in adversary.iter_mut().zip(&grad_adversary) {
            *w -= lr * g;
        }
        let g = baseline_gradient(&m, &probs, &theta, clf.l2);
        let (h, _) = adversary_gradients(&m, &probs, &adversary, &groups, adv.inputs);
        let alpha = if adv.decay {
            adv.alpha / (t as f64).sqrt()
        } else {
            adv.alpha
        };
        let direction = debiased_direction(&g, &h, alpha, adv.project);
        for (th, d) in theta.iter_mut().zip(&direction) {
            *th -= lr * d;
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("classifier weights at epoch {t}")));
        }
        trace.thetas.push(theta.clone());
        trace.steps.push(AdversarialStep {
            grad_classifier: g,
            grad_adversary: h,
            alpha,
            direction,
        });
    }
    trace.adversary = adversary;
    let scorer = LogisticScorer {
        standardizer,
        theta,
    };
    let model = ScoreModel::new(Arc::new(scorer), Threshold::global(0.5), "adversarial")
        .with_flag("adversary_inputs", format!("{:?}", adv.inputs));
    Ok((model, trace))
}

pub fn train_adversarial(
    train: &Dataset,
    column: &str,
    clf: &LogisticParams,
    adv: &AdversaryParams,
    seed: u64,
) -> Result<ScoreModel> {
    train_adversarial_traced(train, column, clf, adv, seed).map(|(m, _)| m)
}
