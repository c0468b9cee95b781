use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::check_unit_interval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RejectOptionParams {
    /// Rows with `max(p, 1 − p) < theta` are relabeled by group.
    pub theta: f64,
}

impl Default for RejectOptionParams {
    fn default() -> Self {
        Self { theta: 0.6 }
    }
}

impl RejectOptionParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta > 0.5 && self.theta <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "reject-option theta {} outside (0.5, 1]",
                self.theta
            )))
        }
    }
}

/// Inside the critical band the unprivileged group (A=1) gets the positive
/// label and the privileged group the negative one; elsewhere the score is
/// thresholded at 0.5.
pub fn reject_option(
    scores: &[f64],
    sensitive: &[u8],
    params: &RejectOptionParams,
) -> Result<Vec<u8>> {
    params.validate()?;
    check_unit_interval("score", scores)?;
    if scores.len() != sensitive.len() {
        return Err(Error::InvalidDataset(format!(
            "{} scores for {} sensitive values",
            scores.len(),
            sensitive.len()
        )));
    }
    Ok(scores
        .iter()
        .zip(sensitive)
        .map(|(&p, &a)| {
            if p.max(1.0 - p) < params.theta {
                a
            } else {
                u8::from(p > 0.5)
            }
        })
        .collect())
}
