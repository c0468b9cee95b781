//! Logical processors: collapse several binary sensitive attributes into one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicalProcessor {
    Identity,
    Or,
    And,
    Xor,
    /// Truth table over k inputs. Entry `i` is the output for the input
    /// combination whose bit `j` (least significant first) is column `j`.
    Custom {
        table: Vec<u8>,
    },
}

impl LogicalProcessor {
    /// Name of the sensitive column that [`apply_lp`] appends.
    pub fn column_name(&self) -> &'static str {
        match self {
            LogicalProcessor::Identity => "identity",
            LogicalProcessor::Or => "or",
            LogicalProcessor::And => "and",
            LogicalProcessor::Xor => "xor",
            LogicalProcessor::Custom { .. } => "custom",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            LogicalProcessor::Identity => Some(1),
            LogicalProcessor::Or | LogicalProcessor::And | LogicalProcessor::Xor => Some(2),
            LogicalProcessor::Custom { .. } => None,
        }
    }

    pub fn eval(&self, inputs: &[u8]) -> u8 {
        match self {
            LogicalProcessor::Identity => inputs[0],
            LogicalProcessor::Or => inputs[0] | inputs[1],
            LogicalProcessor::And => inputs[0] & inputs[1],
            LogicalProcessor::Xor => inputs[0] ^ inputs[1],
            LogicalProcessor::Custom { table } => {
                let idx = inputs
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (j, &b)| acc | ((b as usize) << j));
                table[idx]
            }
        }
    }
}

/// Experimental scenario: one sensitive variable, or two combined by a
/// logical processor. Parses from `single|none|or|and|xor`.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Single,
    Or,
    And,
    Xor,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Single, Scenario::Or, Scenario::And, Scenario::Xor];

    pub fn processor(self) -> Option<LogicalProcessor> {
        match self {
            Scenario::Single => None,
            Scenario::Or => Some(LogicalProcessor::Or),
            Scenario::And => Some(LogicalProcessor::And),
            Scenario::Xor => Some(LogicalProcessor::Xor),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Single => "single",
            Scenario::Or => "or",
            Scenario::And => "and",
            Scenario::Xor => "xor",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "none" => Ok(Scenario::Single),
            "or" => Ok(Scenario::Or),
            "and" => Ok(Scenario::And),
            "xor" => Ok(Scenario::Xor),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected single|none|or|and|xor)"
            ))),
        }
    }
}

fn input_columns<'a>(
    lp: &LogicalProcessor,
    data: &'a Dataset,
    columns: &[&str],
) -> Result<Vec<&'a [u8]>> {
    match lp {
        LogicalProcessor::Custom { table } => {
            if columns.is_empty() || table.len() != 1usize << columns.len() {
                return Err(Error::InvalidParameter(format!(
                    "truth table has {} entries, expected 2^{}",
                    table.len(),
                    columns.len()
                )));
            }
            if table.iter().any(|&v| v > 1) {
                return Err(Error::InvalidParameter(
                    "truth table outputs must be 0/1".into(),
                ));
            }
        }
        _ => {
            let k = lp.arity().unwrap();
            if columns.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "{} takes {k} column(s), got {}",
                    lp.column_name(),
                    columns.len()
                )));
            }
        }
    }
    columns.iter().map(|c| data.sensitive(c)).collect()
}

/// Appends the combined attribute as a sensitive column named
/// [`LogicalProcessor::column_name`]; the input columns are kept.
pub fn apply_lp(lp: &LogicalProcessor, data: &Dataset, columns: &[&str]) -> Result<Dataset> {
    let inputs = input_columns(lp, data, columns)?;
    let mut buf = vec![0u8; inputs.len()];
    let combined = (0..data.n_rows())
        .map(|i| {
            for (b, col) in buf.iter_mut().zip(&inputs) {
                *b = col[i];
            }
            lp.eval(&buf)
        })
        .collect();
    data.clone().with_sensitive(lp.column_name(), combined)
}

/// Counts of rows with each combined attribute equal to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LpRates {
    pub n: usize,
    pub first: usize,
    pub second: usize,
    pub or: usize,
    pub and: usize,
    pub xor: usize,
}

impl LpRates {
    fn rate(&self, count: usize) -> f64 {
        count as f64 / self.n as f64
    }
    pub fn first_rate(&self) -> f64 {
        self.rate(self.first)
    }
    pub fn second_rate(&self) -> f64 {
        self.rate(self.second)
    }
    pub fn or_rate(&self) -> f64 {
        self.rate(self.or)
    }
    pub fn and_rate(&self) -> f64 {
        self.rate(self.and)
    }
    pub fn xor_rate(&self) -> f64 {
        self.rate(self.xor)
    }
}

pub fn lp_rates(data: &Dataset, columns: &[&str]) -> Result<LpRates> {
    let inputs = input_columns(&LogicalProcessor::Or, data, columns)?;
    let (a1, a2) = (inputs[0], inputs[1]);
    let mut r = LpRates {
        n: data.n_rows(),
        first: 0,
        second: 0,
        or: 0,
        and: 0,
        xor: 0,
    };
    for (&x, &y) in a1.iter().zip(a2) {
        r.first += x as usize;
        r.second += y as usize;
        r.or += (x | y) as usize;
        r.and += (x & y) as usize;
        r.xor += (x ^ y) as usize;
    }
    Ok(r)
}
