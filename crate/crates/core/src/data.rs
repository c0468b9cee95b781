//! Synthetic credit data and the German credit file.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::logic::{lp_rates, LpRates};

/// Names of the two sensitive columns produced by both loaders.
pub const SENSITIVE: [&str; 2] = ["a1", "a2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    pub replicates: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            seed: 0,
            replicates: 50,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!(
                "simulation needs n >= 10, got {}",
                self.n
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Config(
                "simulation needs at least one replicate".into(),
            ));
        }
        Ok(())
    }
}

// Word budget per (row, variable); a standard normal draw uses far fewer.
const ROW_WORDS: u128 = 64;

enum Var {
    A1,
    A2,
    V1,
    V2,
    E1,
    E2,
    U,
    W,
}

struct RowRng(ChaCha8Rng);

impl RowRng {
    fn at(&mut self, row: usize, var: Var) -> &mut ChaCha8Rng {
        self.0.set_stream(var as u64);
        self.0.set_word_pos(row as u128 * ROW_WORDS);
        &mut self.0
    }

    fn normal(&mut self, row: usize, var: Var, mean: f64) -> f64 {
        mean + self.at(row, var).sample::<f64, _>(StandardNormal)
    }
}

/// Replicate key derived from the run seed; distinct replicates get
/// unrelated ChaCha keys.
fn replicate_seed(seed: u64, replicate: usize) -> [u8; 32] {
    let mut key = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    key.set_stream(replicate as u64);
    key.random()
}

/// One replicate of the simulated population.
///
/// Per row: `a1, a2 ~ Bernoulli(1/2)`, `v_i ~ N(a_i, 1)`, `e_i ~ N(1/2, 1)`,
/// `v = (v1 + v2 + e1 + e2) / 4`, `u, w ~ N(v, 1)`, `y = 1(w > 0)`.
/// Features are `(a1, a2, u)`; the sensitive columns are `a1, a2`.
/// Every draw is addressed by (seed, replicate, row, variable), so the
/// output does not depend on generation order.
pub fn generate_simulation(cfg: &SimConfig, replicate: usize) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = RowRng(ChaCha8Rng::from_seed(replicate_seed(cfg.seed, replicate)));
    let mut features = Vec::with_capacity(cfg.n * 3);
    let mut labels = Vec::with_capacity(cfg.n);
    let mut s1 = Vec::with_capacity(cfg.n);
    let mut s2 = Vec::with_capacity(cfg.n);
    for j in 0..cfg.n {
        let a1 = u8::from(rng.at(j, Var::A1).random::<bool>());
        let a2 = u8::from(rng.at(j, Var::A2).random::<bool>());
        let v1 = rng.normal(j, Var::V1, f64::from(a1));
        let v2 = rng.normal(j, Var::V2, f64::from(a2));
        let e1 = rng.normal(j, Var::E1, 0.5);
        let e2 = rng.normal(j, Var::E2, 0.5);
        let v = (v1 + v2 + e1 + e2) / 4.0;
        let u = rng.normal(j, Var::U, v);
        let w = rng.normal(j, Var::W, v);
        features.extend([f64::from(a1), f64::from(a2), u]);
        labels.push(u8::from(w > 0.0));
        s1.push(a1);
        s2.push(a2);
    }
    Dataset::from_flat(
        features,
        vec!["a1".into(), "a2".into(), "u".into()],
        labels,
        vec![(SENSITIVE[0].into(), s1), (SENSITIVE[1].into(), s2)],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GermanEncoding {
    /// One column per level that occurs in the file, in codebook order.
    #[default]
    ObservedLevels,
    /// One column per codebook level, including levels absent from the file.
    AllLevels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GermanConfig {
    pub path: PathBuf,
    /// Applicants with age at most this value form the unprivileged group.
    pub age_cutoff: u32,
    pub encoding: GermanEncoding,
    pub replicates: usize,
}

impl Default for GermanConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/german.data"),
            age_cutoff: 25,
            encoding: GermanEncoding::default(),
            replicates: 1,
        }
    }
}

enum Field {
    Numeric(&'static str),
    Categorical(&'static str, &'static [&'static str]),
}

/// The 20 attributes of `german.data`, in file order.
const CODEBOOK: [Field; 20] = [
    Field::Categorical("checking_status", &["A11", "A12", "A13", "A14"]),
    Field::Numeric("duration"),
    Field::Categorical("credit_history", &["A30", "A31", "A32", "A33", "A34"]),
    Field::Categorical(
        "purpose",
        &[
            "A40", "A41", "A42", "A43", "A44", "A45", "A46", "A47", "A48", "A49", "A410",
        ],
    ),
    Field::Numeric("credit_amount"),
    Field::Categorical("savings", &["A61", "A62", "A63", "A64", "A65"]),
    Field::Categorical("employment", &["A71", "A72", "A73", "A74", "A75"]),
    Field::Numeric("installment_rate"),
    Field::Categorical("personal_status", &["A91", "A92", "A93", "A94", "A95"]),
    Field::Categorical("other_debtors", &["A101", "A102", "A103"]),
    Field::Numeric("residence_since"),
    Field::Categorical("property", &["A121", "A122", "A123", "A124"]),
    Field::Numeric("age"),
    Field::Categorical("other_installment_plans", &["A141", "A142", "A143"]),
    Field::Categorical("housing", &["A151", "A152", "A153"]),
    Field::Numeric("existing_credits"),
    Field::Categorical("job", &["A171", "A172", "A173", "A174"]),
    Field::Numeric("people_liable"),
    Field::Categorical("telephone", &["A191", "A192"]),
    Field::Categorical("foreign_worker", &["A201", "A202"]),
];

const AGE_FIELD: usize = 12;
const SEX_FIELD: usize = 8;
/// Personal-status codes denoting women.
pub const FEMALE_CODES: [&str; 2] = ["A92", "A95"];

/// Parses `german.data`. Label 1 is good credit (file outcome 1); `a1` marks
/// age at most the cutoff and `a2` marks women.
pub fn load_german(cfg: &GermanConfig) -> Result<Dataset> {
    if cfg.age_cutoff == 0 {
        return Err(Error::Config("age cutoff must be positive".into()));
    }
    let text = std::fs::read_to_string(&cfg.path)?;
    parse_german(&text, cfg)
}

pub fn parse_german(text: &str, cfg: &GermanConfig) -> Result<Dataset> {
    // (field index, level index) per parsed row, numeric values alongside
    let mut codes: Vec<Vec<usize>> = Vec::new();
    let mut numerics: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut young = Vec::new();
    let mut female = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Malformed { row, message };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 21 {
            return Err(bad(format!("expected 21 fields, found {}", tokens.len())));
        }
        let mut row_codes = Vec::new();
        let mut row_nums = Vec::new();
        for (field, token) in CODEBOOK.iter().zip(&tokens) {
            match field {
                Field::Numeric(name) => {
                    let v: f64 = token
                        .parse()
                        .map_err(|_| bad(format!("{name}: not a number: {token}")))?;
                    row_nums.push(v);
                }
                Field::Categorical(name, levels) => {
                    let k = levels
                        .iter()
                        .position(|l| l == token)
                        .ok_or_else(|| bad(format!("{name}: unknown code {token}")))?;
                    row_codes.push(k);
                }
            }
        }
        let age: f64 = tokens[AGE_FIELD].parse().unwrap();
        young.push(u8::from(age <= f64::from(cfg.age_cutoff)));
        female.push(u8::from(FEMALE_CODES.contains(&tokens[SEX_FIELD])));
        labels.push(match tokens[20] {
            "1" => 1,
            "2" => 0,
            other => return Err(bad(format!("outcome must be 1 or 2, found {other}"))),
        });
        codes.push(row_codes);
        numerics.push(row_nums);
    }
    if labels.is_empty() {
        return Err(Error::InvalidDataset("german file has no rows".into()));
    }

    // Columns in file order: numeric values pass through, categorical
    // attributes expand to one indicator per retained level.
    let mut names = Vec::new();
    let mut extractors: Vec<(bool, usize, usize)> = Vec::new(); // (numeric, slot, level)
    let (mut cat_slot, mut num_slot) = (0, 0);
    for field in &CODEBOOK {
        match field {
            Field::Numeric(name) => {
                names.push((*name).to_string());
                extractors.push((true, num_slot, 0));
                num_slot += 1;
            }
            Field::Categorical(name, levels) => {
                for (k, level) in levels.iter().enumerate() {
                    let seen = codes.iter().any(|c| c[cat_slot] == k);
                    if seen || cfg.encoding == GermanEncoding::AllLevels {
                        names.push(format!("{name}={level}"));
                        extractors.push((false, cat_slot, k));
                    }
                }
                cat_slot += 1;
            }
        }
    }
    let mut features = Vec::with_capacity(labels.len() * names.len());
    for (c, v) in codes.iter().zip(&numerics) {
        for &(numeric, slot, level) in &extractors {
            features.push(if numeric {
                v[slot]
            } else {
                f64::from(u8::from(c[slot] == level))
            });
        }
    }
    Dataset::from_flat(
        features,
        names,
        labels,
        vec![(SENSITIVE[0].into(), young), (SENSITIVE[1].into(), female)],
    )
}

/// Published summary values for the German file, for side-by-side reports.
pub const GERMAN_REFERENCE: GermanSummary = GermanSummary {
    rows: 1000,
    features: 61,
    default_rate: 0.30,
    a1_rate: 0.15,
    a2_rate: 0.19,
    or_rate: 0.39,
    and_rate: 0.11,
    xor_rate: 0.29,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GermanSummary {
    pub rows: usize,
    pub features: usize,
    pub default_rate: f64,
    pub a1_rate: f64,
    pub a2_rate: f64,
    pub or_rate: f64,
    pub and_rate: f64,
    pub xor_rate: f64,
}

impl GermanSummary {
    pub fn measure(data: &Dataset) -> Result<Self> {
        let rates: LpRates = lp_rates(data, &SENSITIVE)?;
        let defaults = data.labels().iter().filter(|&&y| y == 0).count();
        Ok(Self {
            rows: data.n_rows(),
            features: data.n_features(),
            default_rate: defaults as f64 / data.n_rows() as f64,
            a1_rate: rates.first_rate(),
            a2_rate: rates.second_rate(),
            or_rate: rates.or_rate(),
            and_rate: rates.and_rate(),
            xor_rate: rates.xor_rate(),
        })
    }
}
