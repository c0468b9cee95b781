use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{GermanConfig, SimConfig};
use crate::error::{Error, Result};
use crate::inprocess::{AdversaryParams, LogisticParams, MetaFairParams};
use crate::logic::Scenario;
use crate::multistage::{InProcessor, PostProcessor, PreProcessor};
use crate::postprocess::RejectOptionParams;
use crate::preprocess::RepairParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Simulation(SimConfig),
    German(GermanConfig),
}

impl DatasetConfig {
    pub fn replicates(&self) -> usize {
        match self {
            DatasetConfig::Simulation(c) => c.replicates,
            DatasetConfig::German(c) => c.replicates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessorLists {
    pub pre: Vec<PreProcessor>,
    #[serde(rename = "in")]
    pub in_: Vec<InProcessor>,
    pub post: Vec<PostProcessor>,
}

impl Default for ProcessorLists {
    fn default() -> Self {
        Self {
            pre: vec![
                PreProcessor::Reweigh {},
                PreProcessor::DiRemover(RepairParams::default()),
            ],
            in_: vec![
                InProcessor::Adversarial(AdversaryParams::default()),
                InProcessor::Pireg { eta: 1.0 },
                InProcessor::Metafair(MetaFairParams::default()),
            ],
            post: vec![
                PostProcessor::Reject(RejectOptionParams::default()),
                PostProcessor::Eqodds {},
                PostProcessor::Platt {},
            ],
        }
    }
}

impl ProcessorLists {
    /// Processor ids in axis order: pre, then in, then post.
    pub fn ids(&self) -> Vec<&'static str> {
        self.pre
            .iter()
            .map(PreProcessor::id)
            .chain(self.in_.iter().map(InProcessor::id))
            .chain(self.post.iter().map(PostProcessor::id))
            .collect()
    }
}

fn default_scenarios() -> Vec<Scenario> {
    Scenario::ALL.to_vec()
}

fn default_split() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

fn default_true() -> bool {
    true
}

fn default_lp_columns() -> Vec<String> {
    vec!["a1".into(), "a2".into()]
}

fn default_eval_column() -> String {
    "a1".into()
}

fn default_radar() -> String {
    "adversarial+platt".into()
}

/// One experiment: a dataset, the scenarios and processors to cross, and
/// where to write the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub processors: ProcessorLists,
    /// Also run the plain logistic pipeline in every scenario.
    #[serde(default = "default_true")]
    pub include_baseline: bool,
    /// Train, validation and test fractions.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub logistic: LogisticParams,
    #[serde(default = "default_lp_columns")]
    pub lp_columns: Vec<String>,
    #[serde(default = "default_eval_column")]
    pub eval_column: String,
    /// Pipeline whose metrics are written side by side with its parts.
    #[serde(default = "default_radar")]
    pub radar_pair: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Maximum number of pipelines run at once; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetConfig) -> Self {
        Self {
            dataset,
            scenarios: default_scenarios(),
            processors: ProcessorLists::default(),
            include_baseline: true,
            split: default_split(),
            seed: 0,
            logistic: LogisticParams::default(),
            lp_columns: default_lp_columns(),
            eval_column: default_eval_column(),
            radar_pair: default_radar(),
            output: None,
            parallelism: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("at least one scenario is required".into()));
        }
        let mut seen = self.scenarios.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.scenarios.len() {
            return Err(Error::Config("scenarios are listed more than once".into()));
        }
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(*f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {:?} must be positive and sum to 1",
                self.split
            )));
        }
        if self.parallelism == Some(0) {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        let ids = self.processors.ids();
        let mut unique = ids.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != ids.len() {
            return Err(Error::Config(format!(
                "processor ids must be unique, got {ids:?}"
            )));
        }
        if ids.is_empty() && !self.include_baseline {
            return Err(Error::Config("no pipelines to run".into()));
        }
        if self.lp_columns.len() != 2 {
            return Err(Error::Config("lp_columns needs two attributes".into()));
        }
        self.logistic.validate()?;
        match &self.dataset {
            DatasetConfig::Simulation(c) => c.validate()?,
            DatasetConfig::German(c) => {
                if c.replicates == 0 || c.age_cutoff == 0 {
                    return Err(Error::Config(
                        "german replicates and age_cutoff must be positive".into(),
                    ));
                }
            }
        }
        for pre in &self.processors.pre {
            if let PreProcessor::DiRemover(p) = pre {
                p.validate()?;
            }
        }
        for post in &self.processors.post {
            if let PostProcessor::Reject(p) = post {
                p.validate()?;
            }
        }
        Ok(())
    }

    /// The configuration as recorded next to the results: everything that
    /// influences them, without the output location or thread count.
    pub fn resolved(&self) -> Self {
        Self {
            output: None,
            parallelism: None,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg =
            ExperimentConfig::from_toml("[dataset.simulation]\nn = 100\nreplicates = 3\n").unwrap();
        assert_eq!(cfg.scenarios.len(), 4);
        assert_eq!(cfg.processors.ids().len(), 8);
        assert_eq!(cfg.dataset.replicates(), 3);
        assert_eq!(cfg.split, [0.6, 0.2, 0.2]);
    }

    #[test]
    fn unknown_keys_are_errors() {
        for text in [
            "[dataset.simulation]\nn = 100\nbogus = 1\n",
            "colour = 1\n[dataset.simulation]\n",
            "[dataset.simulation]\n[[processors.pre]]\nkind = \"reweigh\"\nextra = 2\n",
            "[dataset.simulation]\n[processors]\nmid = []\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn invalid_values_are_errors() {
        for text in [
            "scenarios = []\n[dataset.simulation]\n",
            "split = [0.5, 0.5, 0.5]\n[dataset.simulation]\n",
            "parallelism = 0\n[dataset.simulation]\n",
            "[dataset.simulation]\nn = 3\n",
            "[dataset.simulation]\n[[processors.post]]\nkind = \"reject\"\ntheta = 0.4\n",
        ] {
            assert!(
                matches!(
                    ExperimentConfig::from_toml(text),
                    Err(Error::Config(_)) | Err(Error::InvalidParameter(_))
                ),
                "{text}"
            );
        }
    }

    #[test]
    fn toml_roundtrip() {
        let mut cfg = ExperimentConfig::new(DatasetConfig::German(GermanConfig::default()));
        cfg.scenarios = vec![Scenario::Single, Scenario::Xor];
        cfg.parallelism = Some(4);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
