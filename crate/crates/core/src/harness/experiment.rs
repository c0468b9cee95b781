use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, ExperimentConfig};
use crate::data::{generate_simulation, load_german};
use crate::dataset::{split, Dataset};
use crate::error::{Error, Result};
use crate::logic::Scenario;
use crate::multistage::{
    enumerate_grid, run_pipeline, Composition, EvaluationReport, PipelineSpec, METRICS,
};

/// Seed for replicate `r` derived from the experiment seed.
pub fn derive_seed(seed: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64 + 1);
    rng.next_u64()
}

/// Lower median of the values; `None` when empty.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(v[(v.len() - 1) / 2])
}

/// The pipelines run in one scenario, baseline first when enabled.
pub fn scenario_specs(cfg: &ExperimentConfig, scenario: Scenario) -> Vec<PipelineSpec> {
    let template = PipelineSpec {
        scenario,
        lp_columns: cfg.lp_columns.clone(),
        logistic: cfg.logistic.clone(),
        seed: cfg.seed,
        eval_column: cfg.eval_column.clone(),
        ..Default::default()
    };
    let mut specs = Vec::new();
    if cfg.include_baseline {
        specs.push(template.clone());
    }
    let p = &cfg.processors;
    specs.extend(enumerate_grid(
        &template,
        &p.pre,
        &p.in_,
        &p.post,
        &[scenario],
    ));
    specs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub pipeline: String,
    pub replicate: usize,
    pub report: Option<EvaluationReport>,
    pub error: Option<String>,
}

/// Replicate medians for one pipeline in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: Scenario,
    pub pipeline: String,
    pub composition: Composition,
    pub runs: usize,
    pub failures: usize,
    pub metrics: BTreeMap<String, Option<f64>>,
}

impl Aggregate {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub specs: Vec<(Scenario, Vec<PipelineSpec>)>,
    /// Ordered by scenario, then pipeline, then replicate.
    pub runs: Vec<RunRecord>,
    /// Ordered by scenario, then pipeline.
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResults {
    pub fn aggregates_for(&self, scenario: Scenario) -> impl Iterator<Item = &Aggregate> {
        self.aggregates
            .iter()
            .filter(move |a| a.scenario == scenario)
    }

    pub fn aggregate(&self, scenario: Scenario, pipeline: &str) -> Option<&Aggregate> {
        self.aggregates_for(scenario)
            .find(|a| a.pipeline == pipeline)
    }
}

fn load_replicate(
    cfg: &ExperimentConfig,
    base: Option<&Dataset>,
    r: usize,
) -> Result<[Dataset; 3]> {
    let data = match (&cfg.dataset, base) {
        (DatasetConfig::Simulation(sim), _) => generate_simulation(sim, r)?,
        (DatasetConfig::German(_), Some(d)) => d.clone(),
        (DatasetConfig::German(_), None) => unreachable!("german data is loaded up front"),
    };
    let (train, val, test) = split(&data, cfg.split, derive_seed(cfg.seed, r))?;
    Ok([train, val, test])
}

/// Runs every pipeline of every scenario on every replicate. A failing
/// pipeline is recorded in its cell and does not stop the others; dataset
/// and configuration problems abort the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.unwrap_or(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let base = match &cfg.dataset {
        DatasetConfig::German(g) => Some(load_german(g)?),
        DatasetConfig::Simulation(_) => None,
    };
    let replicates = cfg.dataset.replicates();
    let specs: Vec<(Scenario, Vec<PipelineSpec>)> = cfg
        .scenarios
        .iter()
        .map(|&s| (s, scenario_specs(cfg, s)))
        .collect();

    let tasks: Vec<(usize, usize, usize)> = specs
        .iter()
        .enumerate()
        .flat_map(|(si, (_, list))| {
            (0..list.len()).flat_map(move |pi| (0..replicates).map(move |r| (si, pi, r)))
        })
        .collect();

    let runs = pool.install(|| -> Result<Vec<RunRecord>> {
        let splits: Vec<[Dataset; 3]> = (0..replicates)
            .into_par_iter()
            .map(|r| load_replicate(cfg, base.as_ref(), r))
            .collect::<Result<_>>()?;
        Ok(tasks
            .par_iter()
            .map(|&(si, pi, r)| {
                let (scenario, list) = &specs[si];
                let spec = PipelineSpec {
                    seed: derive_seed(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, r),
                    ..list[pi].clone()
                };
                let [train, val, test] = &splits[r];
                let outcome = run_pipeline(&spec, train, val, test);
                RunRecord {
                    scenario: *scenario,
                    pipeline: spec.id(),
                    replicate: r,
                    error: outcome.as_ref().err().map(ToString::to_string),
                    report: outcome.ok(),
                }
            })
            .collect())
    })?;

    let mut aggregates = Vec::new();
    for (si, (scenario, list)) in specs.iter().enumerate() {
        let offset: usize = specs[..si].iter().map(|(_, l)| l.len() * replicates).sum();
        for (pi, spec) in list.iter().enumerate() {
            let cell = &runs[offset + pi * replicates..offset + (pi + 1) * replicates];
            let reports: Vec<&EvaluationReport> =
                cell.iter().filter_map(|r| r.report.as_ref()).collect();
            let metrics = METRICS
                .iter()
                .chain(&["sp_abs"])
                .map(|m| {
                    let values: Vec<f64> = reports.iter().filter_map(|r| r.metric(m)).collect();
                    (m.to_string(), lower_median(&values))
                })
                .collect();
            aggregates.push(Aggregate {
                scenario: *scenario,
                pipeline: spec.id(),
                composition: spec.composition()?,
                runs: reports.len(),
                failures: cell.len() - reports.len(),
                metrics,
            });
        }
    }
    Ok(ExperimentResults {
        config: cfg.clone(),
        specs,
        runs,
        aggregates,
    })
}
