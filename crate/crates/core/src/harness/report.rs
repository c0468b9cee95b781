//! Result files: heatmap matrices, graph node/edge lists, per-replicate
//! values, radar tables, Pareto fronts, summaries and run metadata.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{Aggregate, ExperimentResults};
use super::pareto::{pareto_frontier, ParetoPoint};
use crate::error::{Error, Result};
use crate::logic::Scenario;
use crate::multistage::{Composition, METRICS};

const NA: &str = "NA";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |v| v.to_string())
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    if s == NA {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::InvalidDataset(format!("not a number: {s}")))
}

/// Frontier points for one scenario: pipelines with defined accuracy and SP.
pub fn pareto_points<'a>(aggregates: impl IntoIterator<Item = &'a Aggregate>) -> Vec<ParetoPoint> {
    aggregates
        .into_iter()
        .filter_map(|a| {
            Some(ParetoPoint {
                pipeline: a.pipeline.clone(),
                accuracy: a.metric("accuracy")?,
                sp: a.metric("sp")?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub source: String,
    pub target: String,
    pub pipeline: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub metric: String,
    pub scenario: Scenario,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub scenario: Scenario,
    pub pipeline: String,
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub package_version: String,
    pub config: ExperimentConfig,
    pub pipelines: BTreeMap<Scenario, Vec<String>>,
    pub design: BTreeMap<String, String>,
    pub failures: Vec<FailedRun>,
}

/// Fixed modelling choices recorded with every run.
pub fn design_flags() -> BTreeMap<String, String> {
    [
        ("aggregation", "lower median over replicates"),
        ("decision_rule", "predict 1 iff score > threshold"),
        (
            "threshold_selection",
            "max validation balanced accuracy, smallest threshold on ties",
        ),
        ("threshold_selection_column", "processing column"),
        ("metrics_column", "eval_column"),
        (
            "sp_definition",
            "half the absolute sum of signed FPR and FNR gaps",
        ),
        ("reweighing", "exact weights in the likelihood"),
        (
            "di_interpolation",
            "value-space interpolation of quantile functions",
        ),
        (
            "di_transform",
            "repairer fitted on train applied to validation and test",
        ),
        (
            "post_input",
            "scores recentred so the selected threshold maps to 0.5",
        ),
        ("post_fit_split", "validation"),
        ("eqodds_form", "derived from thresholded predictions"),
        ("platt_decision", "calibrated probability > 0.5"),
        ("metafair_form", "group thresholds on a logistic score"),
        ("pireg_gradient", "log ratios frozen within an epoch"),
        ("german_encoding", "one-hot of categorical attributes"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Writes every result file into `out_dir` and returns their paths.
pub fn emit_reports(results: &ExperimentResults, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let cfg = &results.config;
    let ids = cfg.processors.ids();
    let stage_of = |id: &str| -> usize {
        let p = &cfg.processors;
        let k = ids.iter().position(|x| *x == id).unwrap();
        usize::from(k >= p.pre.len()) + usize::from(k >= p.pre.len() + p.in_.len())
    };

    for &(scenario, _) in &results.specs {
        let by_id: BTreeMap<&str, &Aggregate> = results
            .aggregates_for(scenario)
            .map(|a| (a.pipeline.as_str(), a))
            .collect();
        let lookup = |id: &str, m: &str| by_id.get(id).and_then(|a| a.metric(m));
        let pair_id = |i: &str, j: &str| -> Option<String> {
            let (si, sj) = (stage_of(i), stage_of(j));
            match si.cmp(&sj) {
                std::cmp::Ordering::Less => Some(format!("{i}+{j}")),
                std::cmp::Ordering::Greater => Some(format!("{j}+{i}")),
                std::cmp::Ordering::Equal => None,
            }
        };

        for metric in METRICS {
            let path = out_dir.join(format!("matrix_{metric}_{scenario}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(std::iter::once("method").chain(ids.iter().copied()))?;
            for &i in &ids {
                let mut row = vec![i.to_string()];
                for &j in &ids {
                    row.push(if i == j {
                        cell(lookup(i, metric))
                    } else {
                        match pair_id(i, j) {
                            Some(p) if by_id.contains_key(p.as_str()) => cell(lookup(&p, metric)),
                            _ => String::new(),
                        }
                    });
                }
                w.write_record(&row)?;
            }
            w.flush()?;
            written.push(path);

            let mut edges = Vec::new();
            for (a, &i) in ids.iter().enumerate() {
                for &j in &ids[a + 1..] {
                    if let Some(p) = pair_id(i, j).filter(|p| by_id.contains_key(p.as_str())) {
                        edges.push(GraphEdge {
                            source: i.to_string(),
                            target: j.to_string(),
                            value: lookup(&p, metric),
                            pipeline: p,
                        });
                    }
                }
            }
            let graph = Graph {
                metric: metric.to_string(),
                scenario,
                nodes: ids
                    .iter()
                    .map(|&i| GraphNode {
                        id: i.to_string(),
                        value: lookup(i, metric),
                    })
                    .collect(),
                edges,
            };
            let path = out_dir.join(format!("graph_{metric}_{scenario}.json"));
            serde_json::to_writer_pretty(File::create(&path)?, &graph)?;
            written.push(path);
        }

        let path = out_dir.join(format!("replicates_{scenario}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["scenario", "pipeline", "replicate", "metric", "value"])?;
        for run in results.runs.iter().filter(|r| r.scenario == scenario) {
            for metric in METRICS {
                let value = run.report.as_ref().and_then(|r| r.metric(metric));
                w.write_record([
                    scenario.as_str(),
                    &run.pipeline,
                    &run.replicate.to_string(),
                    metric,
                    &cell(value),
                ])?;
            }
        }
        w.flush()?;
        written.push(path);

        if by_id.contains_key(cfg.radar_pair.as_str()) {
            let path = out_dir.join(format!("radar_{}_{scenario}.csv", cfg.radar_pair));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(std::iter::once("pipeline").chain(METRICS))?;
            let members = std::iter::once(cfg.radar_pair.as_str()).chain(cfg.radar_pair.split('+'));
            for id in members {
                let row: Vec<String> = std::iter::once(id.to_string())
                    .chain(METRICS.iter().map(|m| cell(lookup(id, m))))
                    .collect();
                w.write_record(&row)?;
            }
            w.flush()?;
            written.push(path);
        }

        let front = pareto_frontier(&pareto_points(results.aggregates_for(scenario)));
        let path = out_dir.join(format!("pareto_{scenario}.csv"));
        write_pareto(&path, &front)?;
        written.push(path);

        let path = out_dir.join(format!("summary_{scenario}.csv"));
        write_summary(&path, results.aggregates_for(scenario))?;
        written.push(path);
    }

    let metadata = RunMetadata {
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.resolved(),
        pipelines: results
            .specs
            .iter()
            .map(|(s, list)| (*s, list.iter().map(|p| p.id()).collect()))
            .collect(),
        design: design_flags(),
        failures: results
            .runs
            .iter()
            .filter_map(|r| {
                Some(FailedRun {
                    scenario: r.scenario,
                    pipeline: r.pipeline.clone(),
                    replicate: r.replicate,
                    error: r.error.clone()?,
                })
            })
            .collect(),
    };
    let path = out_dir.join("run_metadata.json");
    serde_json::to_writer_pretty(File::create(&path)?, &metadata)?;
    written.push(path);
    Ok(written)
}

const SUMMARY_FIXED: [&str; 5] = ["scenario", "pipeline", "composition", "runs", "failures"];

fn summary_metrics() -> Vec<&'static str> {
    METRICS.iter().copied().chain(["sp_abs"]).collect()
}

pub fn write_summary<'a>(
    path: &Path,
    aggregates: impl IntoIterator<Item = &'a Aggregate>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_FIXED.iter().copied().chain(summary_metrics()))?;
    for a in aggregates {
        let composition = serde_json::to_value(a.composition)?;
        let mut row = vec![
            a.scenario.as_str().to_string(),
            a.pipeline.clone(),
            composition.as_str().unwrap_or_default().to_string(),
            a.runs.to_string(),
            a.failures.to_string(),
        ];
        row.extend(summary_metrics().iter().map(|m| cell(a.metric(m))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<Aggregate>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let expected: Vec<&str> = SUMMARY_FIXED
        .iter()
        .copied()
        .chain(summary_metrics())
        .collect();
    if header != expected {
        return Err(Error::InvalidDataset(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |what: &str| Error::InvalidDataset(format!("{}: bad {what}", path.display()));
        let scenario: Scenario = rec[0].parse()?;
        let composition: Composition =
            serde_json::from_value(serde_json::Value::String(rec[2].to_string()))
                .map_err(|_| bad("composition"))?;
        let mut metrics = BTreeMap::new();
        for (k, m) in summary_metrics().into_iter().enumerate() {
            metrics.insert(m.to_string(), parse_cell(&rec[SUMMARY_FIXED.len() + k])?);
        }
        out.push(Aggregate {
            scenario,
            pipeline: rec[1].to_string(),
            composition,
            runs: rec[3].parse().map_err(|_| bad("runs"))?,
            failures: rec[4].parse().map_err(|_| bad("failures"))?,
            metrics,
        });
    }
    Ok(out)
}

pub fn write_pareto(path: &Path, front: &[ParetoPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["pipeline", "accuracy", "sp"])?;
    for p in front {
        w.write_record([p.pipeline.clone(), p.accuracy.to_string(), p.sp.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pareto(path: &Path) -> Result<Vec<ParetoPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                Error::InvalidDataset(format!("{}: not a number: {s}", path.display()))
            })
        };
        out.push(ParetoPoint {
            pipeline: rec[0].to_string(),
            accuracy: num(&rec[1])?,
            sp: num(&rec[2])?,
        });
    }
    Ok(out)
}

/// Parses a matrix file into its axis labels and cells; `None` marks a
/// structurally absent cell, `Some(None)` an undefined value.
#[allow(clippy::type_complexity)]
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<Option<f64>>>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let labels: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(
            rec.iter()
                .skip(1)
                .map(|s| {
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        parse_cell(s).map(Some)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((labels, rows))
}

pub fn read_metadata(dir: &Path) -> Result<RunMetadata> {
    Ok(serde_json::from_reader(File::open(
        dir.join("run_metadata.json"),
    )?)?)
}

/// Scenarios with a summary file in `dir`, in scenario order.
pub fn summary_scenarios(dir: &Path) -> Result<Vec<Scenario>> {
    let mut found = Vec::new();
    for s in Scenario::ALL {
        if dir.join(format!("summary_{s}.csv")).is_file() {
            found.push(s);
        }
    }
    if found.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "no summary files in {}",
            dir.display()
        )));
    }
    Ok(found)
}
