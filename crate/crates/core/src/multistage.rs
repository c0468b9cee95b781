//! Pipelines composing at most one processor per stage.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::inprocess::{
    train_adversarial, train_logistic, train_metafair, train_pi_regularized, AdversaryParams,
    LogisticParams, MetaFairParams,
};
use crate::logic::{apply_lp, Scenario};
use crate::metrics::{select_threshold, GroupConfusion};
use crate::model::{ScoreModel, Threshold};
use crate::postprocess::{
    apply_eq_odds, apply_group_platt, fit_eq_odds, fit_group_platt, recenter, reject_option,
    RejectOptionParams,
};
use crate::preprocess::{di_remove, reweigh, RepairParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreProcessor {
    Reweigh {},
    DiRemover(RepairParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InProcessor {
    Adversarial(AdversaryParams),
    Pireg {
        #[serde(default = "default_eta")]
        eta: f64,
    },
    Metafair(MetaFairParams),
}

fn default_eta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PostProcessor {
    Reject(RejectOptionParams),
    Eqodds {},
    Platt {},
}

impl PreProcessor {
    pub fn id(&self) -> &'static str {
        match self {
            PreProcessor::Reweigh {} => "reweigh",
            PreProcessor::DiRemover(_) => "di",
        }
    }
}

impl InProcessor {
    pub fn id(&self) -> &'static str {
        match self {
            InProcessor::Adversarial(_) => "adversarial",
            InProcessor::Pireg { .. } => "pireg",
            InProcessor::Metafair(_) => "metafair",
        }
    }
}

impl PostProcessor {
    pub fn id(&self) -> &'static str {
        match self {
            PostProcessor::Reject(_) => "reject",
            PostProcessor::Eqodds {} => "eqodds",
            PostProcessor::Platt {} => "platt",
        }
    }
}

/// How a spec combines stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    Baseline,
    Pre,
    In,
    Post,
    /// pre + in
    Pi,
    /// pre + post, with the baseline trainer
    Pp,
    /// in + post
    Ip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    #[serde(default)]
    pub scenario: Scenario,
    /// The two attributes combined by the logical processor; the first one is
    /// the processing attribute in the single scenario.
    #[serde(default = "default_lp_columns")]
    pub lp_columns: Vec<String>,
    #[serde(default)]
    pub pre: Option<PreProcessor>,
    #[serde(default, rename = "in")]
    pub in_: Option<InProcessor>,
    #[serde(default)]
    pub post: Option<PostProcessor>,
    #[serde(default)]
    pub logistic: LogisticParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_column")]
    pub eval_column: String,
}

fn default_lp_columns() -> Vec<String> {
    vec!["a1".into(), "a2".into()]
}

fn default_eval_column() -> String {
    "a1".into()
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Single,
            lp_columns: default_lp_columns(),
            pre: None,
            in_: None,
            post: None,
            logistic: LogisticParams::default(),
            seed: 0,
            eval_column: default_eval_column(),
        }
    }
}

impl PipelineSpec {
    pub fn composition(&self) -> Result<Composition> {
        Ok(
            match (self.pre.is_some(), self.in_.is_some(), self.post.is_some()) {
                (false, false, false) => Composition::Baseline,
                (true, false, false) => Composition::Pre,
                (false, true, false) => Composition::In,
                (false, false, true) => Composition::Post,
                (true, true, false) => Composition::Pi,
                (true, false, true) => Composition::Pp,
                (false, true, true) => Composition::Ip,
                (true, true, true) => {
                    return Err(Error::Config(format!(
                        "pipeline {} combines three stages; at most two are supported",
                        self.id()
                    )))
                }
            },
        )
    }

    /// Stage ids joined with `+` in stage order; `logistic` for the baseline.
    pub fn id(&self) -> String {
        let parts: Vec<&str> = [
            self.pre.as_ref().map(PreProcessor::id),
            self.in_.as_ref().map(InProcessor::id),
            self.post.as_ref().map(PostProcessor::id),
        ]
        .into_iter()
        .flatten()
        .collect();
        if parts.is_empty() {
            "logistic".into()
        } else {
            parts.join("+")
        }
    }

    /// Name of the sensitive column the processors act on.
    pub fn processing_column(&self) -> Result<String> {
        if self.lp_columns.len() != 2 {
            return Err(Error::Config(format!(
                "lp_columns needs two attributes, got {}",
                self.lp_columns.len()
            )));
        }
        Ok(match self.scenario.processor() {
            None => self.lp_columns[0].clone(),
            Some(lp) => lp.column_name().to_string(),
        })
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.id(), self.scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pipeline: String,
    pub scenario: Scenario,
    pub composition: Composition,
    pub accuracy: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub ind: Option<f64>,
    pub sp: Option<f64>,
    pub sp_abs: Option<f64>,
    pub sf: Option<f64>,
    pub group_confusion: GroupConfusion,
    pub threshold: Threshold,
    /// Why a metric is missing, keyed by metric name.
    pub undefined: BTreeMap<String, String>,
    /// Stages in execution order.
    pub stages: Vec<String>,
    pub metadata: BTreeMap<String, String>,
}

impl EvaluationReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => self.accuracy,
            "balanced_accuracy" => self.balanced_accuracy,
            "ind" => self.ind,
            "sp" => self.sp,
            "sp_abs" => self.sp_abs,
            "sf" => self.sf,
            _ => None,
        }
    }
}

pub const METRICS: [&str; 5] = ["accuracy", "balanced_accuracy", "ind", "sp", "sf"];

fn enter(data: &Dataset, stage: &str) {
    if let Some(audit) = data.audit() {
        audit.enter(stage);
    }
}

fn enter_all(splits: [&Dataset; 3], stage: &str) {
    for d in splits {
        enter(d, stage);
    }
}

/// Runs one pipeline: logical processor, pre-processor fit on train, trainer,
/// threshold selection on validation, post-processor fit on validation, and
/// evaluation on test against `spec.eval_column`.
pub fn run_pipeline(
    spec: &PipelineSpec,
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
) -> Result<EvaluationReport> {
    let composition = spec.composition()?;
    let column = spec.processing_column()?;
    let mut stages = Vec::new();
    let mut metadata = BTreeMap::new();
    metadata.insert("seed".into(), spec.seed.to_string());
    metadata.insert("processing_column".into(), column.clone());
    metadata.insert("eval_column".into(), spec.eval_column.clone());

    enter_all([train, val, test], "lp");
    let (mut train, mut val, mut test) = (train.clone(), val.clone(), test.clone());
    if let Some(lp) = spec.scenario.processor() {
        let cols: Vec<&str> = spec.lp_columns.iter().map(String::as_str).collect();
        train = apply_lp(&lp, &train, &cols).map_err(Error::in_stage("lp"))?;
        val = apply_lp(&lp, &val, &cols).map_err(Error::in_stage("lp"))?;
        test = apply_lp(&lp, &test, &cols).map_err(Error::in_stage("lp"))?;
        stages.push(format!("lp:{}", lp.column_name()));
    }

    enter_all([&train, &val, &test], "pre");
    if let Some(pre) = &spec.pre {
        match pre {
            PreProcessor::Reweigh {} => {
                train = reweigh(&train, &column).map_err(Error::in_stage("pre"))?;
            }
            PreProcessor::DiRemover(params) => {
                let (repaired, repairer) =
                    di_remove(&train, &column, params).map_err(Error::in_stage("pre"))?;
                train = repaired;
                val = repairer.transform(&val).map_err(Error::in_stage("pre"))?;
                test = repairer.transform(&test).map_err(Error::in_stage("pre"))?;
                metadata.insert("di_lambda".into(), params.lambda.to_string());
                metadata.insert("di_interpolation".into(), "value_space".into());
            }
        }
        stages.push(format!("pre:{}", pre.id()));
    }

    enter_all([&train, &val, &test], "in");
    let model: ScoreModel = match &spec.in_ {
        None => train_logistic(&train, &spec.logistic),
        Some(InProcessor::Adversarial(p)) => {
            train_adversarial(&train, &column, &spec.logistic, p, spec.seed)
        }
        Some(InProcessor::Pireg { eta }) => {
            train_pi_regularized(&train, &column, &spec.logistic, *eta)
        }
        Some(InProcessor::Metafair(p)) => train_metafair(&train, &column, p, &spec.logistic),
    }
    .map_err(Error::in_stage("in"))?;
    stages.push(format!("in:{}", model.provenance()));
    for (k, v) in model.flags() {
        metadata.insert(format!("model.{k}"), v.clone());
    }

    enter_all([&train, &val, &test], "threshold");
    let model = match model.threshold() {
        Threshold::Global { .. } => {
            let tau = select_threshold(model.scorer().as_ref(), &val, &column, None)
                .map_err(Error::in_stage("threshold"))?;
            model.with_threshold(Threshold::global(tau))
        }
        Threshold::PerGroup { .. } => model,
    };
    stages.push("threshold".into());

    enter_all([&train, &val, &test], "post");
    let predictions = match &spec.post {
        None => model.predict(&test).map_err(Error::in_stage("post"))?,
        Some(post) => {
            let mut run = || -> Result<Vec<u8>> {
                let recentred = |d: &Dataset| -> Result<Vec<f64>> {
                    let taus = model.row_thresholds(d)?;
                    Ok(model
                        .scores(d)
                        .iter()
                        .zip(taus)
                        .map(|(&p, t)| recenter(p, t))
                        .collect())
                };
                let test_sens = test.sensitive(&column)?;
                metadata.insert("post_input".into(), "recentred_at_threshold".into());
                match post {
                    PostProcessor::Reject(params) => {
                        metadata.insert("ro_theta".into(), params.theta.to_string());
                        reject_option(&recentred(&test)?, test_sens, params)
                    }
                    PostProcessor::Eqodds {} => {
                        let base_val = model.predict(&val)?;
                        let mix = fit_eq_odds(
                            &base_val,
                            val.labels(),
                            val.sensitive(&column)?,
                            val.weights(),
                        )?;
                        metadata.insert("eqodds_mix".into(), serde_json::to_string(&mix)?);
                        apply_eq_odds(&mix, &model.predict(&test)?, test_sens, spec.seed ^ 0xe90d)
                    }
                    PostProcessor::Platt {} => {
                        let gp = fit_group_platt(
                            &recentred(&val)?,
                            val.labels(),
                            val.sensitive(&column)?,
                        )?;
                        metadata.insert("platt".into(), serde_json::to_string(&gp)?);
                        let calibrated = apply_group_platt(&gp, &recentred(&test)?, test_sens);
                        Ok(calibrated.iter().map(|&p| u8::from(p > 0.5)).collect())
                    }
                }
            };
            let out = run().map_err(Error::in_stage("post"))?;
            stages.push(format!("post:{}", post.id()));
            out
        }
    };

    enter_all([&train, &val, &test], "evaluate");
    let gc = GroupConfusion::from_predictions(&test, &predictions, &spec.eval_column)
        .map_err(Error::in_stage("evaluate"))?;
    let mut undefined = BTreeMap::new();
    let mut keep = |name: &str, r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            undefined.insert(name.to_string(), e.to_string());
            None
        }
    };
    let accuracy = keep(
        "accuracy",
        gc.accuracy()
            .ok_or(Error::EmptyCell("accuracy: empty test set".into())),
    );
    let balanced_accuracy = keep("balanced_accuracy", gc.balanced_accuracy());
    let ind = keep("ind", gc.ind());
    let sp = keep("sp", gc.sp());
    let sp_abs = keep("sp_abs", gc.sp_abs());
    let sf = keep("sf", gc.sf());
    stages.push("evaluate".into());

    Ok(EvaluationReport {
        pipeline: spec.id(),
        scenario: spec.scenario,
        composition,
        accuracy,
        balanced_accuracy,
        ind,
        sp,
        sp_abs,
        sf,
        group_confusion: gc,
        threshold: model.threshold().clone(),
        undefined,
        stages,
        metadata,
    })
}

/// Singletons (pre, in, post), then pre+in, pre+post and in+post pairs, for
/// each scenario in turn. Other fields are copied from `template`.
pub fn enumerate_grid(
    template: &PipelineSpec,
    pres: &[PreProcessor],
    ins: &[InProcessor],
    posts: &[PostProcessor],
    scenarios: &[Scenario],
) -> Vec<PipelineSpec> {
    let make = |scenario,
                pre: Option<&PreProcessor>,
                in_: Option<&InProcessor>,
                post: Option<&PostProcessor>| {
        PipelineSpec {
            scenario,
            pre: pre.cloned(),
            in_: in_.cloned(),
            post: post.cloned(),
            ..template.clone()
        }
    };
    let mut out = Vec::new();
    for &s in scenarios {
        out.extend(pres.iter().map(|p| make(s, Some(p), None, None)));
        out.extend(ins.iter().map(|i| make(s, None, Some(i), None)));
        out.extend(posts.iter().map(|q| make(s, None, None, Some(q))));
        for p in pres {
            out.extend(ins.iter().map(|i| make(s, Some(p), Some(i), None)));
        }
        for p in pres {
            out.extend(posts.iter().map(|q| make(s, Some(p), None, Some(q))));
        }
        for i in ins {
            out.extend(posts.iter().map(|q| make(s, None, Some(i), Some(q))));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn processors() -> (Vec<PreProcessor>, Vec<InProcessor>, Vec<PostProcessor>) {
        (
            vec![
                PreProcessor::Reweigh {},
                PreProcessor::DiRemover(RepairParams::default()),
            ],
            vec![
                InProcessor::Adversarial(AdversaryParams::default()),
                InProcessor::Pireg { eta: 1.0 },
                InProcessor::Metafair(MetaFairParams::default()),
            ],
            vec![
                PostProcessor::Reject(RejectOptionParams::default()),
                PostProcessor::Eqodds {},
                PostProcessor::Platt {},
            ],
        )
    }

    #[test]
    fn grid_counts() {
        let (pre, inp, post) = processors();
        let t = PipelineSpec::default();
        assert_eq!(
            enumerate_grid(&t, &pre, &inp, &post, &[Scenario::Single]).len(),
            29
        );
        assert_eq!(
            enumerate_grid(&t, &pre, &inp, &post, &Scenario::ALL).len(),
            116
        );
        assert_eq!(
            enumerate_grid(&t, &pre, &inp, &[], &[Scenario::Or]).len(),
            2 + 3 + 6
        );
        let ids: Vec<String> = enumerate_grid(&t, &pre, &inp, &post, &[Scenario::Single])
            .iter()
            .map(PipelineSpec::id)
            .collect();
        assert_eq!(ids[0], "reweigh");
        assert_eq!(ids[8], "reweigh+adversarial");
        assert_eq!(ids[28], "metafair+platt");
    }

    #[test]
    fn compositions() {
        let (pre, inp, post) = processors();
        let grid = enumerate_grid(
            &PipelineSpec::default(),
            &pre,
            &inp,
            &post,
            &[Scenario::Single],
        );
        let kinds: Vec<Composition> = grid.iter().map(|s| s.composition().unwrap()).collect();
        assert_eq!(kinds.iter().filter(|k| **k == Composition::Pi).count(), 6);
        assert_eq!(kinds.iter().filter(|k| **k == Composition::Pp).count(), 6);
        assert_eq!(kinds.iter().filter(|k| **k == Composition::Ip).count(), 9);
        let all = PipelineSpec {
            pre: Some(pre[0].clone()),
            in_: Some(inp[0].clone()),
            post: Some(post[0].clone()),
            ..Default::default()
        };
        assert!(matches!(all.composition(), Err(Error::Config(_))));
        assert_eq!(PipelineSpec::default().id(), "logistic");
    }

    #[test]
    fn spec_toml_roundtrip() {
        let text = r#"
scenario = "or"
seed = 3
[pre]
kind = "di_remover"
lambda = 0.5
[in]
kind = "pireg"
eta = 2.0
"#;
        let spec: PipelineSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.id(), "di+pireg");
        assert_eq!(spec.processing_column().unwrap(), "or");
        let back: PipelineSpec = toml::from_str(&toml::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(toml::from_str::<PipelineSpec>("colour = 1").is_err());
        assert!(
            toml::from_str::<PipelineSpec>("[pre]\nkind = \"di_remover\"\nlamda = 0.5").is_err()
        );
    }
}
