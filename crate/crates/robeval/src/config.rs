//! Run configuration: one JSON document with a section per stage.
//!
//! Relative paths are taken relative to the working directory. Command-line
//! flags override values loaded from the file; the effective config is what
//! gets hashed into output meta records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use robeval_core::model::DatasetKind;
use robeval_core::perturb::{DistractionConfig, ExpansionConfig, ParaphraseConfig, SuperficialConfig, MAX_PARAPHRASES};
use robeval_core::prompt::{PromptTemplate, PromptTemplates};
use robeval_core::report::VariantFilter;
use robeval_core::scoring::Metric;
use robeval_core::stats::BootstrapConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::ModelConfig;

/// `paraphrase.source` value selecting the model-backed generator.
pub const PROVIDER_SOURCE: &str = "provider";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input dataset for `perturb`, and the fallback input of later stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Master seed: expansion and bootstrap seeds both derive from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub perturb: PerturbSection,
    #[serde(default)]
    pub infer: InferSection,
    #[serde(default)]
    pub score: ScoreSection,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superficial: Option<SuperficialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase: Option<ParaphraseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distraction: Option<DistractionConfig>,
    /// Endpoint used when `paraphrase.source` is `"provider"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase_model: Option<ModelConfig>,
    #[serde(default = "default_paraphrase_count")]
    pub paraphrase_count: usize,
}

fn default_paraphrase_count() -> usize {
    MAX_PARAPHRASES
}

impl Default for PerturbSection {
    fn default() -> Self {
        Self {
            superficial: None,
            paraphrase: None,
            distraction: None,
            paraphrase_model: None,
            paraphrase_count: default_paraphrase_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    /// Extra or replacement prompt templates per dataset kind.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub templates: BTreeMap<DatasetKind, String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    /// Overrides of the default metric per dataset kind.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<DatasetKind, Metric>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub score_o: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// `seed` here is replaced by the master seed.
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    /// Rows to emit; the per-type breakdown when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<Vec<VariantFilter>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveSpec>,
    /// Model label for report rows; defaults to the model recorded in the scores file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("robeval-out"))
    }

    pub fn expansion(&self) -> ExpansionConfig {
        ExpansionConfig {
            superficial: self.perturb.superficial.clone(),
            paraphrase: self.perturb.paraphrase.clone(),
            distraction: self.perturb.distraction.clone(),
            seed: self.seed,
        }
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        self.report.bootstrap.with_seed(self.seed)
    }

    pub fn metric_for(&self, kind: DatasetKind) -> Metric {
        self.score.metrics.get(&kind).copied().unwrap_or_else(|| Metric::default_for(kind))
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        let mut templates = PromptTemplates::default();
        for (kind, text) in &self.infer.templates {
            templates.set(*kind, PromptTemplate::new(text.clone())?);
        }
        Ok(templates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_and_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c.bootstrap().replicates, 1000);
        assert_eq!(c.metric_for(DatasetKind::Boolq), Metric::BooleanAccuracy);
        assert_eq!(c.metric_for(DatasetKind::Popqa), Metric::StringContainment);
        assert_eq!(c.perturb.paraphrase_count, 5);
    }

    #[test]
    fn full_document() {
        let c: RunConfig = serde_json::from_str(
            r#"{
              "dataset": "d.jsonl", "seed": 7,
              "perturb": {"superficial": {"count": 3}, "paraphrase": {"source": "side.jsonl"},
                          "distraction": {"placement": "before"}},
              "infer": {"model": {"endpoint_url": "http://localhost:8000/v1/completions", "model_name": "m",
                                  "retry_policy": {"max_retries": 1}},
                        "templates": {"custom": "Q: {question}\nA:"}},
              "score": {"metrics": {"custom": "boolean_accuracy"}},
              "report": {"bootstrap": {"replicates": 200}, "filters": ["all", "paraphrase"],
                         "curve": {"score_o": 1.0, "step": 0.01}}
            }"#,
        )
        .unwrap();
        assert_eq!(c.expansion().seed, 7);
        assert_eq!(c.bootstrap().seed, 7);
        assert_eq!(c.bootstrap().replicates, 200);
        assert_eq!(c.metric_for(DatasetKind::Custom), Metric::BooleanAccuracy);
        assert!(c.templates().unwrap().get(DatasetKind::Custom).is_some());
        assert_eq!(c.infer.model.unwrap().retry_policy.backoff_ms, 500);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"report": {"filter": []}}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..Default::default() };
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
    }
}
