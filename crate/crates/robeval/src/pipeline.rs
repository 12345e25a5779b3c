//! Stage logic shared by the CLI and tests: expand, score, and aggregate.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use robeval_core::model::{Dataset, ORIGINAL_ID};
use robeval_core::perturb::{expand_dataset, ExpansionSummary, ParaphraseSource};
use robeval_core::report::{aggregate, breakdown_by_type, ReportRow, VariantFilter};
use robeval_core::scoring::{score_group, GroupScores, VariantScore};
use robeval_core::stats::BootstrapConfig;

use crate::cache::Cache;
use crate::config::{RunConfig, PROVIDER_SOURCE};
use crate::error::{Error, Result};
use crate::inference::{Client, ProviderSource};
use crate::io::{load_paraphrase_sidecar, Prediction, ScoreRecord};

/// Expand `dataset` per the config's perturb section.
///
/// `provider_cache` is used only when paraphrases come from the provider.
pub fn perturb(
    dataset: &Dataset,
    config: &RunConfig,
    provider_cache: Option<&Path>,
) -> Result<(Dataset, ExpansionSummary)> {
    let expansion = config.expansion();
    let Some(paraphrase) = &expansion.paraphrase else {
        return Ok(expand_dataset(dataset, &expansion, None)?);
    };
    if paraphrase.source == PROVIDER_SOURCE {
        let model = config
            .perturb
            .paraphrase_model
            .clone()
            .ok_or_else(|| Error::Config("paraphrase source \"provider\" needs perturb.paraphrase_model".into()))?;
        let client = Client::new(model)?;
        let mut cache = provider_cache.map(Cache::open).transpose()?;
        let mut source = ProviderSource { client: &client, k: config.perturb.paraphrase_count, cache: cache.as_mut() };
        Ok(expand_dataset(dataset, &expansion, Some(&mut source as &mut dyn ParaphraseSource))?)
    } else {
        let mut sidecar = load_paraphrase_sidecar(Path::new(&paraphrase.source), dataset)?.paraphrases;
        Ok(expand_dataset(dataset, &expansion, Some(&mut sidecar as &mut dyn ParaphraseSource))?)
    }
}

/// Completions keyed by group id, then variant id.
pub type PredictionIndex = BTreeMap<String, BTreeMap<String, String>>;

/// Index predictions for one model. With `model` unset the file must hold a
/// single model. Returns the model name alongside the index.
pub fn index_predictions(predictions: &[Prediction], model: Option<&str>) -> Result<(String, PredictionIndex)> {
    let chosen = match model {
        Some(m) => m.to_owned(),
        None => {
            let mut models: Vec<&str> = predictions.iter().map(|p| p.model.as_str()).collect();
            models.sort_unstable();
            models.dedup();
            match models.as_slice() {
                [only] => (*only).to_owned(),
                [] => return Err(Error::Config("no predictions".into())),
                many => {
                    return Err(Error::Config(format!(
                        "predictions hold several models ({}); pick one with --model",
                        many.join(", ")
                    )))
                }
            }
        }
    };
    let mut index = PredictionIndex::new();
    for p in predictions.iter().filter(|p| p.model == chosen) {
        let slot = index.entry(p.group_id.clone()).or_default();
        if slot.insert(p.variant_id.clone(), p.completion.clone()).is_some() {
            return Err(Error::Config(format!(
                "duplicate prediction for group_id={} variant_id={}",
                p.group_id, p.variant_id
            )));
        }
    }
    Ok((chosen, index))
}

/// Score every group. Any missing prediction fails the whole stage.
pub fn score(dataset: &Dataset, predictions: &PredictionIndex, config: &RunConfig) -> Result<Vec<GroupScores>> {
    let empty = BTreeMap::new();
    for (gid, members) in predictions {
        match dataset.group(gid) {
            None => warn!("prediction for unknown group {gid:?} ignored"),
            Some(g) => {
                for vid in members.keys().filter(|v| g.variant(v).is_none() && *v != ORIGINAL_ID) {
                    warn!("prediction for unknown variant {gid}/{vid} ignored");
                }
            }
        }
    }
    dataset
        .groups()
        .iter()
        .map(|g| {
            let metric = config.metric_for(g.original().dataset_kind);
            let preds = predictions.get(g.group_id()).unwrap_or(&empty);
            Ok(score_group(g, preds, metric)?)
        })
        .collect()
}

/// Flatten to score records: each group's original first, then its variants.
pub fn score_records(groups: &[GroupScores]) -> Vec<ScoreRecord> {
    let mut out = Vec::new();
    for g in groups {
        out.push(ScoreRecord { group_id: g.group_id().into(), variant_id: ORIGINAL_ID.into(), score: g.score_o() });
        out.extend(g.variant_scores().iter().map(|v| ScoreRecord {
            group_id: g.group_id().into(),
            variant_id: v.variant_id.clone(),
            score: v.score,
        }));
    }
    out
}

/// Rebuild group scores from a scores file; variant types come from the dataset.
pub fn group_scores_from_records(dataset: &Dataset, records: &[ScoreRecord]) -> Result<Vec<GroupScores>> {
    let mut by_member: BTreeMap<(&str, &str), u8> = BTreeMap::new();
    for r in records {
        if by_member.insert((&r.group_id, &r.variant_id), r.score).is_some() {
            return Err(Error::Config(format!(
                "duplicate score for group_id={} variant_id={}",
                r.group_id, r.variant_id
            )));
        }
    }
    let lookup = |gid: &str, vid: &str| {
        by_member
            .get(&(gid, vid))
            .copied()
            .ok_or_else(|| Error::Config(format!("missing score for group_id={gid} variant_id={vid}")))
    };
    dataset
        .groups()
        .iter()
        .map(|g| {
            let gid = g.group_id();
            let score_o = lookup(gid, &g.original().variant_id)?;
            let variants = g
                .variants()
                .iter()
                .map(|v| {
                    Ok(VariantScore {
                        variant_id: v.variant_id.clone(),
                        variant_type: v.variant_type,
                        score: lookup(gid, &v.variant_id)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GroupScores::new(gid, score_o, variants)?)
        })
        .collect()
}

/// Report rows: the per-type breakdown, or exactly the requested filters.
pub fn report_rows(
    model: &str,
    dataset: &str,
    groups: &[GroupScores],
    filters: Option<&[VariantFilter]>,
    bootstrap: &BootstrapConfig,
) -> Result<Vec<ReportRow>> {
    match filters {
        None => Ok(breakdown_by_type(model, dataset, groups, bootstrap)?),
        Some(filters) => filters.iter().map(|f| Ok(aggregate(model, dataset, groups, *f, bootstrap)?)).collect(),
    }
}
