//! Binary scorers and per-group score vectors.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{DatasetKind, PerturbationGroup, VariantType};
use crate::{Error, Result};

/// Case-fold and collapse every whitespace run to one space (trimming the ends).
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// 1 iff some normalized reference occurs in the normalized prediction.
pub fn string_containment<S: AsRef<str>>(prediction: &str, references: &[S]) -> u8 {
    let haystack = normalize(prediction);
    u8::from(references.iter().any(|r| haystack.contains(normalize(r.as_ref()).as_str())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn flip(self) -> Self {
        match self {
            YesNo::Yes => YesNo::No,
            YesNo::No => YesNo::Yes,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            YesNo::Yes => "yes",
            YesNo::No => "no",
        }
    }
}

/// First whole-word "yes" or "no" in the text, ignoring case.
pub fn first_yes_no(text: &str) -> Option<YesNo> {
    text.split(|c: char| !c.is_alphanumeric()).find_map(|tok| match tok.to_lowercase().as_str() {
        "yes" => Some(YesNo::Yes),
        "no" => Some(YesNo::No),
        _ => None,
    })
}

/// A reference label normalized to yes/no: trimmed, case-folded, trailing `.!?` dropped.
pub fn parse_reference(reference: &str) -> Result<YesNo> {
    let r = reference.trim().trim_end_matches(['.', '!', '?']).to_lowercase();
    match r.as_str() {
        "yes" => Ok(YesNo::Yes),
        "no" => Ok(YesNo::No),
        _ => Err(Error::InvalidInput(format!("boolean reference must be yes or no, got {reference:?}"))),
    }
}

/// 1 iff the first yes/no token of the prediction equals the reference.
/// A prediction with neither token scores 0.
pub fn boolean_accuracy(prediction: &str, reference: &str) -> Result<u8> {
    let expected = parse_reference(reference)?;
    Ok(u8::from(first_yes_no(prediction) == Some(expected)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    StringContainment,
    BooleanAccuracy,
}

impl Metric {
    /// Containment for open-answer QA, accuracy for yes/no classification.
    pub fn default_for(kind: DatasetKind) -> Self {
        match kind {
            DatasetKind::Boolq | DatasetKind::Siga => Metric::BooleanAccuracy,
            DatasetKind::Popqa | DatasetKind::Custom => Metric::StringContainment,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::StringContainment => "string_containment",
            Metric::BooleanAccuracy => "boolean_accuracy",
        }
    }

    pub fn score<S: AsRef<str>>(self, prediction: &str, references: &[S]) -> Result<u8> {
        match self {
            Metric::StringContainment => Ok(string_containment(prediction, references)),
            Metric::BooleanAccuracy => {
                let reference = references.first().ok_or_else(|| Error::InvalidInput("no reference".into()))?;
                boolean_accuracy(prediction, reference.as_ref())
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantScore {
    pub variant_id: String,
    pub variant_type: VariantType,
    pub score: u8,
}

/// Original score, per-variant scores and their mean for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    group_id: String,
    score_o: u8,
    variant_scores: Vec<VariantScore>,
    score_p: f64,
}

impl GroupScores {
    pub fn new(group_id: impl Into<String>, score_o: u8, variant_scores: Vec<VariantScore>) -> Result<Self> {
        let group_id = group_id.into();
        if variant_scores.is_empty() {
            return Err(Error::InvalidData(format!("group {group_id} has no variant scores")));
        }
        if score_o > 1 || variant_scores.iter().any(|v| v.score > 1) {
            return Err(Error::InvalidData(format!("group {group_id}: scores must be 0 or 1")));
        }
        if variant_scores.iter().any(|v| v.variant_type == VariantType::Original) {
            return Err(Error::InvalidData(format!("group {group_id}: original listed among variant scores")));
        }
        // A count over a count: exact up to the final rounding.
        let hits: usize = variant_scores.iter().map(|v| usize::from(v.score)).sum();
        let score_p = hits as f64 / variant_scores.len() as f64;
        Ok(Self { group_id, score_o, variant_scores, score_p })
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    pub fn score_o(&self) -> u8 {
        self.score_o
    }

    pub fn variant_scores(&self) -> &[VariantScore] {
        &self.variant_scores
    }

    /// Mean perturbed score.
    pub fn score_p(&self) -> f64 {
        self.score_p
    }

    pub fn has_type(&self, ty: VariantType) -> bool {
        self.variant_scores.iter().any(|v| v.variant_type == ty)
    }

    /// The same group scored over variants of one type only; `None` if it has none.
    pub fn restricted_to(&self, ty: VariantType) -> Option<GroupScores> {
        let subset: Vec<VariantScore> = self.variant_scores.iter().filter(|v| v.variant_type == ty).cloned().collect();
        if subset.is_empty() {
            return None;
        }
        GroupScores::new(self.group_id.clone(), self.score_o, subset).ok()
    }
}

/// Score every member of a group. Fails if any member lacks a prediction.
pub fn score_group(
    group: &PerturbationGroup,
    predictions: &BTreeMap<String, String>,
    metric: Metric,
) -> Result<GroupScores> {
    let score_of = |variant_id: &str, references: &[String]| -> Result<u8> {
        let prediction = predictions.get(variant_id).ok_or_else(|| Error::MissingPrediction {
            group_id: group.group_id().into(),
            variant_id: variant_id.into(),
        })?;
        metric.score(prediction, references)
    };
    let original = group.original();
    let score_o = score_of(&original.variant_id, &original.references)?;
    let variant_scores = group
        .variants()
        .iter()
        .map(|v| {
            Ok(VariantScore {
                variant_id: v.variant_id.clone(),
                variant_type: v.variant_type,
                score: score_of(&v.variant_id, &v.references)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GroupScores::new(group.group_id(), score_o, variant_scores)
}
