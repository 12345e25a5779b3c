//! Naturally-occurring, non-malicious input variants.
//!
//! Three families are supported:
//!
//! - superficial edits ([`SuperficialKind`]) composed into a [`PerturbRecipe`],
//! - distraction passages added before or after a reading passage ([`add_distraction`]),
//! - externally produced paraphrases ([`attach_paraphrases`]).
//!
//! Every generator is a pure function of its inputs and a 64-bit seed.
//! [`expand_dataset`] derives one seed per (group, perturbation type) from a
//! master seed, so results do not depend on processing order.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::keyboard;
use crate::model::{Dataset, Instance, PerturbationGroup, VariantType};
use crate::{derive_seed, Error, Result};

/// At most this many paraphrases are kept per original.
pub const MAX_PARAPHRASES: usize = 5;

/// Number of spaces a widened gap has after [`SuperficialKind::RedundantWhitespace`].
pub const WIDE_GAP: usize = 4;

/// Separator placed between a passage and its distractor.
pub const PASSAGE_SEPARATOR: &str = "\n\n";

/// Trailing characters removed by [`SuperficialKind::RemoveTerminalPunctuation`].
pub const TERMINAL_PUNCTUATION: [char; 3] = ['.', '?', '!'];

/// Re-draws allowed when a superficial variant duplicates an existing input.
const MAX_REDRAWS: usize = 16;

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuperficialKind {
    UpperCaseAll,
    LowerCaseAll,
    /// Title-case every whitespace-delimited word.
    ProperCase,
    /// Flip the case of the first alphabetic character.
    FirstLetterCaseFlip,
    RemoveTerminalPunctuation,
    /// Replace one letter with a QWERTY neighbor, keeping its case.
    ButterfingerTypo,
    /// Transpose one adjacent pair of distinct non-whitespace characters.
    CharacterSwap,
    /// Widen one or two single spaces to [`WIDE_GAP`] spaces.
    RedundantWhitespace,
}

impl SuperficialKind {
    pub const ALL: [SuperficialKind; 8] = [
        SuperficialKind::UpperCaseAll,
        SuperficialKind::LowerCaseAll,
        SuperficialKind::ProperCase,
        SuperficialKind::FirstLetterCaseFlip,
        SuperficialKind::RemoveTerminalPunctuation,
        SuperficialKind::ButterfingerTypo,
        SuperficialKind::CharacterSwap,
        SuperficialKind::RedundantWhitespace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuperficialKind::UpperCaseAll => "upper_case_all",
            SuperficialKind::LowerCaseAll => "lower_case_all",
            SuperficialKind::ProperCase => "proper_case",
            SuperficialKind::FirstLetterCaseFlip => "first_letter_case_flip",
            SuperficialKind::RemoveTerminalPunctuation => "remove_terminal_punctuation",
            SuperficialKind::ButterfingerTypo => "butterfinger_typo",
            SuperficialKind::CharacterSwap => "character_swap",
            SuperficialKind::RedundantWhitespace => "redundant_whitespace",
        }
    }

    /// Whether the transform only changes letter case.
    pub fn is_casing(self) -> bool {
        matches!(
            self,
            SuperficialKind::UpperCaseAll
                | SuperficialKind::LowerCaseAll
                | SuperficialKind::ProperCase
                | SuperficialKind::FirstLetterCaseFlip
        )
    }

    /// Apply this single transform, drawing any randomness from `rng`.
    /// Transforms that have nothing to act on return the text unchanged.
    pub fn apply<R: Rng + ?Sized>(self, text: &str, rng: &mut R) -> String {
        match self {
            SuperficialKind::UpperCaseAll => text.to_uppercase(),
            SuperficialKind::LowerCaseAll => text.to_lowercase(),
            SuperficialKind::ProperCase => proper_case(text),
            SuperficialKind::FirstLetterCaseFlip => first_letter_case_flip(text),
            SuperficialKind::RemoveTerminalPunctuation => text.trim_end_matches(TERMINAL_PUNCTUATION).to_owned(),
            SuperficialKind::ButterfingerTypo => butterfinger(text, rng),
            SuperficialKind::CharacterSwap => character_swap(text, rng),
            SuperficialKind::RedundantWhitespace => redundant_whitespace(text, rng),
        }
    }
}

impl fmt::Display for SuperficialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuperficialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown superficial kind {s:?}")))
    }
}

fn proper_case(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut word_start = true;
    for c in text.chars() {
        if c.is_whitespace() {
            out.push(c);
            word_start = true;
        } else if word_start {
            out.extend(c.to_uppercase());
            word_start = false;
        } else {
            out.extend(c.to_lowercase());
        }
    }
    out
}

fn first_letter_case_flip(text: &str) -> String {
    let Some((at, c)) = text.char_indices().find(|(_, c)| c.is_alphabetic()) else {
        return text.to_owned();
    };
    let mut out = String::with_capacity(text.len());
    out.push_str(&text[..at]);
    if c.is_lowercase() {
        out.extend(c.to_uppercase());
    } else {
        out.extend(c.to_lowercase());
    }
    out.push_str(&text[at + c.len_utf8()..]);
    out
}

fn butterfinger<R: Rng + ?Sized>(text: &str, rng: &mut R) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let eligible: Vec<usize> =
        chars.iter().enumerate().filter(|(_, c)| keyboard::neighbors(**c).is_some()).map(|(i, _)| i).collect();
    if eligible.is_empty() {
        return text.to_owned();
    }
    let at = eligible[rng.random_range(0..eligible.len())];
    let original = chars[at];
    let near = keyboard::neighbors(original).expect("eligible letter");
    let pick = rng.random_range(0..near.len());
    let replacement = near.as_bytes()[pick] as char;
    chars[at] = if original.is_ascii_uppercase() { replacement.to_ascii_uppercase() } else { replacement };
    chars.into_iter().collect()
}

fn character_swap<R: Rng + ?Sized>(text: &str, rng: &mut R) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let pairs: Vec<usize> = chars
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !w[0].is_whitespace() && !w[1].is_whitespace() && w[0] != w[1])
        .map(|(i, _)| i)
        .collect();
    if pairs.is_empty() {
        return text.to_owned();
    }
    let at = pairs[rng.random_range(0..pairs.len())];
    chars.swap(at, at + 1);
    chars.into_iter().collect()
}

fn redundant_whitespace<R: Rng + ?Sized>(text: &str, rng: &mut R) -> String {
    let chars: Vec<char> = text.chars().collect();
    let singles: Vec<usize> = (0..chars.len())
        .filter(|&i| {
            chars[i] == ' '
                && (i == 0 || !chars[i - 1].is_whitespace())
                && chars.get(i + 1).is_none_or(|c| !c.is_whitespace())
        })
        .collect();
    if singles.is_empty() {
        return text.to_owned();
    }
    let want = rng.random_range(1..=2usize).min(singles.len());
    let chosen: BTreeSet<usize> = index::sample(rng, singles.len(), want).into_iter().map(|i| singles[i]).collect();
    let mut out = String::with_capacity(text.len() + want * (WIDE_GAP - 1));
    for (i, c) in chars.into_iter().enumerate() {
        if chosen.contains(&i) {
            out.extend(core::iter::repeat_n(' ', WIDE_GAP));
        } else {
            out.push(c);
        }
    }
    out
}

/// An ordered, duplicate-free list of superficial transforms and the seed that drives them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbRecipe {
    kinds: Vec<SuperficialKind>,
    seed: u64,
}

impl PerturbRecipe {
    pub fn new(kinds: Vec<SuperficialKind>, seed: u64) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::InvalidInput("recipe has no kinds".into()));
        }
        let distinct: BTreeSet<_> = kinds.iter().collect();
        if distinct.len() != kinds.len() {
            return Err(Error::InvalidInput("recipe repeats a kind".into()));
        }
        Ok(Self { kinds, seed })
    }

    pub fn kinds(&self) -> &[SuperficialKind] {
        &self.kinds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Operation names recorded in `perturbation_ops`.
    pub fn op_names(&self) -> Vec<String> {
        self.kinds.iter().map(|k| k.as_str().to_string()).collect()
    }
}

/// Apply every kind of the recipe in order, all drawing from one stream seeded by the recipe.
pub fn apply_superficial(text: &str, recipe: &PerturbRecipe) -> Result<String> {
    if text.trim().is_empty() {
        return Err(Error::InvalidInput("cannot perturb empty text".into()));
    }
    let mut rng = rng_from(recipe.seed);
    let mut out = text.to_owned();
    for kind in &recipe.kinds {
        out = kind.apply(&out, &mut rng);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Before,
    After,
    #[default]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractionSpec {
    pub placement: Placement,
    pub seed: u64,
}

/// Build a distraction variant: the original question with another passage
/// from `corpus` placed before or after its own passage.
///
/// The seeded stream first resolves [`Placement::Random`] (one fair coin),
/// then picks the distractor uniformly among passages that differ from the
/// group's own passage.
pub fn add_distraction(group: &PerturbationGroup, corpus: &[String], spec: &DistractionSpec) -> Result<Instance> {
    let original = group.original();
    let Some(own) = original.context.as_deref() else {
        return Err(Error::InvalidInput(format!(
            "group {}: original has no context to distract from",
            group.group_id()
        )));
    };
    if corpus.len() < 2 {
        return Err(Error::InvalidInput(format!("distraction corpus needs at least 2 passages, got {}", corpus.len())));
    }
    if !corpus.iter().any(|p| p == own) {
        return Err(Error::InvalidInput(format!("group {}: own passage not found in the corpus", group.group_id())));
    }
    let candidates: Vec<&String> = corpus.iter().filter(|p| *p != own).collect();
    if candidates.is_empty() {
        return Err(Error::InvalidInput("distraction corpus has no passage other than the group's own".into()));
    }

    let mut rng = rng_from(spec.seed);
    let placement = match spec.placement {
        Placement::Random if rng.random_bool(0.5) => Placement::Before,
        Placement::Random => Placement::After,
        fixed => fixed,
    };
    let distractor = candidates[rng.random_range(0..candidates.len())];
    let (context, op) = match placement {
        Placement::Before => (format!("{distractor}{PASSAGE_SEPARATOR}{own}"), "distraction_before"),
        _ => (format!("{own}{PASSAGE_SEPARATOR}{distractor}"), "distraction_after"),
    };

    Ok(Instance {
        group_id: original.group_id.clone(),
        variant_id: group.next_variant_id(VariantType::Distraction),
        variant_type: VariantType::Distraction,
        input: original.input.clone(),
        context: Some(context),
        references: original.references.clone(),
        dataset_kind: original.dataset_kind,
        perturbation_ops: vec![op.to_string()],
    })
}

/// Case-folded, whitespace-collapsed form used to detect duplicate paraphrases.
pub fn paraphrase_key(text: &str) -> String {
    crate::scoring::normalize(text)
}

/// Extend a group with paraphrase variants, in the given order.
///
/// Candidates that are empty, or equal (by [`paraphrase_key`]) to the original
/// or to an already present paraphrase, are dropped. The group never holds
/// more than [`MAX_PARAPHRASES`] paraphrases.
pub fn attach_paraphrases(group: &PerturbationGroup, paraphrases: &[String]) -> Result<PerturbationGroup> {
    let mut out = group.clone();
    let mut seen: BTreeSet<String> = group
        .members()
        .filter(|m| matches!(m.variant_type, VariantType::Original | VariantType::Paraphrase))
        .map(|m| paraphrase_key(&m.input))
        .collect();
    let original = group.original();
    for text in paraphrases {
        if out.count_of(VariantType::Paraphrase) >= MAX_PARAPHRASES {
            break;
        }
        let key = paraphrase_key(text);
        if key.is_empty() || !seen.insert(key) {
            continue;
        }
        let variant = Instance {
            group_id: original.group_id.clone(),
            variant_id: out.next_variant_id(VariantType::Paraphrase),
            variant_type: VariantType::Paraphrase,
            input: text.clone(),
            context: original.context.clone(),
            references: original.references.clone(),
            dataset_kind: original.dataset_kind,
            perturbation_ops: vec!["paraphrase".to_string()],
        };
        out.push_variant(variant)?;
    }
    Ok(out)
}

/// Where paraphrase candidates come from: a sidecar mapping or an external model.
pub trait ParaphraseSource {
    /// Candidates for one group, or `None` when the source has nothing for it.
    fn paraphrases(&mut self, group: &PerturbationGroup) -> Result<Option<Vec<String>>>;
}

impl ParaphraseSource for BTreeMap<String, Vec<String>> {
    fn paraphrases(&mut self, group: &PerturbationGroup) -> Result<Option<Vec<String>>> {
        Ok(self.get(group.group_id()).cloned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperficialConfig {
    /// Variants to generate per group.
    pub count: usize,
    /// Kinds to draw from; all kinds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<SuperficialKind>>,
    /// Upper bound on kinds composed into one variant.
    #[serde(default = "default_max_interventions")]
    pub max_interventions: usize,
}

fn default_max_interventions() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParaphraseConfig {
    /// Sidecar file path, or `"provider"` for the model-backed generator.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistractionConfig {
    #[serde(default)]
    pub placement: Placement,
    #[serde(default = "default_distraction_count")]
    pub count: usize,
}

fn default_distraction_count() -> usize {
    1
}

/// Which variants [`expand_dataset`] adds to every group.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superficial: Option<SuperficialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paraphrase: Option<ParaphraseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distraction: Option<DistractionConfig>,
    #[serde(default)]
    pub seed: u64,
}

/// Number of variants added, per type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExpansionSummary {
    pub superficial: usize,
    pub paraphrase: usize,
    pub distraction: usize,
}

impl fmt::Display for ExpansionSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (name, n) in
            [("superficial", self.superficial), ("paraphrase", self.paraphrase), ("distraction", self.distraction)]
        {
            if n > 0 {
                parts.push(format!("{name}: {n}"));
            }
        }
        if parts.is_empty() {
            f.write_str("no variants added")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

/// Add the configured variants to every group.
///
/// Superficial variants come first, then paraphrases, then distractions. Each
/// (group, type) pair has its own stream seeded with
/// `derive_seed(config.seed, [group_id, type])`.
pub fn expand_dataset(
    dataset: &Dataset,
    config: &ExpansionConfig,
    mut paraphrases: Option<&mut dyn ParaphraseSource>,
) -> Result<(Dataset, ExpansionSummary)> {
    let corpus = match &config.distraction {
        Some(d) if d.count > 0 => Some(distraction_corpus(dataset)?),
        _ => None,
    };
    if config.paraphrase.is_some() && paraphrases.is_none() {
        return Err(Error::InvalidInput("paraphrase expansion requested without a paraphrase source".into()));
    }

    let mut summary = ExpansionSummary::default();
    let mut groups = Vec::with_capacity(dataset.n());
    for group in dataset.groups() {
        let mut group = group.clone();
        let gid = group.group_id().to_owned();

        if let Some(cfg) = &config.superficial {
            let seed = derive_seed(config.seed, &[&gid, VariantType::Superficial.as_str()]);
            summary.superficial += add_superficial(&mut group, cfg, seed)?;
        }

        if let (Some(_), Some(source)) = (&config.paraphrase, paraphrases.as_deref_mut()) {
            if let Some(candidates) = source.paraphrases(&group)? {
                let before = group.m();
                group = attach_paraphrases(&group, &candidates)?;
                summary.paraphrase += group.m() - before;
            }
        }

        if let (Some(cfg), Some(corpus)) = (&config.distraction, &corpus) {
            let mut rng = rng_from(derive_seed(config.seed, &[&gid, VariantType::Distraction.as_str()]));
            for _ in 0..cfg.count {
                let spec = DistractionSpec { placement: cfg.placement, seed: rng.next_u64() };
                let variant = add_distraction(&group, corpus, &spec)?;
                group.push_variant(variant)?;
                summary.distraction += 1;
            }
        }
        groups.push(group);
    }
    Ok((Dataset::new(dataset.name(), groups)?, summary))
}

/// Distinct passages of all originals, in dataset order.
fn distraction_corpus(dataset: &Dataset) -> Result<Vec<String>> {
    let mut seen = BTreeSet::new();
    let mut corpus = Vec::new();
    for g in dataset.groups() {
        let original = g.original();
        let Some(ctx) = &original.context else {
            return Err(Error::InvalidInput(format!(
                "distraction needs a reading passage on every original, but group {} \
                 (dataset_kind {}) has none",
                g.group_id(),
                original.dataset_kind
            )));
        };
        if seen.insert(ctx.as_str()) {
            corpus.push(ctx.clone());
        }
    }
    Ok(corpus)
}

fn add_superficial(group: &mut PerturbationGroup, cfg: &SuperficialConfig, seed: u64) -> Result<usize> {
    if cfg.count == 0 {
        return Ok(0);
    }
    let pool: Vec<SuperficialKind> = match &cfg.kinds {
        Some(k) if k.is_empty() => return Err(Error::InvalidInput("superficial.kinds is empty".into())),
        Some(k) => {
            let mut uniq = Vec::new();
            for kind in k {
                if !uniq.contains(kind) {
                    uniq.push(*kind);
                }
            }
            uniq
        }
        None => SuperficialKind::ALL.to_vec(),
    };
    let max_k = cfg.max_interventions.clamp(1, pool.len());
    let mut rng = rng_from(seed);
    let original = group.original().clone();

    for _ in 0..cfg.count {
        let mut redraws = 0;
        let (recipe, text) = loop {
            let k = rng.random_range(1..=max_k);
            let kinds = index::sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
            let recipe = PerturbRecipe::new(kinds, rng.next_u64())?;
            let text = apply_superficial(&original.input, &recipe)?;
            let duplicate = group.members().any(|m| m.input == text);
            if !duplicate || redraws >= MAX_REDRAWS {
                break (recipe, text);
            }
            redraws += 1;
        };
        let variant = Instance {
            group_id: original.group_id.clone(),
            variant_id: group.next_variant_id(VariantType::Superficial),
            variant_type: VariantType::Superficial,
            input: text,
            context: original.context.clone(),
            references: original.references.clone(),
            dataset_kind: original.dataset_kind,
            perturbation_ops: recipe.op_names(),
        };
        group.push_variant(variant)?;
    }
    Ok(cfg.count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::{boolq, instance};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_assume, proptest, ProptestConfig, Strategy};
    use SuperficialKind::*;

    const Q: &str = "is the derivative of a continuous function always continuous?";

    fn recipe(kinds: &[SuperficialKind], seed: u64) -> PerturbRecipe {
        PerturbRecipe::new(kinds.to_vec(), seed).unwrap()
    }

    #[test]
    fn first_letter_flip_and_punctuation() {
        let out = apply_superficial(Q, &recipe(&[FirstLetterCaseFlip, RemoveTerminalPunctuation], 0)).unwrap();
        assert_eq!(out, "Is the derivative of a continuous function always continuous");
    }

    #[test]
    fn upper_case_all() {
        assert_eq!(
            apply_superficial(Q, &recipe(&[UpperCaseAll], 0)).unwrap(),
            "IS THE DERIVATIVE OF A CONTINUOUS FUNCTION ALWAYS CONTINUOUS?"
        );
        assert_eq!(apply_superficial("ABC?", &recipe(&[UpperCaseAll], 9)).unwrap(), "ABC?");
    }

    #[test]
    fn proper_and_lower_case() {
        assert_eq!(apply_superficial("who WROTE  hamlet?", &recipe(&[ProperCase], 0)).unwrap(), "Who Wrote  Hamlet?");
        assert_eq!(apply_superficial("Who WROTE", &recipe(&[LowerCaseAll], 0)).unwrap(), "who wrote");
    }

    #[test]
    fn first_letter_skips_leading_punctuation() {
        assert_eq!(first_letter_case_flip("\"Hi\" there"), "\"hi\" there");
        assert_eq!(first_letter_case_flip("123"), "123");
    }

    #[test]
    fn terminal_punctuation_only() {
        let r = recipe(&[RemoveTerminalPunctuation], 0);
        assert_eq!(apply_superficial("Really?!.", &r).unwrap(), "Really");
        assert_eq!(apply_superficial("U.S. or not", &r).unwrap(), "U.S. or not");
    }

    #[test]
    fn butterfinger_replays() {
        // Independent replay of the documented selection: uniform eligible
        // letter, then uniform neighbor from the adjacency table.
        let text = "hello world";
        let out = apply_superficial(text, &recipe(&[ButterfingerTypo], 42)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let letters: Vec<usize> =
            text.char_indices().filter(|(_, c)| c.is_ascii_alphabetic()).map(|(i, _)| i).collect();
        let at = letters[rng.random_range(0..letters.len())];
        let old = text.as_bytes()[at] as char;
        let near = keyboard::neighbors(old).unwrap();
        let new = near.as_bytes()[rng.random_range(0..near.len())] as char;
        let mut expected = String::from(text);
        expected.replace_range(at..at + 1, &new.to_string());
        assert_eq!(out, expected);
        assert_eq!(out.len(), text.len());
    }

    #[test]
    fn butterfinger_keeps_case() {
        for seed in 0..50 {
            let out = apply_superficial("QWERTY", &recipe(&[ButterfingerTypo], seed)).unwrap();
            assert!(out.chars().all(|c| c.is_ascii_uppercase()), "{out}");
        }
    }

    #[test]
    fn vacuous_transforms() {
        assert_eq!(apply_superficial("1234", &recipe(&[ButterfingerTypo], 1)).unwrap(), "1234");
        assert_eq!(apply_superficial("aa aa", &recipe(&[CharacterSwap], 1)).unwrap(), "aa aa");
        assert_eq!(apply_superficial("word", &recipe(&[RedundantWhitespace], 1)).unwrap(), "word");
    }

    #[test]
    fn redundant_whitespace_widens_one_or_two_gaps() {
        for seed in 0..40 {
            let out = apply_superficial("a b c d e", &recipe(&[RedundantWhitespace], seed)).unwrap();
            let wide = out.matches("    ").count();
            assert!((1..=2).contains(&wide), "{out:?}");
            assert_eq!(out.len(), 9 + wide * (WIDE_GAP - 1));
        }
    }

    #[test]
    fn recipe_errors() {
        assert!(PerturbRecipe::new(vec![], 0).is_err());
        assert!(PerturbRecipe::new(vec![UpperCaseAll, UpperCaseAll], 0).is_err());
        assert!(apply_superficial("   ", &recipe(&[UpperCaseAll], 0)).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in SuperficialKind::ALL {
            assert_eq!(k.as_str().parse::<SuperficialKind>().unwrap(), k);
        }
        assert!("shout".parse::<SuperficialKind>().is_err());
    }

    fn boolq_group(ctx: &str) -> PerturbationGroup {
        PerturbationGroup::new(
            boolq("g1", "o", VariantType::Original, "is it?", ctx),
            vec![boolq("g1", "s1", VariantType::Superficial, "IS IT?", ctx)],
        )
        .unwrap()
    }

    #[test]
    fn distraction_forced_choice() {
        let g = boolq_group("C");
        let corpus = vec!["C".to_string(), "X".to_string()];
        let after = add_distraction(&g, &corpus, &DistractionSpec { placement: Placement::After, seed: 3 }).unwrap();
        assert_eq!(after.context.as_deref(), Some("C\n\nX"));
        assert_eq!(after.input, "is it?");
        assert_eq!(after.variant_id, "d1");
        let before = add_distraction(&g, &corpus, &DistractionSpec { placement: Placement::Before, seed: 3 }).unwrap();
        assert_eq!(before.context.as_deref(), Some("X\n\nC"));
    }

    #[test]
    fn distraction_replays() {
        let g = boolq_group("P3");
        let corpus: Vec<String> = (0..10).map(|i| format!("P{i}")).collect();
        let spec = DistractionSpec { placement: Placement::Random, seed: 7 };
        let a = add_distraction(&g, &corpus, &spec).unwrap();
        assert_eq!(a, add_distraction(&g, &corpus, &spec).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let before = rng.random_bool(0.5);
        let others: Vec<&String> = corpus.iter().filter(|p| *p != "P3").collect();
        let d = others[rng.random_range(0..others.len())];
        let expected = if before { format!("{d}\n\nP3") } else { format!("P3\n\n{d}") };
        assert_eq!(a.context.unwrap(), expected);
    }

    #[test]
    fn distraction_errors() {
        let g = boolq_group("C");
        let spec = DistractionSpec { placement: Placement::After, seed: 0 };
        assert!(add_distraction(&g, &["C".to_string()], &spec).is_err());
        assert!(add_distraction(&g, &["C".to_string(), "C".to_string()], &spec).is_err());
        assert!(add_distraction(&g, &["A".to_string(), "B".to_string()], &spec).is_err());
        let popqa = PerturbationGroup::new(
            instance("g", "o", VariantType::Original, "q"),
            vec![instance("g", "s1", VariantType::Superficial, "Q")],
        )
        .unwrap();
        assert!(add_distraction(&popqa, &["A".to_string(), "B".to_string()], &spec).is_err());
    }

    fn popqa_group() -> PerturbationGroup {
        PerturbationGroup::new(
            instance("g1", "o", VariantType::Original, "Who wrote Hamlet?"),
            vec![instance("g1", "s1", VariantType::Superficial, "WHO WROTE HAMLET?")],
        )
        .unwrap()
    }

    #[test]
    fn paraphrases_attach() {
        let g = attach_paraphrases(&popqa_group(), &["p-a".into(), "p-b".into()]).unwrap();
        assert_eq!(g.m(), 3);
        assert_eq!(g.variants()[1].variant_id, "p1");
        assert_eq!(g.variants()[2].variant_id, "p2");
        assert_eq!(g.variants()[2].variant_type, VariantType::Paraphrase);
    }

    #[test]
    fn paraphrase_dedup() {
        let g = attach_paraphrases(
            &popqa_group(),
            &["who  wrote HAMLET?".into(), "Hamlet's author?".into(), "hamlet's   author?".into(), "".into()],
        )
        .unwrap();
        assert_eq!(g.m(), 2);
        assert_eq!(g.variants()[1].input, "Hamlet's author?");
    }

    #[test]
    fn paraphrase_cap() {
        let seven: Vec<String> = (1..=7).map(|i| format!("variant number {i}")).collect();
        let g = attach_paraphrases(&popqa_group(), &seven).unwrap();
        assert_eq!(g.count_of(VariantType::Paraphrase), MAX_PARAPHRASES);
        let inputs: Vec<_> = g.variants()[1..].iter().map(|v| v.input.as_str()).collect();
        assert_eq!(inputs, &seven[..5]);
        // Already full: nothing more is attached.
        let again = attach_paraphrases(&g, &["something else".into()]).unwrap();
        assert_eq!(again.m(), g.m());
    }

    fn one_group_dataset() -> Dataset {
        Dataset::new("t", vec![popqa_group()]).unwrap()
    }

    #[test]
    fn expand_counts_and_determinism() {
        let cfg = ExpansionConfig {
            superficial: Some(SuperficialConfig { count: 2, kinds: None, max_interventions: 2 }),
            seed: 1,
            ..Default::default()
        };
        let (a, summary) = expand_dataset(&one_group_dataset(), &cfg, None).unwrap();
        assert_eq!(a.groups()[0].m(), 1 + 2);
        assert_eq!(summary.superficial, 2);
        let (b, _) = expand_dataset(&one_group_dataset(), &cfg, None).unwrap();
        assert_eq!(a, b);
        let ids: Vec<_> = a.groups()[0].variants().iter().map(|v| v.variant_id.as_str()).collect();
        assert_eq!(ids, ["s1", "s2", "s3"]);
    }

    #[test]
    fn expand_seed_changes_output() {
        let mk = |seed| ExpansionConfig {
            superficial: Some(SuperficialConfig { count: 4, kinds: None, max_interventions: 3 }),
            seed,
            ..Default::default()
        };
        let (a, _) = expand_dataset(&one_group_dataset(), &mk(1), None).unwrap();
        let (b, _) = expand_dataset(&one_group_dataset(), &mk(2), None).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn expand_distraction_needs_context() {
        let cfg = ExpansionConfig {
            distraction: Some(DistractionConfig { placement: Placement::Random, count: 1 }),
            ..Default::default()
        };
        let err = expand_dataset(&one_group_dataset(), &cfg, None).unwrap_err();
        assert!(err.to_string().contains("reading passage"), "{err}");
    }

    #[test]
    fn expand_paraphrase_without_source() {
        let cfg =
            ExpansionConfig { paraphrase: Some(ParaphraseConfig { source: "x.jsonl".into() }), ..Default::default() };
        assert!(expand_dataset(&one_group_dataset(), &cfg, None).is_err());
    }

    #[test]
    fn summary_display() {
        let s = ExpansionSummary { superficial: 9, paraphrase: 6, distraction: 0 };
        assert_eq!(s.to_string(), "superficial: 9, paraphrase: 6");
    }

    // Letters with one-to-one case mappings, plus caseless and separator characters.
    const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,?!'\"-éÉüÜ李白";

    fn arb_text() -> impl Strategy<Value = String> {
        let chars: Vec<char> = ALPHABET.chars().collect();
        proptest::collection::vec(proptest::sample::select(chars), 1..60)
            .prop_map(|cs| cs.into_iter().collect::<String>())
            .prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    fn one(kind: SuperficialKind, text: &str, seed: u64) -> String {
        apply_superficial(text, &recipe(&[kind], seed)).unwrap()
    }

    fn sorted_chars(s: &str) -> Vec<char> {
        let mut v: Vec<char> = s.chars().collect();
        v.sort_unstable();
        v
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn butterfinger_one_neighbor_substitution(text in arb_text(), seed in any::<u64>()) {
            let out = one(ButterfingerTypo, &text, seed);
            let (a, b): (Vec<char>, Vec<char>) = (text.chars().collect(), out.chars().collect());
            prop_assert_eq!(a.len(), b.len());
            let diffs: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
            prop_assert!(diffs.len() <= 1);
            for i in diffs {
                let near = keyboard::neighbors(a[i]).unwrap();
                prop_assert!(near.contains(b[i].to_ascii_lowercase()));
                prop_assert_eq!(a[i].is_ascii_uppercase(), b[i].is_ascii_uppercase());
            }
        }

        #[test]
        fn swap_is_one_adjacent_transposition(text in arb_text(), seed in any::<u64>()) {
            let out = one(CharacterSwap, &text, seed);
            prop_assert_eq!(sorted_chars(&out), sorted_chars(&text));
            let (a, b): (Vec<char>, Vec<char>) = (text.chars().collect(), out.chars().collect());
            let diffs: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
            prop_assert!(diffs.is_empty() || (diffs.len() == 2 && diffs[1] == diffs[0] + 1));
            prop_assert_eq!(text.split_whitespace().count(), out.split_whitespace().count());
        }

        #[test]
        fn casing_preserves_case_folded_text(text in arb_text(), seed in any::<u64>()) {
            for kind in SuperficialKind::ALL.into_iter().filter(|k| k.is_casing()) {
                prop_assert_eq!(one(kind, &text, seed).to_lowercase(), text.to_lowercase());
            }
        }

        #[test]
        fn whitespace_keeps_tokens(text in arb_text(), seed in any::<u64>()) {
            let out = one(RedundantWhitespace, &text, seed);
            prop_assert!(out.split_whitespace().eq(text.split_whitespace()));
        }

        #[test]
        fn only_terminal_punctuation_removed(text in arb_text()) {
            let out = one(RemoveTerminalPunctuation, &text, 0);
            prop_assert!(text.starts_with(&out));
            prop_assert!(text[out.len()..].chars().all(|c| TERMINAL_PUNCTUATION.contains(&c)));
            prop_assert!(!out.ends_with(TERMINAL_PUNCTUATION));
        }

        #[test]
        fn distraction_keeps_both_passages(own in arb_text(), others in proptest::collection::vec(arb_text(), 1..6), seed in any::<u64>()) {
            let g = boolq_group(&own);
            let mut corpus = others;
            corpus.push(own.clone());
            prop_assume!(corpus.iter().any(|p| *p != own));
            let d = add_distraction(&g, &corpus, &DistractionSpec { placement: Placement::Random, seed }).unwrap();
            let ctx = d.context.unwrap();
            prop_assert!(ctx.starts_with(&own) || ctx.ends_with(&own));
            let framed = corpus.iter().any(|p| *p != own
                && (ctx == format!("{p}{PASSAGE_SEPARATOR}{own}") || ctx == format!("{own}{PASSAGE_SEPARATOR}{p}")));
            prop_assert!(framed);
            prop_assert_eq!(d.input, g.original().input.clone());
        }

        #[test]
        fn recipes_replay(text in arb_text(), seed in any::<u64>()) {
            let r = recipe(&SuperficialKind::ALL, seed);
            prop_assert_eq!(apply_superficial(&text, &r).unwrap(), apply_superficial(&text, &r).unwrap());
        }
    }
}
