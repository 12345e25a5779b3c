//! Instances, perturbation groups and datasets.
//!
//! A [`PerturbationGroup`] is an original instance together with its `m >= 1`
//! perturbed variants; it is the unit every metric is computed on.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The `variant_id` reserved for the original instance of a group.
pub const ORIGINAL_ID: &str = "o";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantType {
    Original,
    Superficial,
    Paraphrase,
    Distraction,
}

impl VariantType {
    pub const PERTURBED: [VariantType; 3] =
        [VariantType::Superficial, VariantType::Paraphrase, VariantType::Distraction];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantType::Original => "original",
            VariantType::Superficial => "superficial",
            VariantType::Paraphrase => "paraphrase",
            VariantType::Distraction => "distraction",
        }
    }

    /// Prefix used when the toolkit mints variant ids ("s1", "p2", "d1").
    pub fn id_prefix(self) -> &'static str {
        match self {
            VariantType::Original => ORIGINAL_ID,
            VariantType::Superficial => "s",
            VariantType::Paraphrase => "p",
            VariantType::Distraction => "d",
        }
    }
}

impl fmt::Display for VariantType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Popqa,
    Boolq,
    Siga,
    Custom,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Popqa => "popqa",
            DatasetKind::Boolq => "boolq",
            DatasetKind::Siga => "siga",
            DatasetKind::Custom => "custom",
        }
    }

    /// Whether every instance of this kind carries a reading passage.
    /// `None` means either is allowed (custom datasets).
    pub fn requires_context(self) -> Option<bool> {
        match self {
            DatasetKind::Boolq => Some(true),
            DatasetKind::Popqa | DatasetKind::Siga => Some(false),
            DatasetKind::Custom => None,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One input variant, original or perturbed. Field names match the JSONL schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub group_id: String,
    pub variant_id: String,
    pub variant_type: VariantType,
    pub input: String,
    pub context: Option<String>,
    pub references: Vec<String>,
    pub dataset_kind: DatasetKind,
    pub perturbation_ops: Vec<String>,
}

impl Instance {
    pub fn is_original(&self) -> bool {
        self.variant_type == VariantType::Original
    }

    pub fn validate(&self) -> Result<()> {
        let id_says_original = self.variant_id == ORIGINAL_ID;
        if self.is_original() != id_says_original {
            return Err(Error::InvalidData(format!(
                "group {}: variant_id {:?} disagrees with variant_type {}",
                self.group_id, self.variant_id, self.variant_type
            )));
        }
        if self.is_original() != self.perturbation_ops.is_empty() {
            return Err(Error::InvalidData(format!(
                "group {} variant {}: perturbation_ops must be empty exactly for the original",
                self.group_id, self.variant_id
            )));
        }
        if self.references.is_empty() {
            return Err(Error::InvalidData(format!(
                "group {} variant {}: references is empty",
                self.group_id, self.variant_id
            )));
        }
        if self.references.iter().any(|r| r.trim().is_empty()) {
            return Err(Error::InvalidData(format!(
                "group {} variant {}: empty reference string",
                self.group_id, self.variant_id
            )));
        }
        if let Some(required) = self.dataset_kind.requires_context() {
            if required != self.context.is_some() {
                let need = if required { "requires" } else { "does not take" };
                return Err(Error::InvalidData(format!(
                    "group {} variant {}: dataset_kind {} {need} a context",
                    self.group_id, self.variant_id, self.dataset_kind
                )));
            }
        }
        Ok(())
    }
}

/// An original instance and its ordered perturbed variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationGroup {
    group_id: String,
    original: Instance,
    variants: Vec<Instance>,
}

impl PerturbationGroup {
    pub fn new(original: Instance, variants: Vec<Instance>) -> Result<Self> {
        original.validate()?;
        let group_id = original.group_id.clone();
        if !original.is_original() {
            return Err(Error::InvalidData(format!("group {group_id} is missing an original")));
        }
        if variants.is_empty() {
            return Err(Error::InvalidData(format!("group {group_id} has no perturbed variants")));
        }
        let mut seen = BTreeSet::new();
        for v in &variants {
            v.validate()?;
            if v.group_id != group_id {
                return Err(Error::InvalidData(format!(
                    "variant {} belongs to group {}, not {group_id}",
                    v.variant_id, v.group_id
                )));
            }
            if v.is_original() {
                return Err(Error::InvalidData(format!("group {group_id} has more than one original")));
            }
            if !seen.insert(v.variant_id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate (group_id, variant_id) = ({group_id}, {})",
                    v.variant_id
                )));
            }
        }
        Ok(Self { group_id, original, variants })
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    pub fn original(&self) -> &Instance {
        &self.original
    }

    pub fn variants(&self) -> &[Instance] {
        &self.variants
    }

    /// Number of perturbed variants, `m(i)`.
    pub fn m(&self) -> usize {
        self.variants.len()
    }

    /// Original first, then variants in order.
    pub fn members(&self) -> impl Iterator<Item = &Instance> {
        core::iter::once(&self.original).chain(self.variants.iter())
    }

    pub fn variant(&self, variant_id: &str) -> Option<&Instance> {
        self.members().find(|i| i.variant_id == variant_id)
    }

    pub fn count_of(&self, ty: VariantType) -> usize {
        self.variants.iter().filter(|v| v.variant_type == ty).count()
    }

    /// Smallest `<prefix><n>` id (n >= 1) not already used in the group.
    pub fn next_variant_id(&self, ty: VariantType) -> String {
        let prefix = ty.id_prefix();
        (1..).map(|n| format!("{prefix}{n}")).find(|id| self.variant(id).is_none()).expect("unbounded id space")
    }

    /// Append a variant, re-checking the group invariants.
    pub fn push_variant(&mut self, variant: Instance) -> Result<()> {
        variant.validate()?;
        if variant.group_id != self.group_id {
            return Err(Error::InvalidData(format!(
                "variant {} belongs to group {}, not {}",
                variant.variant_id, variant.group_id, self.group_id
            )));
        }
        if variant.is_original() {
            return Err(Error::InvalidData(format!("group {} already has an original", self.group_id)));
        }
        if self.variant(&variant.variant_id).is_some() {
            return Err(Error::InvalidData(format!(
                "duplicate (group_id, variant_id) = ({}, {})",
                self.group_id, variant.variant_id
            )));
        }
        self.variants.push(variant);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    groups: Vec<PerturbationGroup>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, groups: Vec<PerturbationGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidData("dataset has no groups".into()));
        }
        let mut seen = BTreeSet::new();
        for g in &groups {
            if !seen.insert(g.group_id()) {
                return Err(Error::InvalidData(format!("duplicate group_id {}", g.group_id())));
            }
        }
        Ok(Self { name: name.into(), groups })
    }

    /// Partition a flat instance list into groups. Groups appear in order of
    /// first occurrence; members keep their relative order.
    pub fn from_instances(name: impl Into<String>, instances: Vec<Instance>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::InvalidData("dataset is empty".into()));
        }
        let mut order: Vec<String> = Vec::new();
        let mut buckets: BTreeMap<String, Vec<Instance>> = BTreeMap::new();
        for inst in instances {
            inst.validate()?;
            let bucket = buckets.entry(inst.group_id.clone()).or_insert_with(|| {
                order.push(inst.group_id.clone());
                Vec::new()
            });
            if bucket.iter().any(|b| b.variant_id == inst.variant_id) {
                return Err(Error::InvalidData(format!(
                    "duplicate (group_id, variant_id) = ({}, {})",
                    inst.group_id, inst.variant_id
                )));
            }
            bucket.push(inst);
        }
        let mut groups = Vec::with_capacity(order.len());
        for gid in order {
            let mut members = buckets.remove(&gid).unwrap_or_default();
            let Some(pos) = members.iter().position(Instance::is_original) else {
                return Err(Error::InvalidData(format!("group {gid} is missing an original")));
            };
            let original = members.remove(pos);
            groups.push(PerturbationGroup::new(original, members)?);
        }
        Self::new(name, groups)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn groups(&self) -> &[PerturbationGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [PerturbationGroup] {
        &mut self.groups
    }

    pub fn group(&self, group_id: &str) -> Option<&PerturbationGroup> {
        self.groups.iter().find(|g| g.group_id() == group_id)
    }

    /// Number of groups, `n`.
    pub fn n(&self) -> usize {
        self.groups.len()
    }

    /// All instances, group by group, original first.
    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.groups.iter().flat_map(PerturbationGroup::members)
    }

    pub fn instance_count(&self) -> usize {
        self.groups.iter().map(|g| g.m() + 1).sum()
    }
}
