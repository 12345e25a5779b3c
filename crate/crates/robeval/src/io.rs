//! JSONL interchange files: datasets, paraphrase sidecars, predictions and scores.
//!
//! Every file written here starts with one `{"_meta": {...}}` line. Readers
//! accept that line in first position and skip it; files without it load too.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use robeval_core::model::{Dataset, Instance};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOOL_NAME: &str = "robeval";

/// Provenance header embedded in every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl Meta {
    pub fn new(kind: &str) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            kind: kind.into(),
            config_hash: None,
            seed: None,
            dataset: None,
            model: None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(&MetaLine { meta: self.clone() }).expect("meta serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaLine {
    #[serde(rename = "_meta")]
    meta: Meta,
}

fn is_meta_line(line: &str) -> bool {
    line.trim_start().starts_with("{\"_meta\"")
}

/// Records of one JSONL file with the 1-based line number of each.
#[derive(Debug, Clone)]
pub struct Jsonl<T> {
    pub meta: Option<Meta>,
    pub records: Vec<(usize, T)>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Jsonl<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut meta = None;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err =
            |e: serde_json::Error| Error::Parse { path: path.into(), line: line_no, message: e.to_string() };
        if is_meta_line(&line) {
            if meta.is_some() || !records.is_empty() {
                return Err(Error::Parse {
                    path: path.into(),
                    line: line_no,
                    message: "meta record must be the first line".into(),
                });
            }
            let parsed: MetaLine = serde_json::from_str(&line).map_err(parse_err)?;
            meta = Some(parsed.meta);
            continue;
        }
        records.push((line_no, serde_json::from_str(&line).map_err(parse_err)?));
    }
    Ok(Jsonl { meta, records })
}

pub fn write_jsonl<'a, T, I>(path: &Path, meta: Option<&Meta>, records: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    if let Some(meta) = meta {
        writeln!(out, "{}", meta.to_line()).map_err(io_err)?;
    }
    for record in records {
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Load a dataset. Its name comes from the meta record, else the file stem.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file: Jsonl<Instance> = read_jsonl(path)?;
    if file.records.is_empty() {
        return Err(Error::Empty { path: path.into() });
    }
    for (line, instance) in &file.records {
        instance.validate().map_err(|e| Error::Parse { path: path.into(), line: *line, message: e.to_string() })?;
    }
    let name = file.meta.and_then(|m| m.dataset).unwrap_or_else(|| file_stem(path));
    let instances = file.records.into_iter().map(|(_, i)| i).collect();
    Dataset::from_instances(name, instances).map_err(|source| Error::Invalid { path: path.into(), source })
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_dataset_with_meta(dataset, path, Meta::new("dataset"))
}

pub fn write_dataset_with_meta(dataset: &Dataset, path: &Path, mut meta: Meta) -> Result<()> {
    meta.dataset = Some(dataset.name().into());
    write_jsonl(path, Some(&meta), dataset.instances())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarLine {
    group_id: String,
    paraphrases: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sidecar {
    pub paraphrases: BTreeMap<String, Vec<String>>,
    /// Group ids present in the file but not in the dataset; skipped.
    pub unknown_groups: Vec<String>,
}

/// Load `{group_id, paraphrases}` lines. Repeated ids append in file order.
pub fn load_paraphrase_sidecar(path: &Path, dataset: &Dataset) -> Result<Sidecar> {
    let file: Jsonl<SidecarLine> = read_jsonl(path)?;
    let mut sidecar = Sidecar::default();
    for (line, entry) in file.records {
        if dataset.group(&entry.group_id).is_none() {
            warn!("{}:{line}: unknown group_id {:?}, skipped", path.display(), entry.group_id);
            sidecar.unknown_groups.push(entry.group_id);
            continue;
        }
        sidecar.paraphrases.entry(entry.group_id).or_default().extend(entry.paraphrases);
    }
    Ok(sidecar)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub group_id: String,
    pub variant_id: String,
    pub model: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub group_id: String,
    pub variant_id: String,
    pub score: u8,
}

pub fn read_predictions(path: &Path) -> Result<Jsonl<Prediction>> {
    read_jsonl(path)
}

pub fn read_scores(path: &Path) -> Result<Jsonl<ScoreRecord>> {
    let file: Jsonl<ScoreRecord> = read_jsonl(path)?;
    if let Some((line, _)) = file.records.iter().find(|(_, r)| r.score > 1) {
        return Err(Error::Parse { path: path.into(), line: *line, message: "score must be 0 or 1".into() });
    }
    Ok(file)
}
